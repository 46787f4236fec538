//! Initial lead-lag graphs from FFT cross-correlation of patch-pooled series.
//!
//! Nodes are patches of groups. An edge `(i, n) -> (j, m)` says patch `n` of
//! group `i` leads patch `m` of group `j` by `m - n` patches.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{patchify, HierarchyError, ScaleHierarchy};
use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum LeadLagError {
    #[error("cross-correlation of empty series")]
    EmptySeries,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("top-k needs k >= 1")]
    ZeroK,
    #[error("max lag {max_lag} exceeds {len} - 1")]
    MaxLag { max_lag: usize, len: usize },
    #[error("no windows to estimate lags from")]
    NoWindows,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("graph export failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Circular cross-correlation `R(tau) = (1/P) sum_t x(t) y(t + tau)` for
/// `tau = 0..P`, computed as `(1/P) IFFT(FFT(y) * conj(FFT(x)))`.
pub fn xcorr_fft(x: &[f64], y: &[f64]) -> Result<Vec<f64>, LeadLagError> {
    if x.len() != y.len() {
        return Err(LeadLagError::LengthMismatch(x.len(), y.len()));
    }
    let p = x.len();
    if p == 0 {
        return Err(LeadLagError::EmptySeries);
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    let mut fx: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut fy: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    let mut prod: Vec<Complex<f64>> = fy.iter().zip(&fx).map(|(a, b)| a * b.conj()).collect();
    inv.process(&mut prod);
    // rustfft's inverse is unnormalised, hence the extra 1/P
    let scale = 1.0 / (p * p) as f64;
    Ok(prod.iter().map(|c| c.re * scale).collect())
}

/// Centred cross-correlation used for lag detection; optionally divided by
/// the product of standard deviations (Pearson-style).
pub fn lag_coefficients(x: &[f64], y: &[f64], normalized: bool) -> Result<Vec<f64>, LeadLagError> {
    let center = |s: &[f64]| -> Vec<f64> {
        let m = s.iter().sum::<f64>() / s.len().max(1) as f64;
        s.iter().map(|v| v - m).collect()
    };
    let (cx, cy) = (center(x), center(y));
    let mut r = xcorr_fft(&cx, &cy)?;
    if normalized {
        let sd = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
        let denom = sd(&cx) * sd(&cy);
        if denom > 0.0 {
            r.iter_mut().for_each(|v| *v /= denom);
        } else {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSet {
    pub src: usize,
    pub dst: usize,
    /// Selected lags, ordered by descending coefficient.
    pub lags: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Fewer admissible lags than requested.
    pub short: bool,
}

impl LagSet {
    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }
}

/// The `k` lags in `[0, max_lag]` with the largest coefficients; ties go to
/// the smaller lag.
pub fn select_topk_lags(coefficients: &[f64], k: usize, max_lag: usize) -> Result<(Vec<usize>, Vec<f64>, bool), LeadLagError> {
    if k == 0 {
        return Err(LeadLagError::ZeroK);
    }
    if coefficients.is_empty() || max_lag >= coefficients.len() {
        return Err(LeadLagError::MaxLag {
            max_lag,
            len: coefficients.len(),
        });
    }
    let mut order: Vec<usize> = (0..=max_lag).collect();
    order.sort_by(|&a, &b| coefficients[b].total_cmp(&coefficients[a]).then(a.cmp(&b)));
    let short = order.len() < k;
    order.truncate(k);
    let coefs = order.iter().map(|&l| coefficients[l]).collect();
    Ok((order, coefs, short))
}

/// Ordered group pairs at scale `s` that share a parent at `s + 1` (all
/// pairs at the top scale), plus every self-pair, in lexicographic order.
pub fn candidate_pairs(hierarchy: &ScaleHierarchy, s: usize) -> Vec<(usize, usize)> {
    let n = hierarchy.groups(s);
    let parents = hierarchy.parents(s);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let keep = i == j || parents.is_none_or(|p| p[i] == p[j]);
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagConfig {
    /// Lags kept per pair.
    pub k: usize,
    /// Largest admissible lag per scale; `None` means `floor(P^s / 2)`.
    #[serde(default)]
    pub max_lag: Option<usize>,
    /// Pearson-normalise coefficients before ranking.
    #[serde(default)]
    pub normalized: bool,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_lag: None,
            normalized: false,
        }
    }
}

impl LagConfig {
    pub fn max_lag_for(&self, patches: usize) -> usize {
        self.max_lag.unwrap_or(patches / 2).min(patches.saturating_sub(1))
    }
}

/// Edges of one scale stored as parallel index arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGraph {
    pub scale: usize,
    pub groups: usize,
    pub patches: usize,
    pub max_lag: usize,
    pub pairs: Vec<(usize, usize)>,
    /// One per pair, aligned with `pairs`.
    pub lag_sets: Vec<LagSet>,
    /// Pair index of every edge.
    pub edge_pair: Vec<usize>,
    pub edge_src_patch: Vec<usize>,
    pub edge_dst_patch: Vec<usize>,
}

impl ScaleGraph {
    pub fn edge_count(&self) -> usize {
        self.edge_pair.len()
    }

    pub fn edge_lag(&self, e: usize) -> usize {
        self.edge_dst_patch[e] - self.edge_src_patch[e]
    }

    /// Flattened node index `group * P + patch` of each edge's source.
    pub fn src_nodes(&self) -> Arc<[usize]> {
        (0..self.edge_count())
            .map(|e| self.pairs[self.edge_pair[e]].0 * self.patches + self.edge_src_patch[e])
            .collect()
    }

    pub fn dst_nodes(&self) -> Arc<[usize]> {
        (0..self.edge_count())
            .map(|e| self.pairs[self.edge_pair[e]].1 * self.patches + self.edge_dst_patch[e])
            .collect()
    }

    /// Position of each edge inside a `[pairs, P, P]` block tensor.
    pub fn block_positions(&self) -> Arc<[usize]> {
        let p = self.patches;
        (0..self.edge_count())
            .map(|e| self.edge_pair[e] * p * p + self.edge_src_patch[e] * p + self.edge_dst_patch[e])
            .collect()
    }

    /// Static cross-correlation coefficient behind each edge.
    pub fn edge_coefficients(&self) -> Vec<f64> {
        (0..self.edge_count())
            .map(|e| {
                let set = &self.lag_sets[self.edge_pair[e]];
                let lag = self.edge_lag(e);
                set.lags
                    .iter()
                    .position(|&l| l == lag)
                    .map_or(f64::NAN, |k| set.coefficients[k])
            })
            .collect()
    }

    fn push_pair_edges(&mut self, pair: usize, lags: &[usize]) {
        let Some(&max) = lags.iter().max() else {
            return;
        };
        let mut sorted = lags.to_vec();
        sorted.sort_unstable();
        for n in 0..self.patches.saturating_sub(max) {
            for &tau in &sorted {
                self.edge_pair.push(pair);
                self.edge_src_patch.push(n);
                self.edge_dst_patch.push(n + tau);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialGraph {
    pub scales: Vec<ScaleGraph>,
}

impl InitialGraph {
    pub fn edge_counts(&self) -> Vec<usize> {
        self.scales.iter().map(ScaleGraph::edge_count).collect()
    }

    pub fn total_edges(&self) -> usize {
        self.edge_counts().iter().sum()
    }

    /// Replaces every pair's edges with all upper-triangular patch pairs
    /// with lag up to the scale's max lag.
    pub fn with_all_admissible_edges(&self) -> InitialGraph {
        let scales = self
            .scales
            .iter()
            .map(|g| {
                let mut out = ScaleGraph {
                    edge_pair: Vec::new(),
                    edge_src_patch: Vec::new(),
                    edge_dst_patch: Vec::new(),
                    ..g.clone()
                };
                for pair in 0..g.pairs.len() {
                    for n in 0..g.patches {
                        for m in n..g.patches.min(n + g.max_lag + 1) {
                            out.edge_pair.push(pair);
                            out.edge_src_patch.push(n);
                            out.edge_dst_patch.push(m);
                        }
                    }
                }
                out
            })
            .collect();
        InitialGraph { scales }
    }

    /// Line-delimited JSON, one record per edge. `weights`, when given,
    /// holds one value per edge per scale.
    pub fn write_edges<W: Write>(&self, mut w: W, weights: Option<&[Vec<f64>]>) -> Result<(), LeadLagError> {
        #[derive(Serialize)]
        struct Record {
            scale: usize,
            src_group: usize,
            dst_group: usize,
            src_patch: usize,
            dst_patch: usize,
            lag: usize,
            static_coefficient: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            weight: Option<f64>,
        }
        for (s, g) in self.scales.iter().enumerate() {
            let coefs = g.edge_coefficients();
            for e in 0..g.edge_count() {
                let (i, j) = g.pairs[g.edge_pair[e]];
                let rec = Record {
                    scale: g.scale,
                    src_group: i,
                    dst_group: j,
                    src_patch: g.edge_src_patch[e],
                    dst_patch: g.edge_dst_patch[e],
                    lag: g.edge_lag(e),
                    static_coefficient: if coefs[e].is_finite() { coefs[e] } else { 0.0 },
                    weight: weights.map(|ws| ws[s][e]),
                };
                serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Patch-mean series per scale for one `[N, L]` window.
pub fn pooled_scales(hierarchy: &ScaleHierarchy, window: &Array) -> Result<Vec<Array>, LeadLagError> {
    let series = hierarchy.coarsen_series(window)?;
    series
        .iter()
        .enumerate()
        .map(|(s, x)| Ok(patchify(x, hierarchy.patch_len(s))?.pooled()))
        .collect()
}

/// Builds the initial graph from per-window pooled series (see
/// [`pooled_scales`]). Coefficients are averaged over windows before lag
/// selection; a single window gives the per-input graph.
pub fn build_initial_graph(
    hierarchy: &ScaleHierarchy,
    pooled_windows: &[Vec<Array>],
    config: &LagConfig,
) -> Result<InitialGraph, LeadLagError> {
    if pooled_windows.is_empty() {
        return Err(LeadLagError::NoWindows);
    }
    if config.k == 0 {
        return Err(LeadLagError::ZeroK);
    }
    let mut scales = Vec::with_capacity(hierarchy.num_scales());
    for s in 0..hierarchy.num_scales() {
        let patches = hierarchy.patch_count(s);
        let max_lag = config.max_lag_for(patches);
        let pairs = candidate_pairs(hierarchy, s);
        let coefs: Vec<Vec<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| -> Result<Vec<f64>, LeadLagError> {
                let mut acc = vec![0.0; patches];
                for w in pooled_windows {
                    let r = lag_coefficients(w[s].row(i), w[s].row(j), config.normalized)?;
                    acc.iter_mut().zip(&r).for_each(|(a, v)| *a += v);
                }
                let inv = 1.0 / pooled_windows.len() as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
                Ok(acc)
            })
            .collect::<Result<_, _>>()?;
        let mut graph = ScaleGraph {
            scale: s,
            groups: hierarchy.groups(s),
            patches,
            max_lag,
            pairs: pairs.clone(),
            lag_sets: Vec::with_capacity(pairs.len()),
            edge_pair: Vec::new(),
            edge_src_patch: Vec::new(),
            edge_dst_patch: Vec::new(),
        };
        for (p, (&(i, j), c)) in pairs.iter().zip(&coefs).enumerate() {
            let (lags, coefficients, short) = select_topk_lags(c, config.k, max_lag)?;
            graph.push_pair_edges(p, &lags);
            graph.lag_sets.push(LagSet {
                src: i,
                dst: j,
                lags,
                coefficients,
                short,
            });
        }
        scales.push(graph);
    }
    Ok(InitialGraph { scales })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{Aggregation, Assignment};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn time_domain(x: &[f64], y: &[f64]) -> Vec<f64> {
        let p = x.len();
        (0..p)
            .map(|tau| (0..p).map(|t| x[t] * y[(t + tau) % p]).sum::<f64>() / p as f64)
            .collect()
    }

    #[test]
    fn autocorrelation_peaks_at_zero() {
        let x = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let r = xcorr_fft(&x, &x).unwrap();
        let arg = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(arg, 0);
    }

    #[test]
    fn circular_shift_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..16).map(|t| x[(t + 16 - 3) % 16]).collect();
        let r = xcorr_fft(&x, &y).unwrap();
        let arg = (0..16).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(arg, 3);
    }

    #[test]
    fn fft_matches_time_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..32).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = (0..32).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let fast = xcorr_fft(&x, &y).unwrap();
        let slow = time_domain(&x, &y);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "{a} vs {b}");
        }
        assert!(xcorr_fft(&[], &[]).is_err());
        assert!(xcorr_fft(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn topk_selection() {
        let (lags, coefs, short) = select_topk_lags(&[0.1, 0.9, 0.9, 0.2], 2, 3).unwrap();
        assert_eq!(lags, vec![1, 2]);
        assert_eq!(coefs, vec![0.9, 0.9]);
        assert!(!short);
        let (lags, _, short) = select_topk_lags(&[0.1, 0.9, 0.9, 0.2], 4, 3).unwrap();
        assert_eq!(lags.len(), 4);
        assert!(!short);
        // k = P with the default half-length lag bound
        let (lags, _, short) = select_topk_lags(&[0.1, 0.9, 0.9, 0.2], 4, 2).unwrap();
        assert_eq!(lags, vec![1, 2, 0]);
        assert!(short);
        let (lags, _, short) = select_topk_lags(&[0.1, 0.9, 0.3, 0.2], 4, 1).unwrap();
        assert_eq!(lags, vec![1, 0]);
        assert!(short);
        assert!(select_topk_lags(&[0.1], 0, 0).is_err());
    }

    fn two_level() -> ScaleHierarchy {
        // groups {0,1,2} and {3,4} under one top group
        let s1 = Assignment::new(vec![0, 0, 0, 1, 1], 2);
        ScaleHierarchy::from_assignments(5, vec![s1], vec![1, 2], 8, Aggregation::Sum).unwrap()
    }

    #[test]
    fn candidate_pair_counts() {
        let h = two_level();
        let p0 = candidate_pairs(&h, 0);
        let cross = p0.iter().filter(|(i, j)| i != j).count();
        assert_eq!(cross, 3 * 2 + 2);
        assert_eq!(p0.len(), 8 + 5);
        let top = candidate_pairs(&h, 1);
        assert_eq!(top, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn edges_follow_lag_rule() {
        let mut g = ScaleGraph {
            scale: 0,
            groups: 1,
            patches: 6,
            max_lag: 3,
            pairs: vec![(0, 0)],
            lag_sets: Vec::new(),
            edge_pair: Vec::new(),
            edge_src_patch: Vec::new(),
            edge_dst_patch: Vec::new(),
        };
        g.push_pair_edges(0, &[2]);
        assert_eq!(g.edge_src_patch, vec![0, 1, 2, 3]);
        assert_eq!(g.edge_dst_patch, vec![2, 3, 4, 5]);
        let mut diag = g.clone();
        diag.edge_pair.clear();
        diag.edge_src_patch.clear();
        diag.edge_dst_patch.clear();
        diag.push_pair_edges(0, &[0]);
        assert_eq!(diag.edge_count(), 6);
        assert!((0..6).all(|e| diag.edge_lag(e) == 0));
    }

    #[test]
    fn built_graph_is_upper_triangular_and_consistent() {
        let h = two_level();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let windows: Vec<Vec<Array>> = (0..3)
            .map(|_| {
                let data = (0..5 * 8).map(|_| rng.random::<f64>()).collect();
                pooled_scales(&h, &Array::new(vec![5, 8], data).unwrap()).unwrap()
            })
            .collect();
        let cfg = LagConfig { k: 2, ..LagConfig::default() };
        let graph = build_initial_graph(&h, &windows, &cfg).unwrap();
        for g in &graph.scales {
            assert!(g.edge_count() <= cfg.k * g.patches * g.pairs.len());
            for e in 0..g.edge_count() {
                assert!(g.edge_dst_patch[e] >= g.edge_src_patch[e]);
                let set = &g.lag_sets[g.edge_pair[e]];
                assert!(set.lags.contains(&g.edge_lag(e)));
                assert!(g.edge_src_patch[e] < g.patches - set.max_lag());
            }
        }
        let dense = graph.with_all_admissible_edges();
        assert!(dense.total_edges() > graph.total_edges());
        let mut buf = Vec::new();
        graph.write_edges(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), graph.total_edges());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(first["lag"].is_u64());
    }
}
