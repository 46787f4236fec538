//! Multiple grouping scales over the variates.
//!
//! Scale 0 keeps every variate as its own group. Each coarser scale clusters
//! the groups of the scale below by their similarity graph and sums (or
//! averages) their series. Every scale also carries its own patch length.

mod cluster;
mod dtw;

pub use cluster::{cluster_scale, ClusterAlgo};
pub use dtw::dtw_distance;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::Array;

/// Series longer than this are strided before DTW.
pub const DTW_DOWNSAMPLE_ABOVE: usize = 20_000;
pub const DTW_DOWNSAMPLE_STRIDE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 variates to build a similarity graph, got {0}")]
    TooFewVariates(usize),
    #[error("quantile must lie in (0, 1), got {0}")]
    Quantile(f64),
    #[error("patch length {patch} does not divide series length {len}")]
    PatchLength { patch: usize, len: usize },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid hierarchy configuration: {0}")]
    Config(String),
}

/// How member series are combined into a group series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

/// Membership of each finer group in a coarser group, i.e. a binary
/// assignment matrix with exactly one 1 per row stored as labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    groups: usize,
}

impl Assignment {
    /// Panics if a label is out of range or a group is empty.
    pub fn new(labels: Vec<usize>, groups: usize) -> Self {
        Self::try_new(labels, groups).expect("valid assignment")
    }

    pub fn try_new(labels: Vec<usize>, groups: usize) -> Result<Self, HierarchyError> {
        let mut seen = vec![false; groups];
        for &l in &labels {
            if l >= groups {
                return Err(HierarchyError::Config(format!(
                    "label {l} out of range for {groups} groups"
                )));
            }
            seen[l] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(HierarchyError::Config(format!("group {g} is empty")));
        }
        Ok(Self { labels, groups })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            groups: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == group).collect()
    }

    /// Dense `rows x groups` 0/1 matrix.
    pub fn matrix(&self) -> Array {
        let mut m = Array::zeros(vec![self.rows(), self.groups]);
        for (i, &l) in self.labels.iter().enumerate() {
            m.data_mut()[i * self.groups + l] = 1.0;
        }
        m
    }

    /// Composition `self` then `next`: the matrix product of the two.
    pub fn then(&self, next: &Assignment) -> Result<Assignment, HierarchyError> {
        if next.rows() != self.groups {
            return Err(HierarchyError::Shape {
                op: "compose",
                detail: format!("{} groups feed {} rows", self.groups, next.rows()),
            });
        }
        Ok(Assignment {
            labels: self.labels.iter().map(|&l| next.labels[l]).collect(),
            groups: next.groups,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Group counts N^1.. for the coarse scales; empty means a single scale.
    #[serde(default)]
    pub groups: Vec<usize>,
    /// Patch length per scale, scale 0 first.
    pub patch_len: Vec<usize>,
    #[serde(default)]
    pub algo: ClusterAlgo,
    /// Sakoe-Chiba band; `None` uses 10% of the series length.
    #[serde(default)]
    pub dtw_band: Option<usize>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub seed: u64,
}

fn default_quantile() -> f64 {
    0.3
}

impl HierarchyConfig {
    pub fn single_scale(patch_len: usize) -> Self {
        Self {
            groups: Vec::new(),
            patch_len: vec![patch_len],
            algo: ClusterAlgo::Spectral,
            dtw_band: None,
            quantile: default_quantile(),
            aggregation: Aggregation::Sum,
            seed: 0,
        }
    }

    pub fn num_scales(&self) -> usize {
        self.groups.len() + 1
    }
}

/// Checks the patch and group ladders against `n` variates and lookback `lookback`.
pub fn validate_ladders(n: usize, groups: &[usize], patch_len: &[usize], lookback: usize) -> Result<(), HierarchyError> {
    if patch_len.len() != groups.len() + 1 {
        return Err(HierarchyError::Config(format!(
            "{} patch lengths given for {} scales",
            patch_len.len(),
            groups.len() + 1
        )));
    }
    let mut prev = n;
    for &g in groups {
        if g == 0 || g >= prev {
            return Err(HierarchyError::Config(format!(
                "group counts must strictly decrease from {n} variates, got {groups:?}"
            )));
        }
        prev = g;
    }
    for (s, &p) in patch_len.iter().enumerate() {
        if p == 0 || lookback % p != 0 {
            return Err(HierarchyError::PatchLength { patch: p, len: lookback });
        }
        if s > 0 {
            let p0 = patch_len[0];
            if p < patch_len[s - 1] || p % p0 != 0 {
                return Err(HierarchyError::Config(format!(
                    "patch lengths must be non-decreasing multiples of {p0}, got {patch_len:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Similarity and grouped series per scale, available when the hierarchy
/// was built from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGraphs {
    /// D^0 is binary; coarser graphs hold edge counts between groups.
    pub similarity: Vec<Array>,
    /// Grouped training series X^s, one row per group.
    pub series: Vec<Array>,
    /// True when DTW ran on a strided copy of the training series.
    pub dtw_downsampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleHierarchy {
    n_variates: usize,
    lookback: usize,
    assignments: Vec<Assignment>,
    direct: Vec<Assignment>,
    patch_len: Vec<usize>,
    aggregation: Aggregation,
    graphs: Option<ScaleGraphs>,
}

impl ScaleHierarchy {
    /// Hierarchy from explicit assignments S^1..S^{S-1}.
    pub fn from_assignments(
        n_variates: usize,
        assignments: Vec<Assignment>,
        patch_len: Vec<usize>,
        lookback: usize,
        aggregation: Aggregation,
    ) -> Result<Self, HierarchyError> {
        let groups: Vec<usize> = assignments.iter().map(Assignment::groups).collect();
        validate_ladders(n_variates, &groups, &patch_len, lookback)?;
        let mut direct = vec![Assignment::identity(n_variates)];
        for a in &assignments {
            let next = direct.last().expect("scale 0").then(a)?;
            direct.push(next);
        }
        Ok(Self {
            n_variates,
            lookback,
            assignments,
            direct,
            patch_len,
            aggregation,
            graphs: None,
        })
    }

    pub fn num_scales(&self) -> usize {
        self.patch_len.len()
    }

    pub fn num_variates(&self) -> usize {
        self.n_variates
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    /// S^s for `s` in 1..num_scales.
    pub fn assignment(&self, s: usize) -> &Assignment {
        &self.assignments[s - 1]
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    /// Variate-to-group map at scale `s`; the product S^1 ... S^s.
    pub fn direct_assign(&self, s: usize) -> &Assignment {
        &self.direct[s]
    }

    pub fn groups(&self, s: usize) -> usize {
        self.direct[s].groups()
    }

    pub fn group_sizes(&self, s: usize) -> Vec<usize> {
        self.direct[s].group_sizes()
    }

    pub fn patch_len(&self, s: usize) -> usize {
        self.patch_len[s]
    }

    pub fn patch_lens(&self) -> &[usize] {
        &self.patch_len
    }

    pub fn patch_count(&self, s: usize) -> usize {
        self.lookback / self.patch_len[s]
    }

    /// Parent group at scale `s + 1` of each group at scale `s`, or `None`
    /// at the top scale.
    pub fn parents(&self, s: usize) -> Option<&[usize]> {
        self.assignments.get(s).map(Assignment::labels)
    }

    pub fn graphs(&self) -> Option<&ScaleGraphs> {
        self.graphs.as_ref()
    }

    /// Grouped series X^0..X^{S-1} for a `[N, T]` array.
    pub fn coarsen_series(&self, x0: &Array) -> Result<Vec<Array>, HierarchyError> {
        let mut out = vec![x0.clone()];
        for a in &self.assignments {
            let prev = out.last().expect("scale 0");
            out.push(group_rows(a, prev, self.aggregation)?);
        }
        Ok(out)
    }

    /// Stable digest of the structure, used to match checkpoints to data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_variates as u64).to_le_bytes());
        h.update((self.lookback as u64).to_le_bytes());
        for p in &self.patch_len {
            h.update((*p as u64).to_le_bytes());
        }
        for a in &self.assignments {
            h.update((a.groups() as u64).to_le_bytes());
            for &l in a.labels() {
                h.update((l as u64).to_le_bytes());
            }
        }
        h.update([self.aggregation as u8]);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// TOML listing of each scale's groups and patch layout.
    pub fn export_text(&self, variate_names: &[String]) -> String {
        #[derive(Serialize)]
        struct Scale {
            index: usize,
            groups: usize,
            patch_len: usize,
            patch_count: usize,
            group_sizes: Vec<usize>,
            membership: Vec<usize>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            variates: &'a [String],
            dtw_downsampled: bool,
            scale: Vec<Scale>,
        }
        let doc = Doc {
            variates: variate_names,
            dtw_downsampled: self.graphs.as_ref().is_some_and(|g| g.dtw_downsampled),
            scale: (0..self.num_scales())
                .map(|s| Scale {
                    index: s,
                    groups: self.groups(s),
                    patch_len: self.patch_len(s),
                    patch_count: self.patch_count(s),
                    group_sizes: self.group_sizes(s),
                    membership: self.direct[s].labels().to_vec(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("hierarchy serializes")
    }
}

/// Sums (or averages) rows of `x` per group of `a`.
fn group_rows(a: &Assignment, x: &Array, agg: Aggregation) -> Result<Array, HierarchyError> {
    if x.ndim() != 2 || x.shape()[0] != a.rows() {
        return Err(HierarchyError::Shape {
            op: "coarsen",
            detail: format!("assignment has {} rows, series shape {:?}", a.rows(), x.shape()),
        });
    }
    let t = x.shape()[1];
    let mut out = Array::zeros(vec![a.groups(), t]);
    for (i, &g) in a.labels().iter().enumerate() {
        let src = x.row(i);
        let dst = &mut out.data_mut()[g * t..(g + 1) * t];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    if agg == Aggregation::Mean {
        for (g, size) in a.group_sizes().into_iter().enumerate() {
            for v in &mut out.data_mut()[g * t..(g + 1) * t] {
                *v /= size as f64;
            }
        }
    }
    Ok(out)
}

/// Lower quantile: the order statistic at `floor(q * (m - 1))`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[(q * (sorted.len() - 1) as f64).floor() as usize]
}

/// Binary DTW similarity graph over the rows of `series` (`[N, T]`).
///
/// A pair is connected when its DTW distance is strictly below the
/// `quantile_q` quantile of all off-diagonal distances. The diagonal is 1.
pub fn build_similarity_graph(series: &Array, band: usize, quantile_q: f64) -> Result<Array, HierarchyError> {
    if series.ndim() != 2 {
        return Err(HierarchyError::Shape {
            op: "similarity",
            detail: format!("expected [N, T], got {:?}", series.shape()),
        });
    }
    let n = series.shape()[0];
    if n < 2 {
        return Err(HierarchyError::TooFewVariates(n));
    }
    if !(quantile_q > 0.0 && quantile_q < 1.0) {
        return Err(HierarchyError::Quantile(quantile_q));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dist: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(series.row(i), series.row(j), band))
        .collect::<Result<_, _>>()?;
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = quantile(&sorted, quantile_q);
    let mut d = Array::zeros(vec![n, n]);
    for i in 0..n {
        d.data_mut()[i * n + i] = 1.0;
    }
    for (&(i, j), &dij) in pairs.iter().zip(&dist) {
        if dij < threshold {
            d.data_mut()[i * n + j] = 1.0;
            d.data_mut()[j * n + i] = 1.0;
        }
    }
    Ok(d)
}

/// One coarsening step: `D_s = S^T D S` and `X_s = S^T X` (or the group mean).
pub fn coarsen(
    assignment: &Assignment,
    d_prev: &Array,
    x_prev: &Array,
    agg: Aggregation,
) -> Result<(Array, Array), HierarchyError> {
    let n = assignment.rows();
    if d_prev.shape() != [n, n] {
        return Err(HierarchyError::Shape {
            op: "coarsen",
            detail: format!("assignment has {n} rows, graph shape {:?}", d_prev.shape()),
        });
    }
    let k = assignment.groups();
    let labels = assignment.labels();
    let mut d = Array::zeros(vec![k, k]);
    for i in 0..n {
        for j in 0..n {
            d.data_mut()[labels[i] * k + labels[j]] += d_prev.at2(i, j);
        }
    }
    let x = group_rows(assignment, x_prev, agg)?;
    Ok((d, x))
}

/// Series split into equal non-overlapping patches, `[N, P, p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedSeries {
    patches: Array,
}

impl PatchedSeries {
    pub fn patches(&self) -> &Array {
        &self.patches
    }

    pub fn patch_count(&self) -> usize {
        self.patches.shape()[1]
    }

    pub fn patch_len(&self) -> usize {
        self.patches.shape()[2]
    }

    /// Back to `[N, L]`.
    pub fn unpatchify(&self) -> Array {
        let s = self.patches.shape();
        self.patches.reshaped(vec![s[0], s[1] * s[2]]).expect("same size")
    }

    /// Mean of each patch, `[N, P]`.
    pub fn pooled(&self) -> Array {
        let s = self.patches.shape();
        let p = s[2];
        let data = self
            .patches
            .data()
            .chunks(p)
            .map(|c| c.iter().sum::<f64>() / p as f64)
            .collect();
        Array::new(vec![s[0], s[1]], data).expect("pooled shape")
    }
}

pub fn patchify(x: &Array, patch_len: usize) -> Result<PatchedSeries, HierarchyError> {
    if x.ndim() != 2 {
        return Err(HierarchyError::Shape {
            op: "patchify",
            detail: format!("expected [N, L], got {:?}", x.shape()),
        });
    }
    let (n, l) = (x.shape()[0], x.shape()[1]);
    if patch_len == 0 || l % patch_len != 0 {
        return Err(HierarchyError::PatchLength { patch: patch_len, len: l });
    }
    let patches = x.reshaped(vec![n, l / patch_len, patch_len]).expect("divisible");
    Ok(PatchedSeries { patches })
}

/// D^0 for a training series `[N, T]`, striding long series before DTW.
/// `band` defaults to 10% of the (possibly strided) length. The flag reports
/// whether striding happened.
pub fn dtw_similarity(train: &Array, band: Option<usize>, quantile_q: f64) -> Result<(Array, bool), HierarchyError> {
    if train.ndim() != 2 {
        return Err(HierarchyError::Shape {
            op: "similarity",
            detail: format!("expected [N, T], got {:?}", train.shape()),
        });
    }
    let (n, t) = (train.shape()[0], train.shape()[1]);
    let downsampled = t > DTW_DOWNSAMPLE_ABOVE;
    let series = if downsampled {
        let cols: Vec<usize> = (0..t).step_by(DTW_DOWNSAMPLE_STRIDE).collect();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            let row = train.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Array::new(vec![n, cols.len()], data).expect("strided shape")
    } else {
        train.clone()
    };
    let len = series.shape()[1];
    let band = match band {
        Some(b) if downsampled => b.div_ceil(DTW_DOWNSAMPLE_STRIDE),
        Some(b) => b,
        None => (len / 10).max(1),
    };
    Ok((build_similarity_graph(&series, band, quantile_q)?, downsampled))
}

/// Builds the full hierarchy from the normalised training series `[N, T]`.
pub fn build_hierarchy(
    train: &Array,
    lookback: usize,
    config: &HierarchyConfig,
) -> Result<ScaleHierarchy, HierarchyError> {
    if train.ndim() != 2 {
        return Err(HierarchyError::Shape {
            op: "build_hierarchy",
            detail: format!("expected [N, T], got {:?}", train.shape()),
        });
    }
    let n = train.shape()[0];
    validate_ladders(n, &config.groups, &config.patch_len, lookback)?;
    if config.groups.is_empty() {
        return ScaleHierarchy::from_assignments(n, Vec::new(), config.patch_len.clone(), lookback, config.aggregation);
    }

    let (d0, downsampled) = dtw_similarity(train, config.dtw_band, config.quantile)?;

    let mut similarity = vec![d0];
    let mut series = vec![train.clone()];
    let mut assignments = Vec::new();
    for (s, &k) in config.groups.iter().enumerate() {
        let d_prev = similarity.last().expect("scale 0");
        let a = cluster_scale(k, d_prev, config.algo, config.seed.wrapping_add(s as u64))?;
        let (d, x) = coarsen(&a, d_prev, series.last().expect("scale 0"), config.aggregation)?;
        similarity.push(d);
        series.push(x);
        assignments.push(a);
    }
    let mut h = ScaleHierarchy::from_assignments(n, assignments, config.patch_len.clone(), lookback, config.aggregation)?;
    h.graphs = Some(ScaleGraphs {
        similarity,
        series,
        dtw_downsampled: downsampled,
    });
    Ok(h)
}
