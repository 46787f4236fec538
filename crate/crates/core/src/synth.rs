//! Synthetic multivariate series with planted lead-lag structure.

use std::f64::consts::TAU;
use std::io::Write;

use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MtsFrame;
use crate::leadlag::InitialGraph;
use crate::tensor::Array;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("dependency graph has a cycle through variate {0}")]
    Cyclic(usize),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

/// `follower(t) += gain * leader(t - lag)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub leader: usize,
    pub follower: usize,
    pub lag: usize,
    pub gain: f64,
}

/// Shared lagged driver added to every member of `group`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDriver {
    pub leader: usize,
    pub group: usize,
    pub lag: usize,
    pub gain: f64,
}

/// Sum of sinusoids plus AR(1) noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseFamily {
    pub sinusoids: usize,
    pub period_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Stationary standard deviation of the AR(1) component.
    pub noise_std: f64,
}

impl Default for BaseFamily {
    fn default() -> Self {
        Self {
            sinusoids: 2,
            period_range: (16.0, 96.0),
            amplitude_range: (0.5, 1.0),
            noise_std: 0.5,
        }
    }
}

impl BaseFamily {
    /// Expected variance of one draw.
    pub fn variance(&self) -> f64 {
        let (lo, hi) = self.amplitude_range;
        // E[a^2] for a ~ U[lo, hi], halved for the sine.
        let ea2 = (hi.powi(3) - lo.powi(3)) / (3.0 * (hi - lo).max(f64::MIN_POSITIVE));
        let ea2 = if hi == lo { lo * lo } else { ea2 };
        self.sinusoids as f64 * ea2 / 2.0 + self.noise_std * self.noise_std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub t: usize,
    /// Group label of every variate.
    pub groups: Vec<usize>,
    pub edges: Vec<PlantedEdge>,
    pub group_drivers: Vec<GroupDriver>,
    pub base: BaseFamily,
    /// Stationary standard deviation of each follower's own noise.
    pub noise_std: f64,
    pub ar_coef: f64,
    /// AR(1) coefficient of follower noise; 0 gives white noise.
    pub follower_ar_coef: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// Independent base signals, no planted structure.
    pub fn empty(n: usize, t: usize, seed: u64) -> Self {
        Self {
            n,
            t,
            groups: vec![0; n],
            edges: Vec::new(),
            group_drivers: Vec::new(),
            base: BaseFamily::default(),
            noise_std: 0.1,
            ar_coef: 0.7,
            follower_ar_coef: 0.7,
            seed,
        }
    }

    /// One leader and one follower at a signal-to-noise ratio `snr`
    /// (follower signal variance over noise variance). The follower's own
    /// noise is white.
    pub fn pair(t: usize, lag: usize, gain: f64, snr: f64, seed: u64) -> Self {
        let mut s = Self::empty(2, t, seed);
        s.edges.push(PlantedEdge {
            leader: 0,
            follower: 1,
            lag,
            gain,
        });
        s.noise_std = (gain * gain * s.base.variance() / snr).sqrt();
        s.follower_ar_coef = 0.0;
        s
    }

    /// Twelve variates in three groups of four. Variates 0 and 8 are free
    /// leaders and the rest of their groups follow them at staggered lags.
    /// Group 1 follows variate 0 as a whole through a shared driver.
    pub fn benchmark(t: usize, seed: u64) -> Self {
        let mut s = Self::empty(12, t, seed);
        s.groups = (0..12).map(|i| i / 4).collect();
        for (f, lag) in [(1, 4), (2, 8), (3, 12)] {
            s.edges.push(PlantedEdge {
                leader: 0,
                follower: f,
                lag,
                gain: 1.0,
            });
        }
        for (f, lag) in [(9, 6), (10, 12), (11, 18)] {
            s.edges.push(PlantedEdge {
                leader: 8,
                follower: f,
                lag,
                gain: 0.8,
            });
        }
        s.group_drivers.push(GroupDriver {
            leader: 0,
            group: 1,
            lag: 16,
            gain: 0.9,
        });
        s.noise_std = 0.3;
        s
    }

    /// Every planted dependency with group drivers expanded to members.
    pub fn expanded_edges(&self) -> Vec<(PlantedEdge, bool)> {
        let mut out: Vec<(PlantedEdge, bool)> = self.edges.iter().map(|e| (*e, false)).collect();
        for d in &self.group_drivers {
            for (v, &g) in self.groups.iter().enumerate() {
                if g == d.group && v != d.leader {
                    out.push((
                        PlantedEdge {
                            leader: d.leader,
                            follower: v,
                            lag: d.lag,
                            gain: d.gain,
                        },
                        true,
                    ));
                }
            }
        }
        out
    }

    /// Checks labels and lags and returns the variates in dependency order.
    pub fn validate(&self) -> Result<Vec<usize>, SynthError> {
        if self.n == 0 || self.t == 0 {
            return Err(SynthError::Invalid("n and t must be positive".into()));
        }
        if self.groups.len() != self.n {
            return Err(SynthError::Invalid(format!("{} group labels for {} variates", self.groups.len(), self.n)));
        }
        if !(self.ar_coef.abs() < 1.0 && self.follower_ar_coef.abs() < 1.0) {
            return Err(SynthError::Invalid(format!(
                "AR coefficients {} and {} must lie in (-1, 1)",
                self.ar_coef, self.follower_ar_coef
            )));
        }
        if !(self.noise_std >= 0.0 && self.base.noise_std >= 0.0) {
            return Err(SynthError::Invalid("noise levels must be non-negative".into()));
        }
        let (lo, hi) = self.base.period_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(SynthError::Invalid(format!("period range ({lo}, {hi})")));
        }
        let mut g = DiGraph::<usize, ()>::new();
        let nodes: Vec<_> = (0..self.n).map(|i| g.add_node(i)).collect();
        for (e, _) in self.expanded_edges() {
            if e.leader >= self.n || e.follower >= self.n {
                return Err(SynthError::Invalid(format!("edge {} -> {} outside 0..{}", e.leader, e.follower, self.n)));
            }
            if e.lag == 0 {
                return Err(SynthError::Invalid(format!("edge {} -> {} has lag 0", e.leader, e.follower)));
            }
            g.add_edge(nodes[e.leader], nodes[e.follower], ());
        }
        toposort(&g, None)
            .map(|order| order.into_iter().map(|v| g[v]).collect())
            .map_err(|c| SynthError::Cyclic(g[c.node_id()]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedLag {
    pub leader: usize,
    pub follower: usize,
    pub lag: usize,
    pub gain: f64,
    pub group_level: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub lags: Vec<PlantedLag>,
    pub groups: Vec<usize>,
}

impl GroundTruth {
    /// `leader,follower,lag,gain,group_level` lines.
    pub fn write_sidecar<W: Write>(&self, writer: W, names: &[String]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["leader", "follower", "lag", "gain", "group_level"]).map_err(io)?;
        for l in &self.lags {
            w.write_record([
                names[l.leader].clone(),
                names[l.follower].clone(),
                l.lag.to_string(),
                l.gain.to_string(),
                l.group_level.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
    }
}

fn ar1(rng: &mut ChaCha8Rng, len: usize, phi: f64, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; len];
    }
    let innov = Normal::new(0.0, std * (1.0 - phi * phi).sqrt()).expect("finite std");
    let mut x = Normal::new(0.0, std).expect("finite std").sample(rng);
    (0..len)
        .map(|_| {
            let out = x;
            x = phi * x + innov.sample(rng);
            out
        })
        .collect()
}

fn base_signal(rng: &mut ChaCha8Rng, len: usize, fam: &BaseFamily, phi: f64) -> Vec<f64> {
    let mut x = ar1(rng, len, phi, fam.noise_std);
    for _ in 0..fam.sinusoids {
        let (lo, hi) = fam.period_range;
        let period = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let (alo, ahi) = fam.amplitude_range;
        let amp = if ahi > alo { rng.random_range(alo..ahi) } else { alo };
        let phase = rng.random_range(0.0..TAU);
        for (t, v) in x.iter_mut().enumerate() {
            *v += amp * (TAU * t as f64 / period + phase).sin();
        }
    }
    x
}

/// Draws the series. Every variate without a parent is an independent base
/// signal; every other one is the gain-weighted sum of its lagged parents
/// plus its own AR(1) noise (`follower_ar_coef`). A burn-in longer than the deepest lag chain
/// is generated and discarded so that no zero padding is visible.
pub fn gen_planted(spec: &PlantedSpec) -> Result<(MtsFrame, GroundTruth), SynthError> {
    let order = spec.validate()?;
    let edges = spec.expanded_edges();
    let mut depth = vec![0usize; spec.n];
    for &v in &order {
        for (e, _) in edges.iter().filter(|(e, _)| e.follower == v) {
            depth[v] = depth[v].max(depth[e.leader] + e.lag);
        }
    }
    let burn = depth.iter().copied().max().unwrap_or(0) + 1;
    let len = spec.t + burn;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // One sub-seed per variate keeps each series independent of the order
    // in which the others are generated.
    let seeds: Vec<u64> = (0..spec.n).map(|_| rng.random()).collect();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); spec.n];
    for &v in &order {
        let mut r = ChaCha8Rng::seed_from_u64(seeds[v]);
        let parents: Vec<&PlantedEdge> = edges.iter().map(|(e, _)| e).filter(|e| e.follower == v).collect();
        series[v] = if parents.is_empty() {
            base_signal(&mut r, len, &spec.base, spec.ar_coef)
        } else {
            let mut x = ar1(&mut r, len, spec.follower_ar_coef, spec.noise_std);
            for e in parents {
                let lead = &series[e.leader];
                for t in e.lag..len {
                    x[t] += e.gain * lead[t - e.lag];
                }
            }
            x
        };
    }
    let data: Vec<f64> = series.iter().flat_map(|s| s[burn..].iter().copied()).collect();
    let values = Array::new(vec![spec.n, spec.t], data).expect("generated shape");
    let names = (0..spec.n).map(|i| format!("v{i}")).collect();
    let frame = MtsFrame::new(values, names).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let truth = GroundTruth {
        lags: edges
            .iter()
            .map(|(e, g)| PlantedLag {
                leader: e.leader,
                follower: e.follower,
                lag: e.lag,
                gain: e.gain,
                group_level: *g,
            })
            .collect(),
        groups: spec.groups.clone(),
    };
    Ok((frame, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recovery {
    pub planted: usize,
    pub recovered: usize,
    /// Non-self lags present in the scale-0 graph.
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
}

/// A planted `(leader, follower, lag)` counts as found when the scale-0 lag
/// set from leader to follower contains the lag. Lags in the truth are in
/// the same units as the graph (patches of the finest scale).
pub fn score_recovery(truth: &GroundTruth, graph: &InitialGraph) -> Recovery {
    let scale0 = graph.scales.first();
    let lag_set = |i: usize, j: usize| {
        scale0.and_then(|g| g.lag_sets.iter().find(|l| l.src == i && l.dst == j))
    };
    let mut recovered = 0;
    for p in &truth.lags {
        if lag_set(p.leader, p.follower).is_some_and(|l| l.lags.contains(&p.lag)) {
            recovered += 1;
        }
    }
    let predicted = scale0.map_or(0, |g| g.lag_sets.iter().filter(|l| l.src != l.dst).map(|l| l.lags.len()).sum());
    let planted = truth.lags.len();
    Recovery {
        planted,
        recovered,
        predicted,
        precision: if predicted == 0 { 0.0 } else { recovered as f64 / predicted as f64 },
        recall: if planted == 0 { 1.0 } else { recovered as f64 / planted as f64 },
    }
}
