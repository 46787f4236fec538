//! Hierarchical message passing over the per-scale lead-lag graphs.
//!
//! Node features at scale `s` are stored as `[N^s * P^s, d]` with row
//! `group * P^s + patch`. Coarse messages reach variates by duplication:
//! a gather that copies each group's message to its member variates and to
//! every fine patch the coarse patch covers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decay::{dense_adjacency, EdgePlan};
use crate::hierarchy::ScaleHierarchy;
use crate::leadlag::{InitialGraph, ScaleGraph};
use crate::tensor::{Array, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Identity => x,
        }
    }
}

/// Constant index maps between scale 0 and each coarser scale.
#[derive(Debug, Clone)]
pub struct HmpPlan {
    pub variates: usize,
    pub fine_patches: usize,
    pub rows: Vec<usize>,
    /// Per coarse scale: fine row -> coarse row.
    dup: Vec<Arc<[usize]>>,
    /// Per coarse scale: `1 / |v_s|` for every coarse row, as `[rows, 1]`.
    inv_size: Vec<Array>,
    /// Per coarse scale: pooling weight `1 / (|v_s| r_s)` for every fine row.
    pool_weight: Vec<Array>,
    fine_rows: Arc<[usize]>,
}

impl HmpPlan {
    pub fn new(hierarchy: &ScaleHierarchy) -> Self {
        let n = hierarchy.num_variates();
        let p0 = hierarchy.patch_count(0);
        let fine_rows: Arc<[usize]> = (0..n * p0).collect();
        let mut plan = Self {
            variates: n,
            fine_patches: p0,
            rows: (0..hierarchy.num_scales())
                .map(|s| hierarchy.groups(s) * hierarchy.patch_count(s))
                .collect(),
            dup: vec![Arc::from(Vec::new())],
            inv_size: vec![Array::zeros(vec![0])],
            pool_weight: vec![Array::zeros(vec![0])],
            fine_rows,
        };
        for s in 1..hierarchy.num_scales() {
            let ps = hierarchy.patch_count(s);
            let ratio = p0 / ps;
            let labels = hierarchy.direct_assign(s).labels();
            let sizes = hierarchy.group_sizes(s);
            let dup: Arc<[usize]> = (0..n)
                .flat_map(|v| (0..p0).map(move |q| labels[v] * ps + q / ratio))
                .collect();
            let inv: Vec<f64> = (0..hierarchy.groups(s))
                .flat_map(|g| std::iter::repeat_n(1.0 / sizes[g] as f64, ps))
                .collect();
            let pool: Vec<f64> = (0..n)
                .flat_map(|v| std::iter::repeat_n(1.0 / (sizes[labels[v]] * ratio) as f64, p0))
                .collect();
            plan.dup.push(dup);
            plan.inv_size.push(Array::new(vec![inv.len(), 1], inv).expect("column"));
            plan.pool_weight.push(Array::from_vec(pool));
        }
        plan
    }

    pub fn num_scales(&self) -> usize {
        self.rows.len()
    }

    /// Copies coarse rows of scale `s` onto their fine rows.
    pub fn duplicate<'t>(&self, s: usize, coarse: Var<'t>) -> Result<Var<'t>> {
        coarse.gather_rows(self.dup[s].clone())
    }

    /// Mean of fine rows over member variates and covered patches.
    pub fn pool<'t>(&self, s: usize, fine: Var<'t>) -> Result<Var<'t>> {
        let w = fine.tape().constant(self.pool_weight[s].clone());
        fine.edge_aggregate(w, self.fine_rows.clone(), self.dup[s].clone(), self.rows[s])
    }
}

/// Per-row scaling by a `[rows, 1]` column of constants.
fn scale_rows<'t>(x: Var<'t>, column: &Array) -> Result<Var<'t>> {
    let d = x.shape()[1];
    let rows = column.shape()[0];
    let mut data = Vec::with_capacity(rows * d);
    for &c in column.data() {
        data.extend(std::iter::repeat_n(c, d));
    }
    let c = x.tape().constant(Array::new(vec![rows, d], data)?);
    x.mul(c)
}

/// Weights of one message-passing layer.
#[derive(Debug, Clone)]
pub struct LayerVars<'t> {
    /// `[d, d]` per scale.
    pub theta: Vec<Var<'t>>,
    /// `[2d, d]` per scale.
    pub theta_update: Vec<Var<'t>>,
}

/// Message into every scale-0 node, `[N * P^0, d]`.
pub fn aggregate<'t>(
    features: &[Var<'t>],
    weights: &[Var<'t>],
    edges: &[EdgePlan],
    plan: &HmpPlan,
    theta: &[Var<'t>],
    act: Activation,
) -> Result<Var<'t>> {
    let mut m: Option<Var<'t>> = None;
    for s in 0..plan.num_scales() {
        let msg = features[s]
            .matmul(theta[s])?
            .edge_aggregate(weights[s], edges[s].src_nodes.clone(), edges[s].dst_nodes.clone(), plan.rows[s])?;
        let term = if s == 0 {
            act.apply(msg)
        } else {
            let avg = scale_rows(msg, &plan.inv_size[s])?;
            act.apply(plan.duplicate(s, avg)?)
        };
        m = Some(match m {
            None => term,
            Some(acc) => acc.add(term)?,
        });
    }
    Ok(m.expect("at least one scale"))
}

/// Updated features of every scale after one aggregation.
pub fn update<'t>(features: &[Var<'t>], message: Var<'t>, plan: &HmpPlan, theta_update: &[Var<'t>], act: Activation) -> Result<Vec<Var<'t>>> {
    let fine = act.apply(Var::concat(&[features[0], message])?.matmul(theta_update[0])?);
    let mut out = vec![fine];
    for s in 1..plan.num_scales() {
        let pooled = plan.pool(s, fine)?;
        out.push(act.apply(Var::concat(&[features[s], pooled])?.matmul(theta_update[s])?));
    }
    Ok(out)
}

/// Stacked layers with additive skips; returns the final scale-0 features.
pub fn forward_stack<'t>(
    initial: &[Var<'t>],
    weights: &[Var<'t>],
    edges: &[EdgePlan],
    plan: &HmpPlan,
    layers: &[LayerVars<'t>],
    act: Activation,
) -> Result<Var<'t>> {
    if layers.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "forward_stack",
            detail: "need at least one layer".into(),
        });
    }
    let mut h = initial.to_vec();
    for layer in layers {
        let m = aggregate(&h, weights, edges, plan, &layer.theta, act)?;
        let updated = update(&h, m, plan, &layer.theta_update, act)?;
        h = updated.iter().zip(&h).map(|(u, prev)| u.add(*prev)).collect::<Result<_>>()?;
    }
    Ok(h[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleWork {
    pub scale: usize,
    pub groups: usize,
    pub patches: usize,
    pub nodes: usize,
    pub pairs: usize,
    pub edges: usize,
    /// `K * P^s * |pairs|`.
    pub bound: usize,
    pub exceeds_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkReport {
    pub scales: Vec<ScaleWork>,
    pub total_nodes: usize,
    pub total_edges: usize,
    /// Mean number of children per coarse group.
    pub mean_fanout: Option<f64>,
    /// Closed-form edge count `K * L * k^3 / (k - 1) * (N - 1/k)` with `L = P^0`.
    pub predicted_edges: Option<f64>,
}

impl WorkReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("scale groups patches nodes pairs edges bound flag\n");
        for s in &self.scales {
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {}\n",
                s.scale,
                s.groups,
                s.patches,
                s.nodes,
                s.pairs,
                s.edges,
                s.bound,
                if s.exceeds_bound { "EXCEEDS" } else { "ok" }
            ));
        }
        out.push_str(&format!("total_nodes {}\ntotal_edges {}\n", self.total_nodes, self.total_edges));
        if let (Some(k), Some(e)) = (self.mean_fanout, self.predicted_edges) {
            out.push_str(&format!("mean_fanout {k:.3}\npredicted_edges {e:.1}\n"));
        }
        out
    }
}

pub fn count_edges_and_work(graph: &InitialGraph, hierarchy: &ScaleHierarchy, k_lags: usize) -> WorkReport {
    let scales: Vec<ScaleWork> = graph
        .scales
        .iter()
        .map(|g| {
            let bound = k_lags * g.patches * g.pairs.len();
            ScaleWork {
                scale: g.scale,
                groups: g.groups,
                patches: g.patches,
                nodes: g.groups * g.patches,
                pairs: g.pairs.len(),
                edges: g.edge_count(),
                bound,
                exceeds_bound: g.edge_count() > bound,
            }
        })
        .collect();
    let fanouts: Vec<f64> = (1..hierarchy.num_scales())
        .map(|s| hierarchy.groups(s - 1) as f64 / hierarchy.groups(s) as f64)
        .collect();
    let mean_fanout = (!fanouts.is_empty()).then(|| fanouts.iter().sum::<f64>() / fanouts.len() as f64);
    let predicted_edges = mean_fanout.filter(|&k| k > 1.0).map(|k| {
        let n = hierarchy.num_variates() as f64;
        let l = hierarchy.patch_count(0) as f64;
        k_lags as f64 * l * k.powi(3) / (k - 1.0) * (n - 1.0 / k)
    });
    WorkReport {
        total_nodes: scales.iter().map(|s| s.nodes).sum(),
        total_edges: scales.iter().map(|s| s.edges).sum(),
        scales,
        mean_fanout,
        predicted_edges,
    }
}

/// Reference for [`aggregate`] without duplication: dense `[N, N, P, P]`
/// adjacencies and an explicit `N P^0 x N^s P^s` assignment-times-patch
/// matrix multiplied against every coarse message. Cost grows with the
/// square of the node count; meant for checking only.
pub fn aggregate_exhaustive(
    features: &[Array],
    weights: &[Vec<f64>],
    graphs: &[ScaleGraph],
    hierarchy: &ScaleHierarchy,
    theta: &[Array],
    act: Activation,
) -> Array {
    let n = hierarchy.num_variates();
    let p0 = hierarchy.patch_count(0);
    let d = theta[0].shape()[1];
    let mut out = vec![0.0; n * p0 * d];
    for s in 0..hierarchy.num_scales() {
        let (ns, ps) = (hierarchy.groups(s), hierarchy.patch_count(s));
        let din = features[s].shape()[1];
        // H theta
        let mut ht = vec![0.0; ns * ps * d];
        for r in 0..ns * ps {
            for c in 0..d {
                ht[r * d + c] = (0..din).map(|k| features[s].at2(r, k) * theta[s].at2(k, c)).sum();
            }
        }
        let a = dense_adjacency(&graphs[s], &weights[s]);
        let mut msg = vec![0.0; ns * ps * d];
        for i in 0..ns {
            for j in 0..ns {
                for q in 0..ps {
                    for m in 0..ps {
                        let w = a.data()[((i * ns + j) * ps + q) * ps + m];
                        if w != 0.0 {
                            for c in 0..d {
                                msg[(j * ps + m) * d + c] += w * ht[(i * ps + q) * d + c];
                            }
                        }
                    }
                }
            }
        }
        let assign = hierarchy.direct_assign(s);
        let sizes = assign.group_sizes();
        let ratio = p0 / ps;
        for v in 0..n {
            for q in 0..p0 {
                for c in 0..d {
                    let mut acc = 0.0;
                    for g in 0..ns {
                        for m in 0..ps {
                            let e = if assign.labels()[v] == g && q / ratio == m { 1.0 } else { 0.0 };
                            let scale = if s == 0 { 1.0 } else { 1.0 / sizes[g] as f64 };
                            acc += e * scale * msg[(g * ps + m) * d + c];
                        }
                    }
                    out[(v * p0 + q) * d + c] += match act {
                        Activation::Relu => acc.max(0.0),
                        Activation::Identity => acc,
                    };
                }
            }
        }
    }
    Array::new(vec![n * p0, d], out).expect("message shape")
}
