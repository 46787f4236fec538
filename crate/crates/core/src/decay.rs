//! Decay-aware edge weights for one scale's initial graph.
//!
//! Each edge `(i, n) -> (j, m)` gets
//! `relu(exp(-beta_e * delta) - (1 - alpha) * exp(-beta_i * delta))` where
//! `delta = m - n`, the rates come from learned group and patch-position
//! embeddings, and `alpha` is attention over the current input patches.
//!
//! Rates and attention are softmaxes over target patches of each candidate
//! pair block. Row `n` only sees targets `m <= n + max_lag`, so no weight
//! depends on inputs more than `max_lag` patches beyond its source.

use std::sync::Arc;

use crate::leadlag::ScaleGraph;
use crate::tensor::{Array, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Index structures for evaluating weights on a fixed edge set.
#[derive(Debug, Clone)]
pub struct EdgePlan {
    pub groups: usize,
    pub patches: usize,
    pub max_lag: usize,
    pair_src: Arc<[usize]>,
    pair_dst: Arc<[usize]>,
    /// Row-major `[pairs, P, P]` admissibility of each target.
    block_mask: Vec<bool>,
    positions: Arc<[usize]>,
    expand: Arc<[usize]>,
    pub src_nodes: Arc<[usize]>,
    pub dst_nodes: Arc<[usize]>,
    /// Lag of each edge in patches.
    pub delta: Array,
}

impl EdgePlan {
    pub fn new(graph: &ScaleGraph) -> Self {
        let p = graph.patches;
        let pairs = graph.pairs.len();
        let mut row_mask = vec![false; p * p];
        for n in 0..p {
            for m in 0..p.min(n + graph.max_lag + 1) {
                row_mask[n * p + m] = true;
            }
        }
        let block_mask = (0..pairs).flat_map(|_| row_mask.iter().copied()).collect();
        let delta = Array::from_vec((0..graph.edge_count()).map(|e| graph.edge_lag(e) as f64).collect());
        Self {
            groups: graph.groups,
            patches: p,
            max_lag: graph.max_lag,
            pair_src: graph.pairs.iter().map(|&(i, _)| i).collect(),
            pair_dst: graph.pairs.iter().map(|&(_, j)| j).collect(),
            block_mask,
            positions: graph.block_positions(),
            expand: (0..graph.groups).flat_map(|g| std::iter::repeat_n(g, p)).collect(),
            src_nodes: graph.src_nodes(),
            dst_nodes: graph.dst_nodes(),
            delta,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.positions.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pair_src.len()
    }

    /// `[pairs, P, P]` masked softmax of `emb_i emb_j^T * scale` per pair.
    pub fn block_softmax<'t>(&self, emb: Var<'t>, scale: f64) -> Result<Var<'t>> {
        let shape = emb.shape();
        if shape.len() != 3 || shape[0] != self.groups || shape[1] != self.patches {
            return Err(TensorError::ShapeMismatch {
                op: "block_softmax",
                lhs: shape,
                rhs: vec![self.groups, self.patches],
            });
        }
        let src = emb.gather_rows(self.pair_src.clone())?;
        let dst = emb.gather_rows(self.pair_dst.clone())?.transpose()?;
        let scores = src.batch_matmul(dst)?;
        let scores = if scale == 1.0 { scores } else { scores.scale(scale) };
        scores.masked_softmax(&self.block_mask)
    }

    /// Block softmax read off at the edges, `[E]`.
    pub fn edge_softmax<'t>(&self, emb: Var<'t>, scale: f64) -> Result<Var<'t>> {
        self.block_softmax(emb, scale)?.gather_flat(self.positions.clone())
    }

    /// `E_N (+) E_P`: group embedding broadcast over patch positions.
    pub fn combine<'t>(&self, group_emb: Var<'t>, patch_emb: Var<'t>) -> Result<Var<'t>> {
        let d = *group_emb.shape().last().unwrap_or(&0);
        group_emb
            .gather_rows(self.expand.clone())?
            .reshape(vec![self.groups, self.patches, d])?
            .broadcast_add(patch_emb)
    }
}

/// Excitatory and inhibitory rates at each edge.
pub fn rates<'t>(plan: &EdgePlan, e_ne: Var<'t>, e_ni: Var<'t>, e_p: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let e_e = plan.combine(e_ne, e_p)?;
    let e_i = plan.combine(e_ni, e_p)?;
    Ok((plan.edge_softmax(e_e, 1.0)?, plan.edge_softmax(e_i, 1.0)?))
}

/// Affine projection of `[N, P, p]` patches to `[N, P, d]`.
pub fn project<'t>(patched: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let s = patched.shape();
    let d = w.shape()[1];
    patched
        .reshape(vec![s[0] * s[1], s[2]])?
        .matmul(w)?
        .broadcast_add(b)?
        .reshape(vec![s[0], s[1], d])
}

/// Attention of each source patch over target patches, read at the edges.
pub fn input_attention<'t>(
    plan: &EdgePlan,
    patched: Var<'t>,
    w_q: Var<'t>,
    b_q: Var<'t>,
    w_k: Var<'t>,
    b_k: Var<'t>,
) -> Result<Var<'t>> {
    let d_a = w_q.shape()[1];
    if d_a == 0 {
        return Err(TensorError::InvalidArgument {
            op: "input_attention",
            detail: "attention width must be positive".into(),
        });
    }
    let q = project(patched, w_q, b_q)?;
    let k = project(patched, w_k, b_k)?;
    let src = q.gather_rows(plan.pair_src.clone())?;
    let dst = k.gather_rows(plan.pair_dst.clone())?.transpose()?;
    src.batch_matmul(dst)?
        .scale(1.0 / (d_a as f64).sqrt())
        .masked_softmax(&plan.block_mask)?
        .gather_flat(plan.positions.clone())
}

/// `relu(exp(-beta_e delta) - (1 - alpha) exp(-beta_i delta))`, with an
/// optional negative-side slope `leak` in place of the hard floor.
pub fn decay_weights<'t>(beta_e: Var<'t>, beta_i: Var<'t>, alpha: Var<'t>, delta: Var<'t>, leak: f64) -> Result<Var<'t>> {
    let excite = beta_e.mul(delta)?.neg().exp();
    let inhibit = beta_i.mul(delta)?.neg().exp();
    let keep = alpha.neg().add_scalar(1.0);
    let pre = excite.sub(keep.mul(inhibit)?)?;
    Ok(if leak == 0.0 { pre.relu() } else { pre.leaky_relu(leak) })
}

/// Trainable leaves of one scale's weighting.
#[derive(Debug, Clone, Copy)]
pub struct DecayVars<'t> {
    pub e_ni: Var<'t>,
    pub e_ne: Var<'t>,
    pub e_p: Var<'t>,
    pub w_q: Var<'t>,
    pub b_q: Var<'t>,
    pub w_k: Var<'t>,
    pub b_k: Var<'t>,
}

/// Effective edge weights `C (.) Lambda` for one window, `[E]`. With
/// `disabled` every edge keeps weight 1.
pub fn effective_graph<'t>(plan: &EdgePlan, vars: &DecayVars<'t>, patched: Var<'t>, leak: f64, disabled: bool) -> Result<Var<'t>> {
    let tape = patched.tape();
    if disabled {
        return Ok(tape.constant(Array::filled(vec![plan.edge_count()], 1.0)));
    }
    let (beta_e, beta_i) = rates(plan, vars.e_ne, vars.e_ni, vars.e_p)?;
    let alpha = input_attention(plan, patched, vars.w_q, vars.b_q, vars.w_k, vars.b_k)?;
    let delta = tape.constant(plan.delta.clone());
    decay_weights(beta_e, beta_i, alpha, delta, leak)
}

/// Dense `[N, N, P, P]` adjacency holding `weights` at the graph's edges.
pub fn dense_adjacency(graph: &ScaleGraph, weights: &[f64]) -> Array {
    let (n, p) = (graph.groups, graph.patches);
    let mut a = Array::zeros(vec![n, n, p, p]);
    for e in 0..graph.edge_count() {
        let (i, j) = graph.pairs[graph.edge_pair[e]];
        let idx = ((i * n + j) * p + graph.edge_src_patch[e]) * p + graph.edge_dst_patch[e];
        a.data_mut()[idx] += weights[e];
    }
    a
}
