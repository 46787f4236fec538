//! The full forecaster: grouping hierarchy, per-scale lead-lag graphs with
//! decay-aware weights, hierarchical message passing and a flatten-linear
//! head, plus a per-variate linear baseline.

mod checkpoint;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::ParamStore;
pub use train::{
    evaluate, fit, mse_loss, train, write_history, Adam, EpochRecord, Evaluation, Experiment, Metrics, TrainOutcome,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, NormStats};
use crate::decay::{effective_graph, DecayVars, EdgePlan};
use crate::hierarchy::{
    build_hierarchy, dtw_similarity, patchify, Aggregation, ClusterAlgo, HierarchyConfig, HierarchyError, ScaleHierarchy,
};
use crate::hillmp::{count_edges_and_work, forward_stack, Activation, HmpPlan, LayerVars, WorkReport};
use crate::leadlag::{build_initial_graph, pooled_scales, InitialGraph, LagConfig, LeadLagError};
use crate::tensor::{Array, Tape, TensorError, Var};
use params::Initializer;

/// Learning rates searched by default.
pub const LR_GRID: [f64; 4] = [1e-2, 1e-3, 5e-4, 1e-4];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("graph: {0}")]
    LeadLag(#[from] LeadLagError),
    #[error("tensor: {0}")]
    Tensor(#[from] TensorError),
    #[error("non-finite loss {loss} at epoch {epoch}, batch starting at window origin {origin} (learning rate {learning_rate})")]
    NonFinite {
        loss: f64,
        epoch: usize,
        origin: usize,
        learning_rate: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Millgnn,
    /// Shared `Linear(L -> H)` per variate, no graph.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Single grouping scale.
    pub no_ms: bool,
    /// Every admissible upper-triangular edge instead of the top-k lags.
    pub no_init: bool,
    /// Unit edge weights.
    pub no_weight: bool,
    /// Plain graph convolution over the similarity graph.
    pub no_hmp: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.no_ms || self.no_init || self.no_weight || self.no_hmp
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (on, name) in [
            (self.no_ms, "no_ms"),
            (self.no_init, "no_init"),
            (self.no_weight, "no_weight"),
            (self.no_hmp, "no_hmp"),
        ] {
            if on {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_len: usize,
    pub horizon: usize,
    /// Group counts of the coarse scales. `None` divides by four per scale,
    /// one coarse scale per extra patch length.
    pub groups: Option<Vec<usize>>,
    pub patch_len: Vec<usize>,
    pub k_lags: usize,
    pub max_lag: Option<usize>,
    pub normalized_lags: bool,
    pub per_window_lags: bool,
    /// Most training windows used to estimate the frozen lag sets.
    pub lag_windows: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub layers: usize,
    pub activation: Activation,
    pub clustering: ClusterAlgo,
    pub dtw_band: Option<usize>,
    pub quantile: f64,
    pub aggregation: Aggregation,
    pub decay_leak: f64,
    pub ablation: Ablations,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub train_stride: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Millgnn,
            input_len: 96,
            horizon: 24,
            groups: None,
            patch_len: vec![8, 16],
            k_lags: 3,
            max_lag: None,
            normalized_lags: false,
            per_window_lags: false,
            lag_windows: 256,
            hidden: 16,
            embed_dim: 8,
            attn_dim: 8,
            layers: 1,
            activation: Activation::Relu,
            clustering: ClusterAlgo::Spectral,
            dtw_band: None,
            quantile: 0.3,
            aggregation: Aggregation::Sum,
            decay_leak: 0.0,
            ablation: Ablations::default(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            patience: 3,
            train_stride: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Fills derived fields for `n` variates and checks every constraint.
    pub fn resolve(&self, n: usize) -> Result<ModelConfig> {
        let mut c = self.clone();
        let err = |m: String| Err(ModelError::Config(m));
        if c.input_len == 0 || c.horizon == 0 {
            return err("input_len and horizon must be positive".into());
        }
        for (name, v) in [
            ("hidden", c.hidden),
            ("embed_dim", c.embed_dim),
            ("attn_dim", c.attn_dim),
            ("layers", c.layers),
            ("k_lags", c.k_lags),
            ("batch_size", c.batch_size),
            ("train_stride", c.train_stride),
            ("lag_windows", c.lag_windows),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if !(c.learning_rate >= 0.0 && c.learning_rate.is_finite()) {
            return err(format!("learning_rate {} must be finite and non-negative", c.learning_rate));
        }
        if !(c.decay_leak >= 0.0 && c.decay_leak < 1.0) {
            return err(format!("decay_leak {} outside [0, 1)", c.decay_leak));
        }
        if c.patch_len.is_empty() {
            return err("patch_len needs at least one entry".into());
        }
        if c.ablation.no_ms || c.ablation.no_hmp || c.kind == ModelKind::Linear {
            c.patch_len.truncate(1);
            c.groups = Some(Vec::new());
        }
        let groups = match &c.groups {
            Some(g) => g.clone(),
            None => {
                let mut g = Vec::new();
                let mut prev = n;
                for _ in 1..c.patch_len.len() {
                    let next = prev.div_ceil(4);
                    if next >= prev || next == 0 {
                        return err(format!("cannot derive {} coarse scales from {n} variates", c.patch_len.len() - 1));
                    }
                    g.push(next);
                    prev = next;
                }
                g
            }
        };
        if c.kind == ModelKind::Millgnn {
            crate::hierarchy::validate_ladders(n, &groups, &c.patch_len, c.input_len)?;
        }
        c.groups = Some(groups);
        Ok(c)
    }

    pub fn hierarchy_config(&self) -> HierarchyConfig {
        HierarchyConfig {
            groups: self.groups.clone().unwrap_or_default(),
            patch_len: self.patch_len.clone(),
            algo: self.clustering,
            dtw_band: self.dtw_band,
            quantile: self.quantile,
            aggregation: self.aggregation,
            seed: self.seed,
        }
    }

    pub fn lag_config(&self) -> LagConfig {
        LagConfig {
            k: self.k_lags,
            max_lag: self.max_lag,
            normalized: self.normalized_lags,
        }
    }
}

/// Config with one ablation switched on. Accepts `no_ms`, `no_init`,
/// `no_weight`, `no_hmp` (dashes also accepted).
pub fn ablate(config: &ModelConfig, flag: &str) -> Result<ModelConfig> {
    let mut c = config.clone();
    match flag.replace('-', "_").as_str() {
        "no_ms" => c.ablation.no_ms = true,
        "no_init" => c.ablation.no_init = true,
        "no_weight" => c.ablation.no_weight = true,
        "no_hmp" => c.ablation.no_hmp = true,
        other => return Err(ModelError::Config(format!("unknown ablation `{other}`"))),
    }
    Ok(c)
}

/// Symmetric-normalised similarity edges shared by every patch position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnGraph {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
}

impl GcnGraph {
    /// `D^{-1/2} A D^{-1/2}` of a similarity graph (self-loops included),
    /// repeated at each of `patches` positions.
    pub fn from_similarity(d0: &Array, patches: usize) -> Self {
        let n = d0.shape()[0];
        let deg: Vec<f64> = (0..n).map(|i| d0.row(i).iter().sum()).collect();
        let mut g = GcnGraph {
            src: Vec::new(),
            dst: Vec::new(),
            weight: Vec::new(),
        };
        for i in 0..n {
            for j in 0..n {
                let a = d0.at2(i, j);
                if a == 0.0 {
                    continue;
                }
                let w = a / (deg[i] * deg[j]).sqrt();
                for q in 0..patches {
                    g.src.push(i * patches + q);
                    g.dst.push(j * patches + q);
                    g.weight.push(w);
                }
            }
        }
        g
    }
}

/// Data-derived structure of a graph model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub hierarchy: ScaleHierarchy,
    pub graph: InitialGraph,
    pub gcn: Option<GcnGraph>,
}

#[derive(Debug, Clone)]
struct ScaleIdx {
    mlp: [usize; 4],
    decay: [usize; 7],
}

#[derive(Debug, Clone)]
struct Layout {
    scales: Vec<ScaleIdx>,
    /// Per layer: (theta per scale, theta_update per scale).
    layers: Vec<(Vec<usize>, Vec<usize>)>,
    head: [usize; 2],
}

#[derive(Debug, Clone)]
struct Plans {
    edges: Vec<EdgePlan>,
    hmp: HmpPlan,
    gcn: Option<(Arc<[usize]>, Arc<[usize]>, Array)>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    variate_names: Vec<String>,
    norm: NormStats,
    structure: Option<Structure>,
    plans: Option<Plans>,
    layout: Layout,
    params: ParamStore,
}

impl Model {
    /// Builds hierarchy, lag graph and initial parameters from the
    /// normalised training series `[N, T]`.
    pub fn build(config: &ModelConfig, train: &Array, variate_names: Vec<String>, norm: NormStats) -> Result<Model> {
        let n = train.shape()[0];
        if variate_names.len() != n {
            return Err(ModelError::Config(format!("{} names for {n} variates", variate_names.len())));
        }
        let config = config.resolve(n)?;
        let structure = match config.kind {
            ModelKind::Linear => None,
            ModelKind::Millgnn => Some(build_structure(&config, train)?),
        };
        let mut model = Model {
            layout: Layout {
                scales: Vec::new(),
                layers: Vec::new(),
                head: [0, 0],
            },
            params: ParamStore::default(),
            plans: None,
            config,
            variate_names,
            norm,
            structure,
        };
        let (layout, params) = model.init_params();
        model.layout = layout;
        model.params = params;
        model.plans = model.structure.as_ref().map(make_plans);
        Ok(model)
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        variate_names: Vec<String>,
        norm: NormStats,
        structure: Option<Structure>,
        params: ParamStore,
    ) -> Result<Model> {
        let mut model = Model {
            layout: Layout {
                scales: Vec::new(),
                layers: Vec::new(),
                head: [0, 0],
            },
            params: ParamStore::default(),
            plans: structure.as_ref().map(make_plans),
            config,
            variate_names,
            norm,
            structure,
        };
        let (layout, fresh) = model.init_params();
        if fresh.names() != params.names()
            || fresh.values().iter().zip(params.values()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(ModelError::Checkpoint("parameter layout does not match the config".into()));
        }
        model.layout = layout;
        model.params = params;
        Ok(model)
    }

    fn init_params(&self) -> (Layout, ParamStore) {
        let c = &self.config;
        let n = self.variate_names.len();
        let mut init = Initializer::new(c.seed);
        let (d, de, da) = (c.hidden, c.embed_dim, c.attn_dim);
        let mut layout = Layout {
            scales: Vec::new(),
            layers: Vec::new(),
            head: [0, 0],
        };
        match &self.structure {
            None => {
                layout.head = [
                    init.weight("linear.w".into(), c.input_len, c.horizon),
                    init.zeros("linear.b".into(), vec![c.horizon]),
                ];
            }
            Some(st) => {
                let h = &st.hierarchy;
                for s in 0..h.num_scales() {
                    let (ns, ps, p) = (h.groups(s), h.patch_count(s), h.patch_len(s));
                    let mlp = [
                        init.weight(format!("scale{s}.mlp.w1"), p, d),
                        init.zeros(format!("scale{s}.mlp.b1"), vec![d]),
                        init.weight(format!("scale{s}.mlp.w2"), d, d),
                        init.zeros(format!("scale{s}.mlp.b2"), vec![d]),
                    ];
                    let eb = 1.0 / (de as f64).sqrt();
                    let decay = [
                        init.uniform(format!("scale{s}.decay.e_ni"), vec![ns, de], eb),
                        init.uniform(format!("scale{s}.decay.e_ne"), vec![ns, de], eb),
                        init.uniform(format!("scale{s}.decay.e_p"), vec![ps, de], eb),
                        init.weight(format!("scale{s}.decay.w_q"), p, da),
                        init.zeros(format!("scale{s}.decay.b_q"), vec![da]),
                        init.weight(format!("scale{s}.decay.w_k"), p, da),
                        init.zeros(format!("scale{s}.decay.b_k"), vec![da]),
                    ];
                    layout.scales.push(ScaleIdx { mlp, decay });
                }
                for l in 0..c.layers {
                    let theta = (0..h.num_scales())
                        .map(|s| init.weight(format!("layer{l}.scale{s}.theta"), d, d))
                        .collect();
                    let upd = (0..h.num_scales())
                        .map(|s| init.weight(format!("layer{l}.scale{s}.theta_update"), 2 * d, d))
                        .collect();
                    layout.layers.push((theta, upd));
                }
                let p0 = h.patch_count(0);
                layout.head = [
                    init.weight("head.w".into(), p0 * d, c.horizon),
                    init.zeros("head.b".into(), vec![c.horizon]),
                ];
            }
        }
        let _ = n;
        (layout, init.store)
    }

    /// Same structure and parameters under different optimisation or
    /// inference settings. Fields that shape the parameters must match.
    pub fn with_config(&self, config: ModelConfig) -> Result<Model> {
        let mut a = config.clone();
        let b = &self.config;
        a.learning_rate = b.learning_rate;
        a.batch_size = b.batch_size;
        a.epochs = b.epochs;
        a.patience = b.patience;
        a.train_stride = b.train_stride;
        a.per_window_lags = b.per_window_lags;
        if &a != b {
            return Err(ModelError::Config("only training settings and per_window_lags may change".into()));
        }
        let mut m = self.clone();
        m.config = config;
        Ok(m)
    }

    /// Columns `origin .. origin + L` of a normalised `[N, T]` series.
    pub fn input_window(&self, series: &Array, origin: usize) -> Array {
        crate::data::slice_columns(series, origin, origin + self.config.input_len)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variate_names(&self) -> &[String] {
        &self.variate_names
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    pub fn structure(&self) -> Option<&Structure> {
        self.structure.as_ref()
    }

    pub fn hierarchy(&self) -> Option<&ScaleHierarchy> {
        self.structure.as_ref().map(|s| &s.hierarchy)
    }

    pub fn graph(&self) -> Option<&InitialGraph> {
        self.structure.as_ref().map(|s| &s.graph)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_variates(&self) -> usize {
        self.variate_names.len()
    }

    pub fn fingerprint(&self) -> String {
        self.hierarchy().map_or_else(|| "linear".to_string(), ScaleHierarchy::fingerprint)
    }

    pub fn work_report(&self) -> Option<WorkReport> {
        self.structure
            .as_ref()
            .map(|s| count_edges_and_work(&s.graph, &s.hierarchy, self.config.k_lags))
    }

    /// Normalised `[N, H]` forecast for a normalised `[N, L]` window, with
    /// one tape leaf per parameter in `vars`.
    pub fn forward<'t>(&self, tape: &'t Tape, vars: &[Var<'t>], input: &Array) -> Result<Var<'t>> {
        let c = &self.config;
        let n = self.num_variates();
        if input.shape() != [n, c.input_len] {
            return Err(ModelError::Tensor(TensorError::ShapeMismatch {
                op: "forward",
                lhs: input.shape().to_vec(),
                rhs: vec![n, c.input_len],
            }));
        }
        let (Some(st), Some(plans)) = (&self.structure, &self.plans) else {
            let x = tape.constant(input.clone());
            let [w, b] = self.layout.head;
            return Ok(x.matmul(vars[w])?.broadcast_add(vars[b])?);
        };
        let h = &st.hierarchy;
        let series = h.coarsen_series(input)?;
        let window_plans;
        let edges: &[EdgePlan] = if c.per_window_lags {
            let pooled = pooled_scales(h, input)?;
            let mut g = build_initial_graph(h, &[pooled], &c.lag_config())?;
            if c.ablation.no_init {
                g = g.with_all_admissible_edges();
            }
            window_plans = g.scales.iter().map(EdgePlan::new).collect::<Vec<_>>();
            &window_plans
        } else {
            &plans.edges
        };

        let mut feats = Vec::with_capacity(h.num_scales());
        let mut weights = Vec::with_capacity(h.num_scales());
        for s in 0..h.num_scales() {
            let idx = &self.layout.scales[s];
            let patched = patchify(&series[s], h.patch_len(s))?;
            let shape = patched.patches().shape().to_vec();
            let xp = tape.constant(patched.patches().clone());
            let [w1, b1, w2, b2] = idx.mlp;
            let hs = xp
                .reshape(vec![shape[0] * shape[1], shape[2]])?
                .matmul(vars[w1])?
                .broadcast_add(vars[b1])?
                .relu()
                .matmul(vars[w2])?
                .broadcast_add(vars[b2])?;
            feats.push(hs);
            if plans.gcn.is_none() {
                let [e_ni, e_ne, e_p, w_q, b_q, w_k, b_k] = idx.decay.map(|i| vars[i]);
                let dv = DecayVars {
                    e_ni,
                    e_ne,
                    e_p,
                    w_q,
                    b_q,
                    w_k,
                    b_k,
                };
                weights.push(effective_graph(&edges[s], &dv, xp, c.decay_leak, c.ablation.no_weight)?);
            }
        }

        let act = c.activation;
        let final_h = if let Some((src, dst, w)) = &plans.gcn {
            let w = tape.constant(w.clone());
            let rows = plans.hmp.rows[0];
            let mut h0 = feats[0];
            for (theta, upd) in &self.layout.layers {
                let m = act.apply(h0.matmul(vars[theta[0]])?.edge_aggregate(w, src.clone(), dst.clone(), rows)?);
                let next = act.apply(Var::concat(&[h0, m])?.matmul(vars[upd[0]])?);
                h0 = next.add(h0)?;
            }
            h0
        } else {
            let layers: Vec<LayerVars<'t>> = self
                .layout
                .layers
                .iter()
                .map(|(theta, upd)| LayerVars {
                    theta: theta.iter().map(|&i| vars[i]).collect(),
                    theta_update: upd.iter().map(|&i| vars[i]).collect(),
                })
                .collect();
            forward_stack(&feats, &weights, edges, &plans.hmp, &layers, act)?
        };
        let p0 = h.patch_count(0);
        let [hw, hb] = self.layout.head;
        Ok(final_h
            .reshape(vec![n, p0 * c.hidden])?
            .matmul(vars[hw])?
            .broadcast_add(vars[hb])?)
    }

    /// Normalised forecast with parameters held constant.
    pub fn predict_normalized(&self, input: &Array) -> Result<Array> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self.params.values().iter().map(|a| tape.constant(a.clone())).collect();
        Ok(self.forward(&tape, &vars, input)?.to_array())
    }

    /// Forecast in original units from the last `L` raw steps `[N, L]`.
    pub fn forecast(&self, raw_input: &Array) -> Result<Array> {
        let x = self.norm.apply(raw_input);
        Ok(self.norm.invert(&self.predict_normalized(&x)?))
    }

    /// Effective edge weights of one normalised window, per scale.
    pub fn edge_weights(&self, input: &Array) -> Result<Vec<Vec<f64>>> {
        let (Some(st), Some(plans)) = (&self.structure, &self.plans) else {
            return Ok(Vec::new());
        };
        if plans.gcn.is_some() {
            return Ok(Vec::new());
        }
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self.params.values().iter().map(|a| tape.constant(a.clone())).collect();
        let h = &st.hierarchy;
        let series = h.coarsen_series(input)?;
        let mut out = Vec::new();
        for s in 0..h.num_scales() {
            let idx = &self.layout.scales[s];
            let xp = tape.constant(patchify(&series[s], h.patch_len(s))?.patches().clone());
            let [e_ni, e_ne, e_p, w_q, b_q, w_k, b_k] = idx.decay.map(|i| vars[i]);
            let dv = DecayVars {
                e_ni,
                e_ne,
                e_p,
                w_q,
                b_q,
                w_k,
                b_k,
            };
            let w = effective_graph(&plans.edges[s], &dv, xp, self.config.decay_leak, self.config.ablation.no_weight)?;
            out.push(w.to_array().into_data());
        }
        Ok(out)
    }

    /// Edge weights averaged over `inputs`.
    pub fn mean_edge_weights(&self, inputs: &[&Array]) -> Result<Option<Vec<Vec<f64>>>> {
        let mut acc: Option<Vec<Vec<f64>>> = None;
        for x in inputs {
            let w = self.edge_weights(x)?;
            if w.is_empty() {
                return Ok(None);
            }
            match &mut acc {
                None => acc = Some(w),
                Some(a) => {
                    for (sa, sw) in a.iter_mut().zip(&w) {
                        sa.iter_mut().zip(sw).for_each(|(x, y)| *x += y);
                    }
                }
            }
        }
        let k = inputs.len().max(1) as f64;
        Ok(acc.map(|mut a| {
            a.iter_mut().flatten().for_each(|v| *v /= k);
            a
        }))
    }
}

fn build_structure(config: &ModelConfig, train: &Array) -> Result<Structure> {
    let hierarchy = build_hierarchy(train, config.input_len, &config.hierarchy_config())?;
    let t = train.shape()[1];
    let l = config.input_len;
    if t < l {
        return Err(ModelError::Config(format!("training series of {t} steps is shorter than L = {l}")));
    }
    let origins = t - l + 1;
    let count = origins.min(config.lag_windows);
    let pooled: Vec<Vec<Array>> = (0..count)
        .map(|k| {
            let origin = if count == 1 { 0 } else { k * (origins - 1) / (count - 1) };
            pooled_scales(&hierarchy, &crate::data::slice_columns(train, origin, origin + l))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut graph = build_initial_graph(&hierarchy, &pooled, &config.lag_config())?;
    if config.ablation.no_init {
        graph = graph.with_all_admissible_edges();
    }
    let gcn = if config.ablation.no_hmp {
        let (d0, _) = dtw_similarity(train, config.dtw_band, config.quantile)?;
        Some(GcnGraph::from_similarity(&d0, hierarchy.patch_count(0)))
    } else {
        None
    };
    Ok(Structure { hierarchy, graph, gcn })
}

fn make_plans(st: &Structure) -> Plans {
    Plans {
        edges: st.graph.scales.iter().map(EdgePlan::new).collect(),
        hmp: HmpPlan::new(&st.hierarchy),
        gcn: st.gcn.as_ref().map(|g| {
            (
                Arc::from(g.src.clone()),
                Arc::from(g.dst.clone()),
                Array::from_vec(g.weight.clone()),
            )
        }),
    }
}

/// Mean over the head's output of every parameter is not needed; this
/// exposes the flatten-linear head on its own for testing.
pub fn predict_head<'t>(features: Var<'t>, weight: Var<'t>, bias: Var<'t>, variates: usize) -> Result<Var<'t>> {
    let width = features.value().len() / variates.max(1);
    Ok(features.reshape(vec![variates, width])?.matmul(weight)?.broadcast_add(bias)?)
}
