//! Embedded oracle suite run by `millgnn selfcheck`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::NormStats;
use crate::decay::{decay_weights, EdgePlan};
use crate::hierarchy::{Aggregation, Assignment, ScaleHierarchy};
use crate::hillmp::{aggregate, aggregate_exhaustive, count_edges_and_work, Activation, HmpPlan, WorkReport};
use crate::leadlag::{build_initial_graph, pooled_scales, xcorr_fft, InitialGraph, LagConfig};
use crate::model::{mse_loss, Model, ModelConfig, ModelError};
use crate::synth::{gen_planted, PlantedSpec};
use crate::tensor::{grad_check_on, Array, GradCheckReport, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelfCheck {
    pub results: Vec<CheckResult>,
    pub work: Option<WorkReport>,
}

impl SelfCheck {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let width = self.results.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for r in &self.results {
            let status = if r.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{status}  {:<width$}  {}", r.name, r.detail);
        }
        if let Some(w) = &self.work {
            s.push_str(&w.to_text());
        }
        s
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// O(P^2) circular cross-correlation `(1/P) sum_t x(t) y(t + tau)`.
pub fn xcorr_time_domain(x: &[f64], y: &[f64]) -> Vec<f64> {
    let p = x.len();
    (0..p)
        .map(|tau| (0..p).map(|t| x[t] * y[(t + tau) % p]).sum::<f64>() / p as f64)
        .collect()
}

/// Largest relative error of the FFT route against the direct sum over
/// `pairs` random pairs at each length in `lengths`.
pub fn fft_oracle_error(pairs: usize, lengths: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let p = lengths[k % lengths.len()];
        let x = random_vec(&mut rng, p);
        let y = random_vec(&mut rng, p);
        let fast = xcorr_fft(&x, &y).expect("non-empty");
        let slow = xcorr_time_domain(&x, &y);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

/// Random hierarchy of `n` variates with `scales` levels.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, n: usize, scales: usize) -> ScaleHierarchy {
    let mut assignments = Vec::new();
    let mut prev = n;
    let mut patch_len = vec![1usize];
    for _ in 1..scales {
        let groups = (prev / 2).max(1);
        if groups >= prev {
            break;
        }
        // every group gets at least one member
        let mut labels: Vec<usize> = (0..prev).map(|i| if i < groups { i } else { rng.random_range(0..groups) }).collect();
        for i in (1..prev).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        assignments.push(Assignment::new(labels, groups));
        patch_len.push(patch_len.last().unwrap() * 2);
        prev = groups;
    }
    let lookback = 4 * patch_len.last().unwrap();
    ScaleHierarchy::from_assignments(n, assignments, patch_len, lookback, Aggregation::Sum).expect("valid hierarchy")
}

/// Sparse duplication aggregation against [`aggregate_exhaustive`] on one
/// random instance; returns the largest absolute difference.
pub fn duplication_oracle_error(rng: &mut ChaCha8Rng, n: usize, scales: usize, k: usize) -> Result<f64, TensorError> {
    let h = random_hierarchy(rng, n, scales);
    let window = Array::new(vec![n, h.lookback()], random_vec(rng, n * h.lookback()))?;
    let pooled = pooled_scales(&h, &window).map_err(|e| TensorError::InvalidArgument {
        op: "duplication_oracle",
        detail: e.to_string(),
    })?;
    let graph = build_initial_graph(&h, &[pooled], &LagConfig { k, ..LagConfig::default() })
        .map_err(|e| TensorError::InvalidArgument {
            op: "duplication_oracle",
            detail: e.to_string(),
        })?;
    let d = 3;
    let plan = HmpPlan::new(&h);
    let edges: Vec<EdgePlan> = graph.scales.iter().map(EdgePlan::new).collect();
    let feats: Vec<Array> = (0..h.num_scales())
        .map(|s| Array::new(vec![plan.rows[s], d], random_vec(rng, plan.rows[s] * d)))
        .collect::<Result<_, _>>()?;
    let weights: Vec<Vec<f64>> = graph
        .scales
        .iter()
        .map(|g| (0..g.edge_count()).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let theta: Vec<Array> = (0..h.num_scales())
        .map(|_| Array::new(vec![d, d], random_vec(rng, d * d)))
        .collect::<Result<_, _>>()?;
    let tape = Tape::new();
    let fv: Vec<Var<'_>> = feats.iter().map(|a| tape.constant(a.clone())).collect();
    let wv: Vec<Var<'_>> = weights.iter().map(|w| tape.constant(Array::from_vec(w.clone()))).collect();
    let tv: Vec<Var<'_>> = theta.iter().map(|a| tape.constant(a.clone())).collect();
    let fast = aggregate(&fv, &wv, &edges, &plan, &tv, Activation::Relu)?.to_array();
    let slow = aggregate_exhaustive(&feats, &weights, &graph.scales, &h, &theta, Activation::Relu);
    Ok(fast.data().iter().zip(slow.data()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Tiny two-scale model with one input window and target:
/// N = 4, L = 16, H = 4, d = d_e = d_a = 3.
pub fn tiny_model(seed: u64) -> Result<(Model, Array, Array), ModelError> {
    let mut spec = PlantedSpec::empty(4, 200, seed);
    spec.groups = vec![0, 0, 1, 1];
    for (f, lag) in [(1, 3), (3, 5)] {
        spec.edges.push(crate::synth::PlantedEdge {
            leader: f - 1,
            follower: f,
            lag,
            gain: 1.0,
        });
    }
    let (frame, _) = gen_planted(&spec).map_err(|e| ModelError::Config(e.to_string()))?;
    let (norm, _) = NormStats::fit(frame.values(), 200)?;
    let x = norm.apply(frame.values());
    let config = ModelConfig {
        input_len: 16,
        horizon: 4,
        groups: Some(vec![2]),
        patch_len: vec![4, 8],
        hidden: 3,
        embed_dim: 3,
        attn_dim: 3,
        k_lags: 2,
        layers: 1,
        seed,
        ..ModelConfig::default()
    };
    let mut model = Model::build(&config, &x, frame.variate_names.clone(), norm)?;
    // Non-zero biases so that their gradients are exercised away from zero.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for (name, v) in model.params().names().to_vec().iter().zip(0..) {
        if name.contains(".b") {
            for x in model.params_mut().values_mut()[v].data_mut() {
                *x = rng.random_range(-0.3..0.3);
            }
        }
    }
    let input = model.input_window(&x, 40);
    let target = crate::data::slice_columns(&x, 56, 60);
    Ok((model, input, target))
}

/// Finite-difference check of every parameter of `model` on one window.
pub fn model_grad_check(
    model: &Model,
    input: &Array,
    target: &Array,
    make_tape: impl Fn() -> Tape,
    tol: f64,
) -> Result<GradCheckReport, TensorError> {
    let f = loss_fn(|tape, vars| {
        let pred = model.forward(tape, vars, input)?;
        Ok(mse_loss(pred, target)?)
    });
    grad_check_on(make_tape, f, model.params().values(), 1e-5, tol)
}

fn loss_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, ModelError>,
{
    f
}

/// `Lambda(0) == alpha` and `Lambda` in `[0, 1]` over a random sweep;
/// returns (largest identity error, count outside the unit interval).
pub fn decay_identity_sweep(points: usize, seed: u64) -> Result<(f64, usize), TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tape = Tape::new();
    let gen = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> { (0..points).map(|_| rng.random_range(lo..hi)).collect() };
    let be = gen(&mut rng, 1e-3, 1.0);
    let bi = gen(&mut rng, 1e-3, 1.0);
    let alpha = gen(&mut rng, 1e-6, 1.0 - 1e-6);
    let delta = gen(&mut rng, 0.0, 64.0);
    let c = |v: &[f64]| tape.constant(Array::from_vec(v.to_vec()));
    let at_zero = decay_weights(c(&be), c(&bi), c(&alpha), c(&vec![0.0; points]), 0.0)?.to_array();
    let identity = at_zero.data().iter().zip(&alpha).fold(0.0f64, |m, (l, a)| m.max((l - a).abs()));
    let swept = decay_weights(c(&be), c(&bi), c(&alpha), c(&delta), 0.0)?.to_array();
    let outside = swept.data().iter().filter(|&&l| !(0.0..=1.0).contains(&l)).count();
    Ok((identity, outside))
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Runs every oracle. `inject_fault` corrupts the exponential's
/// vector-Jacobian product so that the gradient check must fail.
pub fn run_selfcheck(inject_fault: bool) -> SelfCheck {
    let mut results = Vec::new();

    let fft = fft_oracle_error(40, &[8, 16, 32, 64], 11);
    results.push(check("fft_vs_time_domain", fft <= 1e-9, format!("max rel error {fft:.2e}")));

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut dup_worst: f64 = 0.0;
    let mut dup_err = None;
    for k in 0..10 {
        match duplication_oracle_error(&mut rng, 4 + k % 6, 1 + k % 3, 1 + k % 3) {
            Ok(e) => dup_worst = dup_worst.max(e),
            Err(e) => dup_err = Some(e.to_string()),
        }
    }
    results.push(match dup_err {
        Some(e) => check("duplication_vs_exhaustive", false, e),
        None => check("duplication_vs_exhaustive", dup_worst <= 1e-9, format!("max abs error {dup_worst:.2e}")),
    });

    let (identity, outside) = decay_identity_sweep(10_000, 13).unwrap_or((f64::INFINITY, usize::MAX));
    results.push(check(
        "decay_identities",
        identity <= 1e-12 && outside == 0,
        format!("|Lambda(0) - alpha| {identity:.2e}, {outside} outside [0, 1]"),
    ));

    let mut work = None;
    match tiny_model(14) {
        Ok((model, input, target)) => {
            let make: fn() -> Tape = if inject_fault { Tape::with_corrupted_exp_vjp } else { Tape::new };
            match model_grad_check(&model, &input, &target, make, 1e-3) {
                Ok(r) => results.push(check(
                    "gradient_check",
                    r.passed,
                    match &r.non_finite {
                        Some(m) => m.clone(),
                        None => format!("max rel error {:.2e} over {} params", r.max_rel_error(), r.params.len()),
                    },
                )),
                Err(e) => results.push(check("gradient_check", false, e.to_string())),
            }
            if let (Some(g), Some(h)) = (model.graph(), model.hierarchy()) {
                let report = count_edges_and_work(g, h, model.config().k_lags);
                results.push(edge_count_check(g, h, &report));
                work = Some(report);
            }
        }
        Err(e) => results.push(check("gradient_check", false, e.to_string())),
    }
    SelfCheck { results, work }
}

fn edge_count_check(graph: &InitialGraph, h: &ScaleHierarchy, report: &WorkReport) -> CheckResult {
    let nodes_ok = report
        .scales
        .iter()
        .enumerate()
        .all(|(s, w)| w.nodes == h.groups(s) * h.patch_count(s) && w.edges == graph.scales[s].edge_count());
    let ok = nodes_ok && report.total_edges == graph.total_edges();
    check(
        "edge_count_report",
        ok,
        format!("{} nodes, {} edges over {} scales", report.total_nodes, report.total_edges, report.scales.len()),
    )
}
