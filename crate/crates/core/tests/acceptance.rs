//! Acceptance gate. Prints one PASS/FAIL (or SKIP) line per criterion and
//! exits non-zero when any gating criterion fails.

use std::time::Instant;

use millgnn::cli::{execute, Command, TrainArgs, HISTORY_FILE};
use millgnn::data::{load_csv, CsvOptions, MtsFrame, SplitScheme};
use millgnn::decay::{effective_graph, input_attention, DecayVars, EdgePlan};
use millgnn::hierarchy::{patchify, Aggregation, Assignment, ScaleHierarchy};
use millgnn::hillmp::{aggregate, forward_stack, Activation, HmpPlan, LayerVars};
use millgnn::leadlag::{
    build_initial_graph, lag_coefficients, pooled_scales, select_topk_lags, xcorr_fft, InitialGraph, LagConfig,
};
use millgnn::model::{ablate, fit, mse_loss, Model, ModelConfig, ModelKind};
use millgnn::selfcheck::tiny_model;
use millgnn::synth::{gen_planted, score_recovery, GroundTruth, PlantedSpec};
use millgnn::tensor::{grad_check, Array, Tape, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Same allocator as the binary, so timings match the shipped tool.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// 1 ------------------------------------------------------------------------

fn direct_xcorr(x: &[f64], y: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut r = vec![0.0; p];
    for (tau, out) in r.iter_mut().enumerate() {
        for t in 0..p {
            *out += x[t] * y[(t + tau) % p];
        }
        *out /= p as f64;
    }
    r
}

fn fft_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let p = [8, 16, 32, 64][k % 4];
        let x = rand_vec(&mut rng, p);
        let y = rand_vec(&mut rng, p);
        let fast = xcorr_fft(&x, &y).unwrap();
        let slow = direct_xcorr(&x, &y);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    verdict(worst <= 1e-9, format!("200 pairs, max relative error {worst:.2e} (tol 1e-9)"))
}

// 2 ------------------------------------------------------------------------

fn lag_recovery() -> Outcome {
    let (mut top1, mut recovered, mut planted) = (0, 0, 0);
    for trial in 0..100u64 {
        let lag = 1 + (trial % 8) as usize;
        let spec = PlantedSpec::pair(48, lag, 1.0, 10.0, 7000 + trial);
        let (frame, truth) = gen_planted(&spec).unwrap();
        let v = frame.values();
        let coefs = lag_coefficients(v.row(0), v.row(1), false).unwrap();
        let (best, _, _) = select_topk_lags(&coefs, 1, 24).unwrap();
        if best.first() == Some(&lag) {
            top1 += 1;
        }
        let h = ScaleHierarchy::from_assignments(2, Vec::new(), vec![1], 48, Aggregation::Sum).unwrap();
        let pooled = pooled_scales(&h, v).unwrap();
        let g = build_initial_graph(
            &h,
            &[pooled],
            &LagConfig {
                k: 4,
                ..LagConfig::default()
            },
        )
        .unwrap();
        let r = score_recovery(&truth, &g);
        recovered += r.recovered;
        planted += r.planted;
    }
    let recall = recovered as f64 / planted as f64;
    verdict(
        top1 >= 95 && recall >= 0.9,
        format!("top-1 correct {top1}/100 (need 95), recall@4 {recall:.3} (need 0.9)"),
    )
}

// 3 ------------------------------------------------------------------------

fn count_lower(g: &InitialGraph) -> (usize, usize) {
    let mut lower = 0;
    let mut total = 0;
    for s in &g.scales {
        for e in 0..s.edge_count() {
            total += 1;
            if s.edge_dst_patch[e] < s.edge_src_patch[e] {
                lower += 1;
            }
        }
    }
    (lower, total)
}

fn upper_triangularity(graphs: &[InitialGraph]) -> Outcome {
    let (mut lower, mut total) = (0, 0);
    for g in graphs {
        let (l, t) = count_lower(g);
        lower += l;
        total += t;
    }
    verdict(
        lower == 0 && total > 0,
        format!("{} graphs, {total} edges scanned, {lower} with target patch before source", graphs.len()),
    )
}

// 4 ------------------------------------------------------------------------

fn random_assignments(rng: &mut ChaCha8Rng, n: usize, scales: usize) -> Vec<Assignment> {
    let mut out = Vec::new();
    let mut prev = n;
    for _ in 1..scales {
        let groups = rng.random_range(1..prev.max(2)).max(1);
        if groups >= prev {
            break;
        }
        let mut labels: Vec<usize> = (0..prev).map(|i| if i < groups { i } else { rng.random_range(0..groups) }).collect();
        for i in (1..prev).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        out.push(Assignment::new(labels, groups));
        prev = groups;
    }
    out
}

/// Dense reading of the hierarchical aggregation: each scale's adjacency as
/// a full `(N^s P^s) x (N^s P^s)` matrix, and the composed assignment
/// expanded over patches as a full `(N P^0) x (N^s P^s)` matrix.
fn dense_message(
    h: &ScaleHierarchy,
    g: &InitialGraph,
    feats: &[Array],
    weights: &[Vec<f64>],
    theta: &[Array],
) -> Vec<f64> {
    let n = h.num_variates();
    let p0 = h.patch_count(0);
    let d = theta[0].shape()[1];
    let mut out = vec![0.0; n * p0 * d];
    let mut labels: Vec<usize> = (0..n).collect();
    for s in 0..h.num_scales() {
        if s > 0 {
            let a = h.assignment(s).labels();
            labels = labels.iter().map(|&l| a[l]).collect();
        }
        let (ns, ps) = (h.groups(s), h.patch_count(s));
        let rows = ns * ps;
        let mut adj = vec![0.0; rows * rows];
        let sg = &g.scales[s];
        for e in 0..sg.edge_count() {
            let (i, j) = sg.pairs[sg.edge_pair[e]];
            let r = i * ps + sg.edge_src_patch[e];
            let c = j * ps + sg.edge_dst_patch[e];
            adj[c * rows + r] += weights[s][e];
        }
        // Y = A^T (H theta)
        let ht: Vec<f64> = (0..rows * d)
            .map(|k| {
                let (r, c) = (k / d, k % d);
                (0..feats[s].shape()[1]).map(|m| feats[s].at2(r, m) * theta[s].at2(m, c)).sum()
            })
            .collect();
        let mut y = vec![0.0; rows * d];
        for c in 0..rows {
            for r in 0..rows {
                for k in 0..d {
                    y[c * d + k] += adj[c * rows + r] * ht[r * d + k];
                }
            }
        }
        let mut sizes = vec![0usize; ns];
        for &l in &labels {
            sizes[l] += 1;
        }
        let ratio = p0 / ps;
        let mut expand = vec![0.0; n * p0 * rows];
        for v in 0..n {
            for q in 0..p0 {
                let col = labels[v] * ps + q / ratio;
                let avg = if s == 0 { 1.0 } else { 1.0 / sizes[labels[v]] as f64 };
                expand[(v * p0 + q) * rows + col] = avg;
            }
        }
        for r in 0..n * p0 {
            for k in 0..d {
                let v: f64 = (0..rows).map(|c| expand[r * rows + c] * y[c * d + k]).sum();
                out[r * d + k] += v.max(0.0);
            }
        }
    }
    out
}

fn duplication_equivalence(graphs: &mut Vec<InitialGraph>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let d = 4;
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let scales = rng.random_range(1..=3);
        let k = rng.random_range(1..=3);
        let assignments = random_assignments(&mut rng, n, scales);
        let s_count = assignments.len() + 1;
        let patch_len: Vec<usize> = (0..s_count).map(|s| 1 << s).collect();
        let lookback = 4 << (s_count - 1);
        let h = ScaleHierarchy::from_assignments(n, assignments, patch_len, lookback, Aggregation::Sum).unwrap();
        let window = Array::new(vec![n, lookback], rand_vec(&mut rng, n * lookback)).unwrap();
        let g = build_initial_graph(
            &h,
            &[pooled_scales(&h, &window).unwrap()],
            &LagConfig {
                k,
                ..LagConfig::default()
            },
        )
        .unwrap();
        let plan = HmpPlan::new(&h);
        let feats: Vec<Array> = (0..h.num_scales())
            .map(|s| Array::new(vec![plan.rows[s], d], rand_vec(&mut rng, plan.rows[s] * d)).unwrap())
            .collect();
        let weights: Vec<Vec<f64>> = g
            .scales
            .iter()
            .map(|sg| (0..sg.edge_count()).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let theta: Vec<Array> = (0..h.num_scales())
            .map(|_| Array::new(vec![d, d], rand_vec(&mut rng, d * d)).unwrap())
            .collect();
        let tape = Tape::new();
        let edges: Vec<EdgePlan> = g.scales.iter().map(EdgePlan::new).collect();
        let fv: Vec<Var<'_>> = feats.iter().map(|a| tape.constant(a.clone())).collect();
        let wv: Vec<Var<'_>> = weights.iter().map(|w| tape.constant(Array::from_vec(w.clone()))).collect();
        let tv: Vec<Var<'_>> = theta.iter().map(|a| tape.constant(a.clone())).collect();
        let fast = aggregate(&fv, &wv, &edges, &plan, &tv, Activation::Relu).unwrap().to_array();
        let slow = dense_message(&h, &g, &feats, &weights, &theta);
        for (a, b) in fast.data().iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
        graphs.push(g);
    }
    verdict(worst <= 1e-9, format!("50 instances, max abs difference {worst:.2e} (tol 1e-9)"))
}

// 5 ------------------------------------------------------------------------

fn edge_count_linearity(graphs: &mut Vec<InitialGraph>) -> Outcome {
    let (group_size, l) = (4usize, 96usize);
    let d = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut edges = Vec::new();
    let mut cases = Vec::new();
    for n in [32usize, 64, 128, 256] {
        // Fanout-4 tree up to at most 2 top groups, so k stays fixed at
        // every scale.
        let mut assignments = Vec::new();
        let mut prev = n;
        while prev > 2 {
            let groups = prev.div_ceil(group_size);
            assignments.push(Assignment::new((0..prev).map(|i| i / group_size).collect(), groups));
            prev = groups;
        }
        let patch_len = [8, 16, 32, 96, 96][..assignments.len() + 1].to_vec();
        let scales = patch_len.len();
        let h = ScaleHierarchy::from_assignments(n, assignments, patch_len, l, Aggregation::Sum).unwrap();
        let window = Array::new(vec![n, l], rand_vec(&mut rng, n * l)).unwrap();
        let g = build_initial_graph(&h, &[pooled_scales(&h, &window).unwrap()], &LagConfig::default()).unwrap();
        edges.push(g.total_edges());
        let plan = HmpPlan::new(&h);
        let eplans: Vec<EdgePlan> = g.scales.iter().map(EdgePlan::new).collect();
        let feats: Vec<Array> = (0..scales)
            .map(|s| Array::new(vec![plan.rows[s], d], rand_vec(&mut rng, plan.rows[s] * d)).unwrap())
            .collect();
        let weights: Vec<Array> = g.scales.iter().map(|s| Array::filled(vec![s.edge_count()], 0.5)).collect();
        let theta: Vec<Array> = (0..scales).map(|_| Array::new(vec![d, d], rand_vec(&mut rng, d * d)).unwrap()).collect();
        let upd: Vec<Array> = (0..scales).map(|_| Array::new(vec![2 * d, d], rand_vec(&mut rng, 2 * d * d)).unwrap()).collect();
        cases.push((plan, eplans, feats, weights, theta, upd));
        graphs.push(g);
    }
    // Sizes are interleaved over many rounds so every size sees the same
    // allocator and cache state; the minimum per size is kept.
    let mut times = vec![f64::INFINITY; cases.len()];
    for _ in 0..40 {
        for (k, (plan, eplans, feats, weights, theta, upd)) in cases.iter().enumerate() {
            let tape = Tape::new();
            let c = |a: &Array| tape.constant(a.clone());
            let fv: Vec<Var<'_>> = feats.iter().map(c).collect();
            let wv: Vec<Var<'_>> = weights.iter().map(c).collect();
            let layers = vec![LayerVars {
                theta: theta.iter().map(c).collect(),
                theta_update: upd.iter().map(c).collect(),
            }];
            let t0 = Instant::now();
            let out = forward_stack(&fv, &wv, eplans, plan, &layers, Activation::Relu).unwrap();
            std::hint::black_box(out.value().len());
            times[k] = times[k].min(t0.elapsed().as_secs_f64());
        }
    }
    let growth: Vec<f64> = edges.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    let slow: Vec<f64> = times.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = growth.iter().all(|g| (1.8..=2.2).contains(g)) && slow.iter().all(|r| *r < 2.5);
    verdict(
        ok,
        format!(
            "edges {edges:?}, growth {:?} (need [1.8, 2.2]), time ratio {:?} (need < 2.5), best times {:?} ms",
            growth.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>(),
            slow.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            times.iter().map(|t| format!("{:.3}", t * 1e3)).collect::<Vec<_>>()
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn whole_model_gradient() -> Outcome {
    let (model, input, target) = tiny_model(606).unwrap();
    let h = model.hierarchy().unwrap();
    assert_eq!((model.num_variates(), model.config().input_len, model.config().horizon, h.num_scales()), (4, 16, 4, 2));
    let f = loss_fn(|tape, vars| {
        let pred = model.forward(tape, vars, &input).map_err(|e| TensorError::InvalidArgument {
            op: "forward",
            detail: e.to_string(),
        })?;
        mse_loss(pred, &target)
    });
    let report = grad_check(f, model.params().values(), 1e-5, 1e-3).unwrap();
    let names = model.params().names();
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let failing: Vec<&str> = report.params.iter().filter(|p| !p.passed).map(|p| names[p.index].as_str()).collect();
    verdict(
        report.passed,
        format!(
            "{} parameter groups, worst {} at {:.2e} (tol 1e-3), {} kink coordinates skipped{}",
            report.params.len(),
            names[worst.index],
            worst.max_rel_error,
            report.kink_skipped(),
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    )
}

fn loss_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    f
}

// 7 ------------------------------------------------------------------------

fn decay_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    // Lambda(0) == alpha through the full weighting path on random parameters.
    let (model, input, _) = tiny_model(707).unwrap();
    let h = model.hierarchy().unwrap();
    let g = model.graph().unwrap();
    let mut identity: f64 = 0.0;
    let mut zero_edges = 0;
    for s in 0..h.num_scales() {
        let plan = EdgePlan::new(&g.scales[s]);
        let tape = Tape::new();
        let ps = h.patch_len(s);
        let (ns, np) = (h.groups(s), h.patch_count(s));
        let mk = |rng: &mut ChaCha8Rng, shape: Vec<usize>| {
            let len = shape.iter().product();
            tape.constant(Array::new(shape, rand_vec(rng, len)).unwrap())
        };
        let vars = DecayVars {
            e_ni: mk(&mut rng, vec![ns, 3]),
            e_ne: mk(&mut rng, vec![ns, 3]),
            e_p: mk(&mut rng, vec![np, 3]),
            w_q: mk(&mut rng, vec![ps, 3]),
            b_q: mk(&mut rng, vec![3]),
            w_k: mk(&mut rng, vec![ps, 3]),
            b_k: mk(&mut rng, vec![3]),
        };
        let series = h.coarsen_series(&input).unwrap();
        let patched = tape.constant(patchify(&series[s], ps).unwrap().patches().clone());
        let lambda = effective_graph(&plan, &vars, patched, 0.0, false).unwrap().to_array();
        let alpha = input_attention(&plan, patched, vars.w_q, vars.b_q, vars.w_k, vars.b_k).unwrap().to_array();
        for e in 0..plan.edge_count() {
            if plan.delta.data()[e] == 0.0 {
                zero_edges += 1;
                identity = identity.max((lambda.data()[e] - alpha.data()[e]).abs());
            }
        }
    }
    // Range over a random sweep of the closed form.
    let mut outside = 0;
    for _ in 0..10_000 {
        let be: f64 = rng.random_range(0.0..1.0);
        let bi: f64 = rng.random_range(0.0..1.0);
        let a: f64 = rng.random_range(0.0..1.0);
        let dl: f64 = rng.random_range(0.0..100.0);
        let tape = Tape::new();
        let c = |v: f64| tape.constant(Array::from_vec(vec![v]));
        let l = millgnn::decay::decay_weights(c(be), c(bi), c(a), c(dl), 0.0).unwrap().item();
        let reference = ((-be * dl).exp() - (1.0 - a) * (-bi * dl).exp()).max(0.0);
        if !(0.0..=1.0).contains(&l) || (l - reference).abs() > 1e-12 {
            outside += 1;
        }
    }
    verdict(
        identity <= 1e-12 && outside == 0 && zero_edges > 0,
        format!("{zero_edges} zero-lag edges, max |Lambda(0) - alpha| {identity:.2e}; {outside}/10000 sweep points outside [0, 1]"),
    )
}

// 8 ------------------------------------------------------------------------

/// Shared budget of every model in the end-to-end comparison.
fn benchmark_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_len: 96,
        horizon: 24,
        groups: Some(vec![3]),
        train_stride: 4,
        epochs: 10,
        seed,
        ..ModelConfig::default()
    }
}

fn end_to_end() -> Outcome {
    let names = ["linear", "no_ms", "no_init", "no_weight", "no_hmp"];
    let mut wins = [0usize; 5];
    let mut lines = Vec::new();
    let started = Instant::now();
    for seed in 0..5u64 {
        let (frame, _) = gen_planted(&PlantedSpec::benchmark(4096, seed)).unwrap();
        let base = benchmark_config(seed);
        let full = fit(&frame, &base, SplitScheme::default(), false).unwrap().test.normalized.mse;
        let mut row = vec![format!("full {full:.4}")];
        for (k, name) in names.iter().enumerate() {
            let cfg = if *name == "linear" {
                ModelConfig {
                    kind: ModelKind::Linear,
                    ..base.clone()
                }
            } else {
                ablate(&base, name).unwrap()
            };
            let mse = fit(&frame, &cfg, SplitScheme::default(), false).unwrap().test.normalized.mse;
            if full < mse {
                wins[k] += 1;
            }
            row.push(format!("{name} {mse:.4}"));
        }
        lines.push(format!("seed {seed}: {}", row.join(", ")));
    }
    for l in &lines {
        println!("      {l}");
    }
    let summary: Vec<String> = names.iter().zip(&wins).map(|(n, w)| format!("{n} {w}/5")).collect();
    verdict(
        wins.iter().all(|&w| w >= 4),
        format!(
            "full model wins vs {} (need 4/5 each), {:.0}s",
            summary.join(", "),
            started.elapsed().as_secs_f64()
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn etth1() -> Outcome {
    let Ok(path) = std::env::var("ETTH1_PATH") else {
        return Outcome::Skip("non-gating; set ETTH1_PATH to an ETTh1 CSV to run".into());
    };
    let frame: MtsFrame = match load_csv(
        &path,
        &CsvOptions {
            skip_first_column: true,
            ..CsvOptions::default()
        },
    ) {
        Ok(f) => f,
        Err(e) => return Outcome::Skip(format!("non-gating; cannot read {path}: {e}")),
    };
    let cfg = ModelConfig {
        input_len: 96,
        horizon: 96,
        ..ModelConfig::default()
    };
    match fit(&frame, &cfg, SplitScheme::Ett { steps_per_hour: 1 }, false) {
        Ok(exp) => {
            let mse = exp.test.normalized.mse;
            let ok = (mse - 0.372).abs() <= 0.15 * 0.372;
            Outcome::Skip(format!(
                "non-gating; normalised test MSE {mse:.4} vs target 0.372 +/- 15%: {}",
                if ok { "within" } else { "outside" }
            ))
        }
        Err(e) => Outcome::Skip(format!("non-gating; run failed: {e}")),
    }
}

// 10 -----------------------------------------------------------------------

fn train_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = PlantedSpec::benchmark(900, 3);
    let (frame, _): (MtsFrame, GroundTruth) = gen_planted(&spec).unwrap();
    let data = dir.path().join("data.csv");
    frame.write_csv(std::fs::File::create(&data).unwrap()).unwrap();
    let run = |out: &str| {
        let args = TrainArgs {
            config: None,
            data: Some(data.clone()),
            out: Some(dir.path().join(out)),
            seed: Some(5),
            ablate: Vec::new(),
            per_window_lags: false,
            normalized_metrics: false,
            clustering: None,
            record_time: false,
            overrides: ["model.input_len=32", "model.horizon=8", "model.patch_len=[4, 8]", "model.epochs=3", "model.train_stride=5"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        execute(&Command::Train(args)).unwrap();
        std::fs::read(dir.path().join(out).join(HISTORY_FILE)).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    verdict(
        a == b && !a.is_empty(),
        format!("two seeded runs, history.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() {
    // ACCEPTANCE_ONLY=2,5 limits the run to the listed criteria.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut graphs = Vec::new();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{id:>2}] {name}: {detail}");
    };
    if wanted(1) {
        report(1, "fft-oracle equivalence", fft_equivalence());
    }
    if wanted(2) {
        report(2, "planted-lag recovery", lag_recovery());
    }
    let dup = duplication_equivalence(&mut graphs);
    let lin = edge_count_linearity(&mut graphs);
    // Graphs built by the models of the other checks join the scan.
    for seed in 0..3 {
        let (model, _, _) = tiny_model(seed).unwrap();
        graphs.push(model.graph().unwrap().clone());
        graphs.push(model.graph().unwrap().with_all_admissible_edges());
    }
    let (frame, _) = gen_planted(&PlantedSpec::benchmark(1024, 1)).unwrap();
    let x = frame.values().clone();
    let m = Model::build(&benchmark_config(1), &x, frame.variate_names.clone(), {
        let (n, _) = millgnn::data::NormStats::fit(&x, 1024).unwrap();
        n
    })
    .unwrap();
    graphs.push(m.graph().unwrap().clone());
    report(3, "upper-triangularity", upper_triangularity(&graphs));
    report(4, "duplication equivalence", dup);
    report(5, "edge-count linearity", lin);
    if wanted(6) {
        report(6, "whole-model gradient check", whole_model_gradient());
    }
    if wanted(7) {
        report(7, "decay identities", decay_identities());
    }
    if wanted(8) {
        report(8, "end-to-end synthetic forecasting", end_to_end());
    }
    if wanted(9) {
        report(9, "ETTh1 desk-scale stretch", etth1());
    }
    if wanted(10) {
        report(10, "train determinism", train_determinism());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
