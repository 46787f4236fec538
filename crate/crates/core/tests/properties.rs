use std::sync::Arc;

use millgnn::decay::{decay_weights, EdgePlan};
use millgnn::hierarchy::{coarsen, patchify, Aggregation, Assignment, ScaleHierarchy};
use millgnn::leadlag::{build_initial_graph, pooled_scales, xcorr_fft, LagConfig};
use millgnn::tensor::{grad_check, Array, Tape, TensorError, Var};
use proptest::prelude::*;

fn loss_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    f
}

fn arr(shape: &[usize], data: Vec<f64>) -> Array {
    Array::new(shape.to_vec(), data).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn check(f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>, params: &[Array]) {
    let report = grad_check(f, params, 1e-6, 1e-5).unwrap();
    assert!(report.passed, "{report:?}");
}

fn labels_strategy(max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
    (2..=max_n).prop_flat_map(|n| (Just(n), 1..n)).prop_flat_map(|(n, g)| {
        (Just(n), Just(g), prop::collection::vec(0..g, n)).prop_map(|(n, g, mut labels)| {
            // force every group to be non-empty
            for (i, l) in labels.iter_mut().take(g).enumerate() {
                *l = i;
            }
            (n, g, labels)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matmul_and_bias_vjp(a in values(6), b in values(8), c in values(4)) {
        check(loss_fn(|_, v| v[0].matmul(v[1])?.broadcast_add(v[2])?.square().sum().pipe_ok()),
              &[arr(&[3, 2], a), arr(&[2, 4], b), arr(&[4], c)]);
    }

    #[test]
    fn softmax_exp_mul_vjp(a in values(12), b in values(12)) {
        check(loss_fn(|_, v| v[0].softmax()?.mul(v[1].exp())?.sum().pipe_ok()),
              &[arr(&[3, 4], a), arr(&[3, 4], b)]);
    }

    #[test]
    fn masked_softmax_vjp(a in values(9), w in values(9)) {
        let mask = [true, false, true, true, true, false, false, true, true];
        check(loss_fn(move |t, v| {
            let w = t.constant(arr(&[3, 3], w.clone()));
            v[0].masked_softmax(&mask)?.mul(w)?.sum().pipe_ok()
        }), &[arr(&[3, 3], a)]);
    }

    #[test]
    fn batch_matmul_transpose_vjp(a in values(12), b in values(12)) {
        check(loss_fn(|_, v| {
            let bt = v[1].transpose()?;
            v[0].batch_matmul(bt)?.square().mean().pipe_ok()
        }), &[arr(&[2, 3, 2], a), arr(&[2, 3, 2], b)]);
    }

    #[test]
    fn concat_mean_axis_vjp(a in values(6), b in values(9)) {
        check(loss_fn(|_, v| {
            Var::concat(&[v[0], v[1]])?.mean_axis(0)?.square().sum().pipe_ok()
        }), &[arr(&[3, 2], a), arr(&[3, 3], b)]);
    }

    #[test]
    fn gathers_and_edge_aggregate_vjp(h in values(8), w in prop::collection::vec(0.1f64..1.0, 5)) {
        let src: Arc<[usize]> = Arc::from(vec![0, 1, 2, 3, 1]);
        let dst: Arc<[usize]> = Arc::from(vec![1, 1, 0, 2, 2]);
        check(loss_fn(move |_, v| {
            let rows = v[0].gather_rows(Arc::from(vec![3, 0, 0, 2]))?;
            let agg = rows.edge_aggregate(v[1], src.clone(), dst.clone(), 3)?;
            let picked = agg.flatten().gather_flat(Arc::from(vec![0, 3, 3, 5]))?;
            picked.square().sum().pipe_ok()
        }), &[arr(&[4, 2], h), arr(&[5], w)]);
    }

    #[test]
    fn softmax_rows_sum_to_one(a in values(20)) {
        let t = Tape::new();
        let s = t.constant(arr(&[4, 5], a)).softmax().unwrap().to_array();
        for i in 0..4 {
            let row = s.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn backward_replay_is_bit_identical(a in values(6), b in values(6)) {
        let run = || {
            let t = Tape::new();
            let x = t.param(arr(&[2, 3], a.clone()));
            let y = t.param(arr(&[3, 2], b.clone()));
            let loss = x.matmul(y).unwrap().softmax().unwrap().square().sum();
            let g = t.backward(loss).unwrap();
            (g.get(x).unwrap().clone(), g.get(y).unwrap().clone())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn fft_matches_direct_sum(p in 1usize..=64, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0 };
        let x: Vec<f64> = (0..p).map(|_| next()).collect();
        let y: Vec<f64> = (0..p).map(|_| next()).collect();
        let r = xcorr_fft(&x, &y).unwrap();
        let scale: f64 = (0..p).map(|tau| (0..p).map(|t| (x[t] * y[(t + tau) % p]).abs()).sum::<f64>()).fold(0.0, f64::max) / p as f64;
        for tau in 0..p {
            let direct: f64 = (0..p).map(|t| x[t] * y[(t + tau) % p]).sum::<f64>() / p as f64;
            prop_assert!((r[tau] - direct).abs() <= 1e-9 * scale.max(1e-12), "tau {} fft {} direct {}", tau, r[tau], direct);
        }
    }

    #[test]
    fn graph_edges_are_causal_and_bounded((n, g, labels) in labels_strategy(8), k in 1usize..=4, data in values(8 * 16)) {
        let a = Assignment::new(labels, g);
        let h = ScaleHierarchy::from_assignments(n, vec![a], vec![2, 4], 16, Aggregation::Sum).unwrap();
        let window = arr(&[n, 16], data[..n * 16].to_vec());
        let graph = build_initial_graph(&h, &[pooled_scales(&h, &window).unwrap()], &LagConfig { k, ..LagConfig::default() }).unwrap();
        let parents = h.assignment(1).labels();
        for sg in &graph.scales {
            prop_assert!(sg.edge_count() <= k * sg.patches * sg.pairs.len());
            for e in 0..sg.edge_count() {
                let (n_, m) = (sg.edge_src_patch[e], sg.edge_dst_patch[e]);
                prop_assert!(m >= n_);
                let set = &sg.lag_sets[sg.edge_pair[e]];
                prop_assert!(set.lags.contains(&(m - n_)));
                prop_assert!(n_ < sg.patches - set.max_lag());
                let (i, j) = sg.pairs[sg.edge_pair[e]];
                if sg.scale == 0 && i != j {
                    prop_assert_eq!(parents[i], parents[j]);
                }
            }
        }
    }

    #[test]
    fn decay_weight_in_unit_interval(be in 0.0f64..1.0, bi in 0.0f64..1.0, al in 0.0f64..1.0, d in 0u32..40) {
        let t = Tape::new();
        let c = |x: f64| t.constant(Array::from_vec(vec![x]));
        let l = decay_weights(c(be), c(bi), c(al), c(d as f64), 0.0).unwrap().item();
        prop_assert!((0.0..=1.0).contains(&l));
        if d == 0 {
            prop_assert!((l - al).abs() <= 1e-12);
        }
    }

    // Non-increasing needs the inhibitory rate at most the excitatory one:
    // where the weight is positive, (1 - a) e^{-bi d} < e^{-be d}, so the
    // slope is below (bi - be) e^{-be d} <= 0.
    #[test]
    fn decay_non_increasing_when_inhibition_slower(be in 0.01f64..1.0, frac in 0.0f64..=1.0, al in 0.0f64..1.0) {
        let bi = be * frac;
        let t = Tape::new();
        let n = 30;
        let rep = |x: f64| t.constant(Array::filled(vec![n], x));
        let delta = t.constant(Array::from_vec((0..n).map(|i| i as f64 * 0.5).collect()));
        let l = decay_weights(rep(be), rep(bi), rep(al), delta, 0.0).unwrap().to_array();
        for w in l.data().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", l.data());
        }
    }

    #[test]
    fn coarsening_conserves_totals((n, g, labels) in labels_strategy(10), data in values(10 * 6)) {
        let a = Assignment::new(labels, g);
        let x = arr(&[n, 6], data[..n * 6].to_vec());
        let d = Array::filled(vec![n, n], 1.0);
        let (_, xs) = coarsen(&a, &d, &x, Aggregation::Sum).unwrap();
        for t in 0..6 {
            let fine: f64 = (0..n).map(|i| x.at2(i, t)).sum();
            let coarse: f64 = (0..g).map(|j| xs.at2(j, t)).sum();
            prop_assert!((fine - coarse).abs() < 1e-9);
        }
        let m = a.matrix();
        for i in 0..n {
            prop_assert_eq!((0..g).map(|j| m.at2(i, j)).sum::<f64>(), 1.0);
        }
        prop_assert!(a.group_sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn patchify_round_trips(n in 1usize..5, p_pow in 0u32..4, data in values(4 * 16)) {
        let p = 1usize << p_pow;
        let x = arr(&[n, 16], data[..n * 16].to_vec());
        let patched = patchify(&x, p).unwrap();
        prop_assert_eq!(patched.patch_count(), 16 / p);
        prop_assert_eq!(patched.unpatchify(), x);
    }

    #[test]
    fn edge_plan_lags_are_non_negative((n, g, labels) in labels_strategy(6), data in values(6 * 16)) {
        let a = Assignment::new(labels, g);
        let h = ScaleHierarchy::from_assignments(n, vec![a], vec![2, 4], 16, Aggregation::Sum).unwrap();
        let window = arr(&[n, 16], data[..n * 16].to_vec());
        let graph = build_initial_graph(&h, &[pooled_scales(&h, &window).unwrap()], &LagConfig::default()).unwrap();
        for sg in &graph.scales {
            let plan = EdgePlan::new(sg);
            prop_assert!(plan.delta.data().iter().all(|&d| d >= 0.0));
        }
    }
}

#[test]
fn faster_inhibition_can_revive_weight() {
    // be < bi with alpha = 0 starts at zero and rises
    let t = Tape::new();
    let c = |x: f64| t.constant(Array::from_vec(vec![x]));
    let at = |d: f64| decay_weights(c(0.01), c(0.38), c(0.0), c(d), 0.0).unwrap().item();
    assert_eq!(at(0.0), 0.0);
    assert!(at(2.0) > at(0.0));
}

trait PipeOk: Sized {
    fn pipe_ok(self) -> Result<Self, TensorError> {
        Ok(self)
    }
}

impl PipeOk for Var<'_> {}
