//! One forward pass of hierarchical message passing on a small random
//! hierarchy, with the edge and work report.
//!
//! cargo run --release --example message_passing -- [variates]

use millgnn::decay::EdgePlan;
use millgnn::hierarchy::{Aggregation, Assignment, ScaleHierarchy};
use millgnn::hillmp::{count_edges_and_work, forward_stack, Activation, HmpPlan, LayerVars};
use millgnn::leadlag::{build_initial_graph, pooled_scales, LagConfig};
use millgnn::tensor::{Array, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(16);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut random = |shape: &[usize]| {
        let len = shape.iter().product();
        Array::new(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };

    let groups = n.div_ceil(4);
    let assign = Assignment::new((0..n).map(|i| i / 4).collect(), groups);
    let h = ScaleHierarchy::from_assignments(n, vec![assign], vec![4, 8], 48, Aggregation::Sum)?;
    let window = random(&[n, 48]);
    let graph = build_initial_graph(&h, &[pooled_scales(&h, &window)?], &LagConfig::default())?;
    print!("{}", count_edges_and_work(&graph, &h, 3).to_text());

    let d = 8;
    let plan = HmpPlan::new(&h);
    let edges: Vec<EdgePlan> = graph.scales.iter().map(EdgePlan::new).collect();
    let feats: Vec<Array> = plan.rows.iter().map(|&r| random(&[r, d])).collect();
    let theta: Vec<Array> = (0..2).map(|_| random(&[d, d])).collect();
    let update: Vec<Array> = (0..2).map(|_| random(&[2 * d, d])).collect();

    let tape = Tape::new();
    let c = |a: &Array| tape.constant(a.clone());
    let fv: Vec<Var<'_>> = feats.iter().map(c).collect();
    let wv: Vec<Var<'_>> = graph.scales.iter().map(|g| c(&Array::filled(vec![g.edge_count()], 0.5))).collect();
    let layers = vec![LayerVars {
        theta: theta.iter().map(c).collect(),
        theta_update: update.iter().map(c).collect(),
    }];
    let out = forward_stack(&fv, &wv, &edges, &plan, &layers, Activation::Relu)?;
    let out = out.to_array();
    println!("output {:?}, max |h| {:.3}", out.shape(), out.max_abs());
    Ok(())
}
