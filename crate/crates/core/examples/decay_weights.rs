//! Shape of the decay-aware edge weight as a function of lag, and the
//! learned weights of a freshly built model on one input window.
//!
//! cargo run --release --example decay_weights

use millgnn::decay::decay_weights;
use millgnn::selfcheck::tiny_model;
use millgnn::tensor::{Array, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lags: Vec<f64> = (0..=10).map(f64::from).collect();
    println!("{:>5} {}", "", lags.iter().map(|d| format!("{d:>6}")).collect::<String>());
    for (be, bi, alpha) in [(0.3, 0.1, 0.6), (0.2, 0.2, 0.3), (0.05, 0.5, 0.1)] {
        let tape = Tape::new();
        let fill = |x: f64| tape.constant(Array::filled(vec![lags.len()], x));
        let w = decay_weights(fill(be), fill(bi), fill(alpha), tape.constant(Array::from_vec(lags.clone())), 0.0)?;
        println!(
            "be={be} bi={bi} a={alpha}\n{:>5} {}",
            "",
            w.to_array().data().iter().map(|x| format!("{:>6.3}", x + 0.0)).collect::<String>()
        );
    }

    let (model, input, _) = tiny_model(3)?;
    let weights = model.edge_weights(&input)?;
    let graph = model.graph().expect("graph model");
    for (s, (g, w)) in graph.scales.iter().zip(&weights).enumerate() {
        let mean = w.iter().sum::<f64>() / w.len().max(1) as f64;
        let dead = w.iter().filter(|&&x| x == 0.0).count();
        println!("scale {s}: {} edges, mean weight {mean:.4}, {dead} at zero", g.edge_count());
    }
    Ok(())
}
