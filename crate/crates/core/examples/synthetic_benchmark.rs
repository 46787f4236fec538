//! Full model against the linear baseline and the four ablations on a
//! planted lead-lag dataset.
//!
//! cargo run --release --example synthetic_benchmark -- [seed] [train_stride] [epochs] [lr]

use std::time::Instant;

use millgnn::model::{ablate, fit, ModelConfig, ModelKind};
use millgnn::synth::{gen_planted, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let seed = args.first().copied().unwrap_or(0.0) as u64;
    let (frame, _) = gen_planted(&PlantedSpec::benchmark(4096, seed))?;
    let base = ModelConfig {
        groups: Some(vec![3]),
        seed,
        learning_rate: args.get(3).copied().unwrap_or(1e-3),
        train_stride: args.get(1).copied().unwrap_or(4.0) as usize,
        epochs: args.get(2).copied().unwrap_or(10.0) as usize,
        ..ModelConfig::default()
    };
    let mut runs = vec![("full".to_string(), base.clone())];
    runs.push(("linear".into(), ModelConfig { kind: ModelKind::Linear, ..base.clone() }));
    for flag in ["no_ms", "no_init", "no_weight", "no_hmp"] {
        runs.push((flag.into(), ablate(&base, flag)?));
    }
    println!("{:<10} {:>12} {:>12} {:>7} {:>8}", "model", "test_mse", "test_mae", "epochs", "secs");
    for (name, cfg) in runs {
        let t0 = Instant::now();
        let exp = fit(&frame, &cfg, Default::default(), false)?;
        let m = exp.test.normalized;
        println!(
            "{name:<10} {:>12.5} {:>12.5} {:>7} {:>8.1}",
            m.mse,
            m.mae,
            exp.outcome.history.len(),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
