//! Train on a generated dataset, save a checkpoint, reload it and forecast
//! the step after the series ends.
//!
//! cargo run --release --example train_forecast -- [epochs]

use millgnn::model::{fit, load_checkpoint, save_checkpoint, ModelConfig};
use millgnn::synth::{gen_planted, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let (frame, _) = gen_planted(&PlantedSpec::benchmark(2000, 4))?;
    let config = ModelConfig {
        input_len: 48,
        horizon: 12,
        groups: Some(vec![3]),
        patch_len: vec![4, 8],
        epochs,
        train_stride: 4,
        ..ModelConfig::default()
    };
    let exp = fit(&frame, &config, Default::default(), false)?;
    for r in &exp.outcome.history {
        println!("epoch {:>2}  train {:.4}  val {:.4}", r.epoch, r.train_mse, r.val_mse);
    }
    let m = &exp.test.denormalized;
    println!("test mse {:.4} mae {:.4} over {} windows", m.mse, m.mae, exp.test.predictions.len());

    let dir = std::env::temp_dir().join("millgnn-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.bin");
    save_checkpoint(&path, exp.model())?;
    let model = load_checkpoint(&path)?;

    let l = model.config().input_len;
    let tail = frame.slice(frame.len() - l, frame.len());
    let pred = model.forecast(tail.values())?;
    println!("next {} steps of {}:", pred.shape()[1], model.variate_names()[0]);
    println!("  {:?}", pred.row(0).iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    Ok(())
}
