//! Lag estimation between a leader and a noisy follower with FFT
//! cross-correlation and top-K selection.
//!
//! cargo run --release --example lag_estimation -- [lag] [snr]

use millgnn::leadlag::{lag_coefficients, select_topk_lags};
use millgnn::synth::{gen_planted, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let lag: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(5);
    let snr: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10.0);

    let (frame, _) = gen_planted(&PlantedSpec::pair(256, lag, 1.0, snr, 1))?;
    let v = frame.values();
    let coefs = lag_coefficients(v.row(0), v.row(1), false)?;
    let (lags, values, short) = select_topk_lags(&coefs, 4, 32)?;

    println!("planted lag {lag}, snr {snr}");
    for (l, c) in lags.iter().zip(&values) {
        println!("  lag {l:>3}  coefficient {c:+.4}");
    }
    if short {
        println!("  (fewer admissible lags than requested)");
    }
    Ok(())
}
