//! DTW similarity, spectral grouping and the resulting multi-scale
//! hierarchy on the twelve-variate benchmark series.
//!
//! cargo run --release --example build_hierarchy -- [groups]

use millgnn::data::NormStats;
use millgnn::hierarchy::{build_hierarchy, HierarchyConfig};
use millgnn::synth::{gen_planted, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let groups: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let (frame, truth) = gen_planted(&PlantedSpec::benchmark(2048, 0))?;
    let (norm, _) = NormStats::fit(frame.values(), 1400)?;
    let train = norm.apply(&frame.slice(0, 1400).values().clone());

    let cfg = HierarchyConfig {
        groups: vec![groups],
        patch_len: vec![8, 16],
        ..HierarchyConfig::single_scale(8)
    };
    let h = build_hierarchy(&train, 96, &cfg)?;
    print!("{}", h.export_text(&frame.variate_names));
    println!("planted groups: {:?}", truth.groups);
    if let Some(g) = h.graphs() {
        println!("binary similarity graph:");
        let d = &g.similarity[0];
        for i in 0..d.shape()[0] {
            let row: String = d.row(i).iter().map(|&x| if x > 0.0 { '#' } else { '.' }).collect();
            println!("  {:>4} {row}", frame.variate_names[i]);
        }
    }
    Ok(())
}
