//! Generates the default synthetic dataset and prints per-regime statistics.

use std::time::Instant;

use spd_regime::regimes::Regime;
use spd_regime::synth::{generate_dataset, FactorSpec, SynthSpec};

fn main() -> spd_regime::Result<()> {
    let spec = SynthSpec::default();
    let factors = FactorSpec::calibrated(&spec)?;
    let t = Instant::now();
    let data = generate_dataset(&spec, &factors)?;
    println!("{} samples in {:.2?}", data.len(), t.elapsed());
    for r in Regime::ALL {
        let by_label: Vec<f64> = data
            .iter()
            .filter(|s| s.regime() == r)
            .map(|s| s.corr.as_sym().mean_off_diagonal())
            .collect();
        let by_source: Vec<f64> = data
            .iter()
            .filter(|s| s.generating_regime == r)
            .map(|s| s.corr.as_sym().mean_off_diagonal())
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "{r:>8}: {:3} labelled, mean corr {:.4} | {:3} generated, mean corr {:.4}",
            by_label.len(),
            mean(&by_label),
            by_source.len(),
            mean(&by_source)
        );
    }
    let agree = data.iter().filter(|s| s.regime() == s.generating_regime).count();
    println!("label agrees with generating regime for {agree}/{}", data.len());
    Ok(())
}
