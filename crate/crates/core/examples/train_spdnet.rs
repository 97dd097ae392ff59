//! Trains SPDNet on the default synthetic dataset and reports validation
//! accuracy per epoch.
//!
//! `cargo run --release --example train_spdnet -- [epochs] [model]`

use std::ops::ControlFlow;
use std::time::Instant;

use spd_regime::models::{build_model, evaluate, train_with, ModelConfig, ModelKind};
use spd_regime::regimes::chronological_split;
use spd_regime::synth::{generate_dataset, FactorSpec, SynthSpec};

fn main() -> spd_regime::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let kind = match args.next().as_deref() {
        Some("bn") => ModelKind::SpdNetBn,
        _ => ModelKind::SpdNet,
    };
    let spec = SynthSpec::default();
    let data: Vec<_> = generate_dataset(&spec, &FactorSpec::calibrated(&spec)?)?
        .iter()
        .map(|s| s.to_windowed())
        .collect();
    let plan = chronological_split(&data, 0.15, 0.15, 21)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let (train, val, test) = (pick(&plan.train), pick(&plan.val), pick(&plan.test));
    println!("train {} / val {} / test {} / purged {}", train.len(), val.len(), test.len(), plan.purged.len());

    let mut config = ModelConfig::preset(kind);
    config.epochs = epochs;
    let mut model = build_model(&config, config.seed)?;
    let t = Instant::now();
    let report = train_with(&mut model, &train, &val, |e| {
        if e.epoch % 10 == 0 || e.epoch + 1 == epochs {
            println!(
                "epoch {:4}  loss {:.4}  train acc {:.3}  val acc {:.3}",
                e.epoch,
                e.train_loss,
                e.train_acc,
                e.val_acc.unwrap_or(f64::NAN)
            );
        }
        ControlFlow::Continue(())
    })?;
    println!("trained in {:.1?}; best val acc {:?} at epoch {:?}", t.elapsed(), report.best_val_acc, report.best_epoch);
    let eval = evaluate(&report.best_model, &test)?;
    println!("test accuracy {:.3}\n{}", eval.accuracy, eval.confusion.to_csv());
    Ok(())
}
