//! Overfits U-SPDNet on 20 synthetic samples and prints the loss split
//! between cross-entropy and reconstruction, plus latent and reconstruction
//! shapes.
//!
//! The learning rate anneals over the preset's 600 epochs; the run stops
//! after `stop` epochs.
//!
//! `cargo run --release --example uspdnet_overfit -- [stop]`

use std::ops::ControlFlow;
use std::time::Instant;

use spd_regime::models::{build_model, train_with, uspdnet_forward, ModelConfig, ModelKind};
use spd_regime::synth::{generate_dataset, FactorSpec, SynthSpec};

fn main() -> spd_regime::Result<()> {
    let stop: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let spec = SynthSpec {
        n_series_total: 60 * 20,
        ..SynthSpec::default()
    };
    let data: Vec<_> = generate_dataset(&spec, &FactorSpec::calibrated(&spec)?)?
        .iter()
        .map(|s| s.to_windowed())
        .collect();
    let mut config = ModelConfig::preset(ModelKind::USpdNet6BiRe);
    config.batch_size = 20;
    config.oversample = false;
    let mut model = build_model(&config, config.seed)?;
    let t = Instant::now();
    train_with(&mut model, &data, &[], |e| {
        if e.epoch % 10 == 0 || e.epoch + 1 == stop {
            println!(
                "epoch {:4}  lr {:.2e}  loss {:.4}  ce {:.4}  recon {:.4}  train acc {:.3}",
                e.epoch, e.lr, e.train_loss, e.train_ce, e.train_recon, e.train_acc
            );
        }
        if e.epoch + 1 >= stop {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!("trained in {:.1?}", t.elapsed());
    let (logits, latent, recon) = uspdnet_forward(&model, &data[0].corr)?;
    println!(
        "logits {logits:?}; latent {0}x{0}; reconstruction {1}x{1}",
        latent.dim(),
        recon.dim()
    );
    Ok(())
}
