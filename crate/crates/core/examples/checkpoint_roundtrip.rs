//! Saves a freshly built SPDNetBN to a checkpoint file, reloads it and
//! confirms both copies give identical logits.
//!
//! `cargo run --release --example checkpoint_roundtrip`

use spd_regime::models::{build_model, checkpoint, forward_classify, ModelConfig, ModelKind};
use spd_regime::synth::{generate_dataset, FactorSpec, SynthSpec};

fn main() -> spd_regime::Result<()> {
    let config = ModelConfig::preset(ModelKind::SpdNetBn);
    let model = build_model(&config, 11)?;
    let dir = tempfile::tempdir().map_err(|e| spd_regime::Error::io("tempdir", e))?;
    let path = dir.path().join("spdnetbn.ckpt");
    checkpoint::save(&model, 11, &path)?;
    let (loaded, seed) = checkpoint::load(&path)?;
    let size = std::fs::metadata(&path).map_err(|e| spd_regime::Error::io(&path, e))?.len();
    println!("wrote {size} bytes; seed {seed}; layers {:?}", loaded.layer_kinds());

    let spec = SynthSpec {
        n_series_total: 600,
        ..SynthSpec::default()
    };
    for s in generate_dataset(&spec, &FactorSpec::calibrated(&spec)?)? {
        let a = forward_classify(&model, &s.corr)?;
        let b = forward_classify(&loaded, &s.corr)?;
        println!("sample {:2}: {a:?} {}", s.index, if a == b { "identical" } else { "DIFFERENT" });
    }
    Ok(())
}
