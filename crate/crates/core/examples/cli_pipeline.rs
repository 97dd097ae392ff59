//! Drives the command-line pipeline in-process: synthesize a dataset,
//! train SPDNet briefly, evaluate it on the held-out windows and export
//! plot-ready CSVs.
//!
//! `cargo run --release --example cli_pipeline`

use std::path::Path;

use clap::Parser;
use spd_regime::cli::{run, Cli};
use spd_regime::Error;

fn step(args: &[&str]) -> spd_regime::Result<()> {
    println!("$ spd-regime {}", args.join(" "));
    let cli = Cli::try_parse_from(std::iter::once("spd-regime").chain(args.iter().copied()))
        .map_err(|e| Error::Config(e.to_string()))?;
    run(&cli)
}

fn config(dir: &Path, name: &str, json: &str) -> spd_regime::Result<String> {
    let p = dir.join(name);
    std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(p.to_string_lossy().into_owned())
}

fn main() -> spd_regime::Result<()> {
    let tmp = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let dir = tmp.path();
    let out = |s: &str| dir.join("run").join(s).to_string_lossy().into_owned();
    let synth = config(dir, "synth.json", "{}")?;
    let train = config(dir, "train.json", r#"{"dataset": "run/synth", "model": {"name": "SPDNet", "epochs": 40}}"#)?;
    let eval = config(dir, "eval.json", r#"{"dataset": "run/synth", "checkpoint": "run/train/model.ckpt", "split": {}}"#)?;
    let plots = config(dir, "plots.json", r#"{"run_dir": "run"}"#)?;

    step(&["synth", "--config", &synth, "--out", &out("synth")])?;
    step(&["train", "--config", &train, "--seed", "1", "--out", &out("train")])?;
    step(&["eval", "--config", &eval, "--out", &out("eval")])?;
    step(&["export-plots", "--config", &plots, "--out", &out("plots")])?;

    let metrics = std::fs::read_to_string(dir.join("run/eval/metrics.json")).map_err(|e| Error::io("metrics", e))?;
    println!("{metrics}");
    let mut files: Vec<String> = std::fs::read_dir(dir.join("run/plots"))
        .map_err(|e| Error::io("plots", e))?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("plot data: {files:?}");
    Ok(())
}
