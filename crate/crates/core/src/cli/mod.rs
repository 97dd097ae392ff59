//! Command-line pipeline. Each subcommand reads one JSON config, validates
//! it fully, then writes deterministic artifacts into `--out`. The config
//! text is copied verbatim to `config.json` in the output directory.
//!
//! Relative paths inside a config resolve against the config file's
//! directory.

mod config;
mod plots;

pub use config::{
    BacktestConfig, EvalConfig, ExportConfig, IngestConfig, LabelConfig, LabelSplit, ResampleConfig, SplitConfig,
    SynthConfig, SyntheticReturns, TrainConfig,
};
pub use plots::{density_histogram, export_plots, mean_corr_by_regime, plan_exports, DensityBin, ExportPlan};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::backtest::{
    compare_strategies, daily_predictions, write_comparison_csv, write_equity_csv, write_weights_csv, Strategy,
};
use crate::dataset::{read_dataset, write_dataset, Dataset, DatasetSample};
use crate::error::{Error, Result};
use crate::ingest::{clean, load_constituents, load_prices_csv, to_returns, ReturnsTable};
use crate::models::{build_model, checkpoint, evaluate, predict, train, EvalReport, SpdModel};
use crate::regimes::{
    block_resample, chronological_split, index_range_for_dates, purged_split, rolling_windows, write_labels_csv,
    Regime, SplitPlan, WindowedSample,
};
use crate::synth::{generate_dataset, synthetic_regime_path, FactorSpec};

#[derive(Debug, Parser)]
#[command(name = "spd-regime", version, about = "SPD-manifold market regime detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic correlation-matrix dataset.
    Synth(RunArgs),
    /// Clean a price CSV into daily simple returns.
    Ingest(RunArgs),
    /// Cut returns into labelled rolling windows and a purged split.
    Label(RunArgs),
    /// Train a model on a dataset directory.
    Train(RunArgs),
    /// Evaluate a checkpoint on a dataset directory.
    Eval(RunArgs),
    /// Backtest portfolio strategies on daily returns.
    Backtest(RunArgs),
    /// Turn run artifacts into plot-ready CSVs.
    ExportPlots(RunArgs),
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Label(_) => "label",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Backtest(_) => "backtest",
            Command::ExportPlots(_) => "export-plots",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Synth(a)
            | Command::Ingest(a)
            | Command::Label(a)
            | Command::Train(a)
            | Command::Eval(a)
            | Command::Backtest(a)
            | Command::ExportPlots(a) => a,
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let run = Run {
        command: cli.command.name(),
        raw,
        base,
        seed: args.seed,
        out: args.out.clone(),
    };
    match &cli.command {
        Command::Synth(_) => cmd_synth(&run),
        Command::Ingest(_) => cmd_ingest(&run),
        Command::Label(_) => cmd_label(&run),
        Command::Train(_) => cmd_train(&run),
        Command::Eval(_) => cmd_eval(&run),
        Command::Backtest(_) => cmd_backtest(&run),
        Command::ExportPlots(_) => cmd_export_plots(&run),
    }
}

struct Run {
    command: &'static str,
    raw: String,
    base: PathBuf,
    seed: Option<u64>,
    out: PathBuf,
}

impl Run {
    fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_str(&self.raw)?)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn seed(&self, config_seed: Option<u64>, fallback: u64) -> u64 {
        self.seed.or(config_seed).unwrap_or(fallback)
    }

    /// Creates the output directory and records provenance.
    fn start(&self, seed: Option<u64>) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        write(&self.out.join("config.json"), &self.raw)?;
        let meta = json!({ "command": self.command, "seed": seed });
        write(&self.out.join("run.json"), &serde_json::to_string_pretty(&meta)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn cmd_synth(run: &Run) -> Result<()> {
    let cfg: SynthConfig = run.parse()?;
    let mut spec = cfg.spec.clone();
    spec.rng_seed = run.seed(cfg.rng_seed, spec.rng_seed);
    spec.validate()?;
    let factors = match &cfg.factors {
        Some(f) => f.clone(),
        None => FactorSpec::calibrated(&spec)?,
    };
    factors.validate(&spec)?;
    let samples = generate_dataset(&spec, &factors)?;
    run.start(Some(spec.rng_seed))?;
    let seeds = BTreeMap::from([
        ("permute_seed".to_string(), spec.permute_seed),
        ("rng_seed".to_string(), spec.rng_seed),
    ]);
    let echo = json!({ "spec": spec, "factors": factors });
    let rows: Vec<DatasetSample> = samples.iter().map(DatasetSample::from).collect();
    write_dataset(&run.out, "synthetic", echo, seeds, &rows, cfg.format)?;
    Ok(())
}

fn cmd_ingest(run: &Run) -> Result<()> {
    let cfg: IngestConfig = run.parse()?;
    cfg.validate()?;
    let mut schema = cfg.schema.clone();
    if let Some(c) = &cfg.constituents {
        if schema.tickers.is_some() {
            return Err(Error::Config("give either schema.tickers or constituents, not both".into()));
        }
        schema.tickers = Some(load_constituents(&run.resolve(c))?);
    }
    let prices = load_prices_csv(&run.resolve(&cfg.prices), &schema)?;
    let (returns, report) = clean(&to_returns(&prices)?, cfg.max_missing_frac, cfg.ffill_limit)?;
    run.start(None)?;
    returns.write_csv(&run.path("returns.csv"))?;
    write(&run.path("cleaning.csv"), &report.to_csv())
}

fn split_windows(split: &LabelSplit, windows: &[WindowedSample], dates: &[NaiveDate]) -> Result<SplitPlan> {
    match (split.test_from, split.test_to) {
        (Some(from), Some(to)) => {
            let range = index_range_for_dates(dates, from, to)?;
            purged_split(windows, range, split.embargo_days, split.val_fraction)
        }
        (None, None) => chronological_split(windows, split.val_fraction, split.test_fraction, split.embargo_days),
        _ => Err(Error::Config("test_from and test_to must be given together".into())),
    }
}

fn cmd_label(run: &Run) -> Result<()> {
    let cfg: LabelConfig = run.parse()?;
    cfg.validate()?;
    let returns = ReturnsTable::read_csv(&run.resolve(&cfg.returns))?;
    if !returns.is_clean() {
        return Err(Error::Data("returns contain missing values; run ingest first".into()));
    }
    let windows = rolling_windows(&returns.values, cfg.window_len, cfg.stride)?;
    let plan = split_windows(&cfg.split, &windows, &returns.dates)?;
    let resample_seed = cfg.block_resample.as_ref().map(|r| run.seed(r.seed, 0));
    let resampled = match (&cfg.block_resample, resample_seed) {
        (Some(r), Some(seed)) => Some(block_resample(&windows, r.block_len, seed)?),
        _ => None,
    };
    run.start(resample_seed)?;
    write_labels_csv(&run.path("labels.csv"), &windows, Some(&plan))?;
    write_json(&run.path("split.json"), &serde_json::to_value(&plan)?)?;
    let echo = json!({
        "returns": cfg.returns,
        "window_len": cfg.window_len,
        "stride": cfg.stride,
        "first_date": returns.dates.first(),
        "tickers": returns.tickers,
    });
    let rows: Vec<DatasetSample> = windows.iter().map(DatasetSample::from).collect();
    write_dataset(&run.path("dataset"), "empirical", echo.clone(), BTreeMap::new(), &rows, cfg.format)?;
    if let (Some(r), Some(seed)) = (resampled, resample_seed) {
        let rows: Vec<DatasetSample> = r.iter().map(DatasetSample::from).collect();
        let seeds = BTreeMap::from([("block_resample_seed".to_string(), seed)]);
        write_dataset(&run.path("resampled"), "block_resampled", echo, seeds, &rows, cfg.format)?;
    }
    Ok(())
}

fn load_split(run: &Run, split: &SplitConfig, windows: &[WindowedSample]) -> Result<SplitPlan> {
    let plan = match &split.plan {
        Some(p) => {
            let path = run.resolve(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let plan: SplitPlan = serde_json::from_str(&text)?;
            let n = windows.len();
            let all = plan.train.iter().chain(&plan.val).chain(&plan.test).chain(&plan.purged);
            if let Some(i) = all.into_iter().find(|&&i| i >= n) {
                return Err(Error::Data(format!("split plan refers to window {i} of {n}")));
            }
            plan
        }
        None => chronological_split(windows, split.val_fraction, split.test_fraction, split.embargo_days)?,
    };
    Ok(plan)
}

fn pick(windows: &[WindowedSample], idx: &[usize]) -> Vec<WindowedSample> {
    idx.iter().map(|&i| windows[i].clone()).collect()
}

fn load_windows(run: &Run, dir: &Path) -> Result<(Dataset, Vec<WindowedSample>)> {
    let ds = read_dataset(&run.resolve(dir))?;
    if ds.samples.is_empty() {
        return Err(Error::Data(format!("dataset {} is empty", dir.display())));
    }
    let w = ds.windows();
    Ok((ds, w))
}

fn check_dim(model: &SpdModel, dim: usize) -> Result<()> {
    if model.input_dim() != dim {
        return Err(Error::Config(format!(
            "model expects {}x{} inputs but the data is {dim}x{dim}",
            model.input_dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

fn cmd_train(run: &Run) -> Result<()> {
    let cfg: TrainConfig = run.parse()?;
    let mut model_cfg = cfg.model_config()?;
    model_cfg.seed = run.seed(cfg.rng_seed, model_cfg.seed);
    cfg.split.validate()?;
    let mut model = build_model(&model_cfg, model_cfg.seed)?;
    let (ds, windows) = load_windows(run, &cfg.dataset)?;
    check_dim(&model, ds.manifest.dim)?;
    let plan = load_split(run, &cfg.split, &windows)?;
    let (tr, va, te) = (pick(&windows, &plan.train), pick(&windows, &plan.val), pick(&windows, &plan.test));
    run.start(Some(model_cfg.seed))?;
    let report = train(&mut model, &tr, &va)?;
    checkpoint::save(&report.best_model, model_cfg.seed, &run.path("model.ckpt"))?;
    report.write_csv(&run.path("training.csv"))?;
    write_json(&run.path("split.json"), &serde_json::to_value(&plan)?)?;
    let test = if te.is_empty() {
        None
    } else {
        Some(evaluate(&report.best_model, &te)?)
    };
    let last = report.final_stats();
    let summary = json!({
        "model": model_cfg.name.name(),
        "config": model_cfg,
        "n_train": tr.len(),
        "n_val": va.len(),
        "n_test": te.len(),
        "epochs_run": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "best_val_acc": report.best_val_acc,
        "final_train_acc": last.map(|e| e.train_acc),
        "final_train_loss": last.map(|e| e.train_loss),
        "test_accuracy": test.as_ref().map(|t| t.accuracy),
    });
    write_json(&run.path("report.json"), &summary)
}

/// Metrics JSON plus the confusion-matrix CSV.
pub fn write_eval_outputs(out: &Path, model_name: &str, subset: &str, report: &EvalReport) -> Result<()> {
    let metrics = json!({
        "model": model_name,
        "subset": subset,
        "n_samples": report.n_samples,
        "accuracy": report.accuracy,
        "per_class_recall": {
            "stressed": report.per_class_recall[0],
            "normal": report.per_class_recall[1],
            "rally": report.per_class_recall[2],
        },
        "corner_solution": report.corner_solution,
        "confusion": report.confusion.counts,
    });
    write_json(&out.join("metrics.json"), &metrics)?;
    report.confusion.write_csv(&out.join("confusion.csv"))
}

fn cmd_eval(run: &Run) -> Result<()> {
    let cfg: EvalConfig = run.parse()?;
    if let Some(s) = &cfg.split {
        s.validate()?;
    }
    let (model, _) = checkpoint::load(&run.resolve(&cfg.checkpoint))?;
    let (ds, windows) = load_windows(run, &cfg.dataset)?;
    check_dim(&model, ds.manifest.dim)?;
    let (subset, samples) = match &cfg.split {
        Some(s) => ("test", pick(&windows, &load_split(run, s, &windows)?.test)),
        None => ("all", windows),
    };
    if samples.is_empty() {
        return Err(Error::Data("evaluation subset is empty".into()));
    }
    let predicted = predict(&model, &samples)?;
    let truth: Vec<Regime> = samples.iter().map(|s| s.label.regime).collect();
    let report = EvalReport::from_predictions(&truth, &predicted)?;
    run.start(None)?;
    write_eval_outputs(&run.out, model.config.name.name(), subset, &report)?;
    let mut csv = String::from("start_index,end_index,label,predicted\n");
    for (s, p) in samples.iter().zip(&predicted) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            s.start_index,
            s.end_index,
            s.label.regime.as_str(),
            p.as_str()
        ));
    }
    write(&run.path("predictions.csv"), &csv)
}

fn cmd_backtest(run: &Run) -> Result<()> {
    let cfg: BacktestConfig = run.parse()?;
    cfg.validate()?;
    let seed = cfg.synthetic.as_ref().map(|s| run.seed(cfg.rng_seed, s.seed));
    let returns = match (&cfg.returns, &cfg.synthetic, seed) {
        (Some(p), None, _) => ReturnsTable::read_csv(&run.resolve(p))?,
        (None, Some(s), Some(seed)) => {
            let factors = FactorSpec::calibrated(&s.spec)?;
            let path = synthetic_regime_path(&s.spec, &factors, s.days, s.segment_len, seed)?;
            let d0 = s.first_date;
            ReturnsTable {
                dates: (0..s.days).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
                tickers: (0..s.spec.n_assets).map(|i| format!("S{i:02}")).collect(),
                values: path.returns,
            }
        }
        _ => return Err(Error::Config("give exactly one of returns or synthetic".into())),
    };
    let mut models = BTreeMap::new();
    for (name, p) in &cfg.models {
        let (m, _) = checkpoint::load(&run.resolve(p))?;
        check_dim(&m, returns.n_assets())?;
        models.insert(name.clone(), m);
    }
    let mut predictions = BTreeMap::new();
    for s in &cfg.strategies {
        if let Strategy::RegimeDependent { model, .. } = s {
            if !predictions.contains_key(model) {
                predictions.insert(model.clone(), daily_predictions(&models[model], &returns, cfg.window_len)?);
            }
        }
    }
    let (results, rows) = compare_strategies(&returns, &cfg.strategies, &predictions, &cfg.settings)?;
    run.start(seed)?;
    write_equity_csv(&run.path("equity.csv"), &results)?;
    write_weights_csv(&run.path("weights.csv"), &results, &returns.tickers, cfg.weights_every)?;
    write_comparison_csv(&run.path("comparison.csv"), &rows)?;
    if !predictions.is_empty() {
        let mut csv = String::from("date,model,regime\n");
        for (name, p) in &predictions {
            for (d, r) in returns.dates.iter().zip(p) {
                csv.push_str(&format!("{d},{name},{}\n", r.map_or("", Regime::as_str)));
            }
        }
        write(&run.path("predictions.csv"), &csv)?;
    }
    if cfg.synthetic.is_some() {
        returns.write_csv(&run.path("returns.csv"))?;
    }
    Ok(())
}

fn cmd_export_plots(run: &Run) -> Result<()> {
    let cfg: ExportConfig = run.parse()?;
    cfg.validate()?;
    let run_dir = run.resolve(&cfg.run_dir);
    let plan = plan_exports(&run_dir, Some(&run.out))?;
    run.start(None)?;
    export_plots(&plan, &run.out, cfg.bins)
}
