use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestSettings, Strategy, DEFAULT_RISK_AVERSION};
use crate::dataset::SampleFormat;
use crate::error::{Error, Result};
use crate::ingest::{PriceSchema, DEFAULT_FFILL_LIMIT, DEFAULT_MAX_MISSING_FRAC};
use crate::models::{ModelConfig, ModelKind};
use crate::regimes::{DEFAULT_BLOCK_LEN, DEFAULT_EMBARGO_DAYS, DEFAULT_STRIDE, DEFAULT_WINDOW_LEN};
use crate::synth::{FactorSpec, SynthSpec};

fn default_val_fraction() -> f64 {
    0.15
}
fn default_test_fraction() -> f64 {
    0.15
}
fn default_embargo() -> usize {
    DEFAULT_EMBARGO_DAYS
}
fn default_window_len() -> usize {
    DEFAULT_WINDOW_LEN
}
fn default_stride() -> usize {
    DEFAULT_STRIDE
}
fn default_block_len() -> usize {
    DEFAULT_BLOCK_LEN
}
fn default_max_missing() -> f64 {
    DEFAULT_MAX_MISSING_FRAC
}
fn default_ffill() -> usize {
    DEFAULT_FFILL_LIMIT
}
fn default_weights_every() -> usize {
    21
}
fn default_bins() -> usize {
    40
}
fn default_segment_len() -> usize {
    126
}
fn default_first_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2007, 1, 1).unwrap()
}

fn check_fractions(val: f64, test: f64) -> Result<()> {
    if test > 0.0 && val >= 0.0 && val + test < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "fractions val {val} and test {test} must be non-negative with a positive test share and sum below 1"
        )))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub spec: SynthSpec,
    /// Calibrated to `spec.regime_targets` when absent.
    #[serde(default)]
    pub factors: Option<FactorSpec>,
    #[serde(default)]
    pub format: SampleFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub prices: PathBuf,
    #[serde(default)]
    pub schema: PriceSchema,
    /// One ticker per line; restricts and orders the columns.
    #[serde(default)]
    pub constituents: Option<PathBuf>,
    #[serde(default = "default_max_missing")]
    pub max_missing_frac: f64,
    #[serde(default = "default_ffill")]
    pub ffill_limit: usize,
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_missing_frac) {
            return Err(Error::Config(format!(
                "max_missing_frac {} must be in [0, 1]",
                self.max_missing_frac
            )));
        }
        Ok(())
    }
}

/// Test period by dates (purged split) or by trailing fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSplit {
    #[serde(default)]
    pub test_from: Option<NaiveDate>,
    #[serde(default)]
    pub test_to: Option<NaiveDate>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_embargo")]
    pub embargo_days: usize,
}

impl Default for LabelSplit {
    fn default() -> Self {
        LabelSplit {
            test_from: None,
            test_to: None,
            val_fraction: default_val_fraction(),
            test_fraction: default_test_fraction(),
            embargo_days: default_embargo(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleConfig {
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub returns: PathBuf,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub split: LabelSplit,
    #[serde(default)]
    pub block_resample: Option<ResampleConfig>,
    #[serde(default)]
    pub format: SampleFormat,
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.stride == 0 {
            return Err(Error::Config(format!(
                "window_len {} must be >= 2 and stride {} >= 1",
                self.window_len, self.stride
            )));
        }
        if !(0.0..1.0).contains(&self.split.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} must be in [0, 1)", self.split.val_fraction)));
        }
        match (self.split.test_from, self.split.test_to) {
            (Some(a), Some(b)) if a > b => Err(Error::Config(format!("test period {a}..{b} is reversed"))),
            (Some(_), Some(_)) => Ok(()),
            (None, None) => check_fractions(self.split.val_fraction, self.split.test_fraction),
            _ => Err(Error::Config("test_from and test_to must be given together".into())),
        }?;
        if let Some(r) = &self.block_resample {
            if r.block_len == 0 {
                return Err(Error::Config("block_len must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Chronological fractions, or a split plan written by `label`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_embargo")]
    pub embargo_days: usize,
    #[serde(default)]
    pub plan: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            val_fraction: default_val_fraction(),
            test_fraction: default_test_fraction(),
            embargo_days: default_embargo(),
            plan: None,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.plan.is_some() {
            return Ok(());
        }
        check_fractions(self.val_fraction, self.test_fraction)
    }
}

/// `model` holds a `name` plus any fields overriding that preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub model: serde_json::Value,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl TrainConfig {
    pub fn model_config(&self) -> Result<ModelConfig> {
        let obj = self
            .model
            .as_object()
            .ok_or_else(|| Error::Config("model must be an object".into()))?;
        let name = obj
            .get("name")
            .ok_or_else(|| Error::Config("model needs a name".into()))?;
        let kind: ModelKind = serde_json::from_value(name.clone())?;
        let mut merged = serde_json::to_value(ModelConfig::preset(kind))?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let config: ModelConfig = serde_json::from_value(merged)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// Evaluate the test part of this split; the whole dataset otherwise.
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

/// A generated regime-switching return path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticReturns {
    pub days: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_first_date")]
    pub first_date: NaiveDate,
    #[serde(default)]
    pub spec: SynthSpec,
}

fn default_strategies() -> Vec<Strategy> {
    vec![
        Strategy::EqualWeight,
        Strategy::MeanVariance {
            risk_aversion: DEFAULT_RISK_AVERSION,
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    #[serde(default)]
    pub returns: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticReturns>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub settings: BacktestSettings,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Checkpoint per model reference used by regime strategies.
    #[serde(default)]
    pub models: BTreeMap<String, PathBuf>,
    /// Trailing window behind each daily regime prediction.
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_weights_every")]
    pub weights_every: usize,
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.returns.is_some() == self.synthetic.is_some() {
            return Err(Error::Config("give exactly one of returns or synthetic".into()));
        }
        if let Some(s) = &self.synthetic {
            s.spec.validate()?;
            if s.days <= self.settings.start_day() || s.segment_len == 0 {
                return Err(Error::Config(format!(
                    "synthetic path of {} days (segments of {}) leaves nothing to trade",
                    s.days, s.segment_len
                )));
            }
        }
        self.settings.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies".into()));
        }
        for s in &self.strategies {
            s.validate()?;
            if let Strategy::RegimeDependent { model, .. } = s {
                if !self.models.contains_key(model) {
                    return Err(Error::Config(format!("strategy refers to unknown model {model:?}")));
                }
            }
        }
        if self.window_len < 2 {
            return Err(Error::Config("window_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub run_dir: PathBuf,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl ExportConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("bins must be positive".into()));
        }
        Ok(())
    }
}
