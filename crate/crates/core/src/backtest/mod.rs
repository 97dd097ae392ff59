//! Daily-rebalanced long-only mean-variance backtests, with optional
//! regime-dependent risk aversion.

mod optimize;

pub use optimize::{mv_objective, mv_optimize, mv_optimize_from, project_simplex, PortfolioWeights, KKT_TOLERANCE};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnsTable;
use crate::models::{predict, SpdModel};
use crate::regimes::{PerRegime, Regime, RegimeLabel, SampleSource, WindowedSample, TRADING_DAYS};
use crate::spd::{Mat, SpdMatrix};
use crate::synth::corr_from_returns;

pub const DEFAULT_RISK_AVERSION: f64 = 5.0;
pub const DEFAULT_LOOKBACK: usize = 252;
/// Fewest filtered days accepted by [`estimate_inputs`].
pub const MIN_ESTIMATION_DAYS: usize = 20;

pub fn default_regime_risk_aversion() -> PerRegime<f64> {
    PerRegime {
        stressed: 20.0,
        normal: 5.0,
        rally: 1.0,
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    EqualWeight,
    MeanVariance {
        risk_aversion: f64,
    },
    /// Picks risk aversion by the previous day's predicted regime. With
    /// `filter`, moments are estimated only on lookback days that carried
    /// the same prediction.
    RegimeDependent {
        model: String,
        risk_aversion: PerRegime<f64>,
        #[serde(default = "yes")]
        filter: bool,
    },
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::EqualWeight => "equal_weight".into(),
            Strategy::MeanVariance { .. } => "mean_variance".into(),
            Strategy::RegimeDependent { model, .. } => format!("regime_{model}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |g: f64| {
            if g > 0.0 && g.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{}: risk aversion {g} must be positive", self.name())))
            }
        };
        match self {
            Strategy::EqualWeight => Ok(()),
            Strategy::MeanVariance { risk_aversion } => check(*risk_aversion),
            Strategy::RegimeDependent { model, risk_aversion, .. } => {
                if model.is_empty() {
                    return Err(Error::Config("regime strategy needs a model reference".into()));
                }
                risk_aversion.try_map(|_, g| check(*g)).map(|_| ())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSettings {
    /// Days of history behind each moment estimate.
    pub lookback: usize,
    /// First traded day; defaults to `lookback`.
    pub start: Option<usize>,
    pub min_estimation_days: usize,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        BacktestSettings {
            lookback: DEFAULT_LOOKBACK,
            start: None,
            min_estimation_days: MIN_ESTIMATION_DAYS,
        }
    }
}

impl BacktestSettings {
    pub fn start_day(&self) -> usize {
        self.start.unwrap_or(self.lookback)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback < 2 {
            return Err(Error::Config(format!("lookback {} must be at least 2", self.lookback)));
        }
        if self.start_day() < self.lookback {
            return Err(Error::Config(format!(
                "start day {} precedes the first full lookback {}",
                self.start_day(),
                self.lookback
            )));
        }
        if self.min_estimation_days < 2 {
            return Err(Error::Config("min_estimation_days must be at least 2".into()));
        }
        Ok(())
    }
}

/// Restricts estimation to days whose trailing window was predicted as
/// `regime`. `regimes` is aligned with the history rows.
#[derive(Clone, Copy, Debug)]
pub struct RegimeFilter<'a> {
    pub regimes: &'a [Option<Regime>],
    pub regime: Regime,
}

/// Mean and sample covariance (divisor `T − 1`) of the last `lookback` rows
/// of `history`. A singular covariance is lifted onto the SPD cone.
pub fn estimate_inputs(
    history: &[Vec<f64>],
    lookback: usize,
    filter: Option<RegimeFilter<'_>>,
    min_days: usize,
) -> Result<(Vec<f64>, SpdMatrix)> {
    if lookback > history.len() {
        return Err(Error::Estimation(format!(
            "lookback {lookback} exceeds history of {} days",
            history.len()
        )));
    }
    let first = history.len() - lookback;
    let rows: Vec<&Vec<f64>> = match filter {
        None => history[first..].iter().collect(),
        Some(f) => {
            if f.regimes.len() != history.len() {
                return Err(Error::shape(
                    format!("{} regime entries", history.len()),
                    f.regimes.len(),
                ));
            }
            (first..history.len())
                .filter(|&d| f.regimes[d] == Some(f.regime))
                .map(|d| &history[d])
                .collect()
        }
    };
    let t = rows.len();
    if t < min_days.max(2) {
        return Err(Error::Estimation(format!("{t} usable days, need {}", min_days.max(2))));
    }
    let n = rows[0].len();
    let mut mu = vec![0.0; n];
    for r in &rows {
        for (m, v) in mu.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= t as f64);
    let mut cov = Mat::zeros(n, n);
    for r in &rows {
        for i in 0..n {
            let di = r[i] - mu[i];
            for j in i..n {
                cov[(i, j)] += di * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / (t - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Estimation("non-finite moments".into()));
    }
    Ok((mu, SpdMatrix::new(cov)?))
}

/// One strategy's path. `equity` and `dates` have one more entry than the
/// per-day fields: index 0 is the close before the first traded day.
#[derive(Clone, Debug, PartialEq)]
pub struct BacktestResult {
    pub strategy: String,
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<PortfolioWeights>,
    pub returns: Vec<f64>,
    pub equity: Vec<f64>,
    /// Regime that drove each day's choice (regime strategies only).
    pub regimes: Vec<Option<Regime>>,
}

impl BacktestResult {
    pub fn cumulative_return(&self) -> f64 {
        self.equity.last().copied().unwrap_or(1.0) - 1.0
    }
}

fn check_table(returns: &ReturnsTable) -> Result<()> {
    if !returns.is_clean() {
        return Err(Error::Data("returns contain missing values".into()));
    }
    if returns.values.iter().any(|r| r.len() != returns.n_assets()) {
        return Err(Error::Data("ragged returns table".into()));
    }
    if returns.n_assets() == 0 {
        return Err(Error::Data("returns table has no assets".into()));
    }
    Ok(())
}

/// Runs `strategy` over `returns`, trading from
/// [`BacktestSettings::start_day`] to the last row. Weights for day `t`
/// use rows before `t` and `predictions[t − 1]` only. A missing prediction
/// counts as normal; a filtered estimate with too few days falls back to
/// the full lookback.
pub fn run_backtest(
    returns: &ReturnsTable,
    strategy: &Strategy,
    predictions: Option<&[Option<Regime>]>,
    settings: &BacktestSettings,
) -> Result<BacktestResult> {
    strategy.validate()?;
    settings.validate()?;
    check_table(returns)?;
    let n_days = returns.n_days();
    let n = returns.n_assets();
    let start = settings.start_day();
    if start >= n_days {
        return Err(Error::Data(format!("start day {start} leaves nothing to trade in {n_days} days")));
    }
    if let Strategy::RegimeDependent { model, .. } = strategy {
        match predictions {
            Some(p) if p.len() == n_days => {}
            Some(p) => return Err(Error::shape(format!("{n_days} predictions"), p.len())),
            None => return Err(Error::Data(format!("no predictions for model {model:?}"))),
        }
    }
    let days = n_days - start;
    let mut result = BacktestResult {
        strategy: strategy.name(),
        dates: returns.dates[start - 1..].to_vec(),
        weights: Vec::with_capacity(days),
        returns: Vec::with_capacity(days),
        equity: Vec::with_capacity(days + 1),
        regimes: Vec::with_capacity(days),
    };
    result.equity.push(1.0);
    let mut previous: Option<Vec<f64>> = None;
    for t in start..n_days {
        let history = &returns.values[..t];
        let (w, regime) = match strategy {
            Strategy::EqualWeight => (PortfolioWeights::equal(n), None),
            Strategy::MeanVariance { risk_aversion } => {
                let (mu, sigma) = estimate_inputs(history, settings.lookback, None, settings.min_estimation_days)?;
                (mv_optimize_from(&mu, &sigma, *risk_aversion, previous.as_deref())?, None)
            }
            Strategy::RegimeDependent {
                risk_aversion, filter, ..
            } => {
                let preds = predictions.expect("checked above");
                let regime = preds[t - 1].unwrap_or(Regime::Normal);
                let filtered = if *filter {
                    let f = RegimeFilter {
                        regimes: &preds[..t],
                        regime,
                    };
                    match estimate_inputs(history, settings.lookback, Some(f), settings.min_estimation_days) {
                        Ok(m) => Some(m),
                        Err(Error::Estimation(_)) => None,
                        Err(e) => return Err(e),
                    }
                } else {
                    None
                };
                let (mu, sigma) = match filtered {
                    Some(m) => m,
                    None => estimate_inputs(history, settings.lookback, None, settings.min_estimation_days)?,
                };
                let g = *risk_aversion.get(regime);
                (mv_optimize_from(&mu, &sigma, g, previous.as_deref())?, Some(regime))
            }
        };
        let row = &returns.values[t];
        let r = match strategy {
            Strategy::EqualWeight => row.iter().sum::<f64>() / n as f64,
            _ => w.dot(row),
        };
        let last = *result.equity.last().unwrap();
        result.equity.push(last * (1.0 + r));
        result.returns.push(r);
        result.regimes.push(regime);
        previous = Some(w.weights.clone());
        result.weights.push(w);
    }
    Ok(result)
}

/// One regime prediction per day from the trailing `window_len`-day
/// correlation, `None` before the first full window or when a window has a
/// constant column.
pub fn daily_predictions(model: &SpdModel, returns: &ReturnsTable, window_len: usize) -> Result<Vec<Option<Regime>>> {
    check_table(returns)?;
    if returns.n_assets() != model.input_dim() {
        return Err(Error::shape(
            format!("{} assets", model.input_dim()),
            returns.n_assets(),
        ));
    }
    let mut out = vec![None; returns.n_days()];
    if window_len < 2 || window_len > returns.n_days() {
        return Ok(out);
    }
    let mut days = Vec::new();
    let mut windows = Vec::new();
    for d in window_len - 1..returns.n_days() {
        let lo = d + 1 - window_len;
        match corr_from_returns(&returns.values[lo..=d]) {
            Ok(corr) => {
                days.push(d);
                windows.push(WindowedSample {
                    start_index: lo,
                    end_index: d,
                    corr,
                    label: RegimeLabel {
                        regime: Regime::Normal,
                        sr_value: 0.0,
                    },
                    source: SampleSource::Empirical,
                });
            }
            Err(Error::Data(_)) => {}
            Err(e) => return Err(e),
        }
    }
    for (d, r) in days.into_iter().zip(predict(model, &windows)?) {
        out[d] = Some(r);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub cumulative_return: f64,
    pub annualized_sharpe: f64,
    pub max_drawdown: f64,
}

/// Largest fractional fall from a running peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &e in equity {
        peak = peak.max(e);
        if peak > 0.0 {
            worst = worst.max((peak - e) / peak);
        }
    }
    worst
}

/// `√252 · mean / sd` of daily returns; zero when the deviation is.
pub fn annualized_sharpe(returns: &[f64]) -> f64 {
    let t = returns.len();
    if t < 2 {
        return 0.0;
    }
    if returns.iter().all(|r| *r == returns[0]) {
        return 0.0;
    }
    let mean = returns.iter().sum::<f64>() / t as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    if var <= 0.0 {
        return 0.0;
    }
    TRADING_DAYS.sqrt() * mean / var.sqrt()
}

pub fn summarize(result: &BacktestResult) -> ComparisonRow {
    ComparisonRow {
        strategy: result.strategy.clone(),
        cumulative_return: result.cumulative_return(),
        annualized_sharpe: annualized_sharpe(&result.returns),
        max_drawdown: max_drawdown(&result.equity),
    }
}

/// Backtests every strategy over the same span. Regime strategies look up
/// their predictions by model reference.
pub fn compare_strategies(
    returns: &ReturnsTable,
    strategies: &[Strategy],
    predictions: &BTreeMap<String, Vec<Option<Regime>>>,
    settings: &BacktestSettings,
) -> Result<(Vec<BacktestResult>, Vec<ComparisonRow>)> {
    let mut results = Vec::with_capacity(strategies.len());
    for s in strategies {
        let p = match s {
            Strategy::RegimeDependent { model, .. } => Some(
                predictions
                    .get(model)
                    .ok_or_else(|| Error::Data(format!("no predictions for model {model:?}")))?
                    .as_slice(),
            ),
            _ => None,
        };
        results.push(run_backtest(returns, s, p, settings)?);
    }
    let rows = results.iter().map(summarize).collect();
    Ok((results, rows))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `date,strategy,equity`, long format.
pub fn equity_csv(results: &[BacktestResult]) -> String {
    let mut s = String::from("date,strategy,equity\n");
    for r in results {
        for (d, e) in r.dates.iter().zip(&r.equity) {
            let _ = writeln!(s, "{d},{},{e}", r.strategy);
        }
    }
    s
}

pub fn write_equity_csv(path: &Path, results: &[BacktestResult]) -> Result<()> {
    write_text(path, &equity_csv(results))
}

/// Weights every `every` traded days (and on the last one), one column per
/// ticker.
pub fn weights_csv(results: &[BacktestResult], tickers: &[String], every: usize) -> String {
    let every = every.max(1);
    let mut s = String::from("date,strategy");
    for t in tickers {
        s.push(',');
        s.push_str(t);
    }
    s.push('\n');
    for r in results {
        let last = r.weights.len().saturating_sub(1);
        for (k, w) in r.weights.iter().enumerate() {
            if k % every != 0 && k != last {
                continue;
            }
            let _ = write!(s, "{},{}", r.dates[k + 1], r.strategy);
            for v in &w.weights {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_weights_csv(path: &Path, results: &[BacktestResult], tickers: &[String], every: usize) -> Result<()> {
    write_text(path, &weights_csv(results, tickers, every))
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("strategy,cumulative_return,annualized_sharpe,max_drawdown\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.strategy, r.cumulative_return, r.annualized_sharpe, r.max_drawdown
        );
    }
    s
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    write_text(path, &comparison_csv(rows))
}
