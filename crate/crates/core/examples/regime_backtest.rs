//! Backtests equal-weight, mean-variance and regime-dependent portfolios on a
//! synthetic return path whose regimes switch every few months. The regime
//! model is a briefly trained SPDNet.
//!
//! `cargo run --release --example regime_backtest -- [days] [epochs]`

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDate;
use spd_regime::backtest::{
    compare_strategies, comparison_csv, daily_predictions, default_regime_risk_aversion, BacktestSettings, Strategy,
};
use spd_regime::ingest::ReturnsTable;
use spd_regime::models::{build_model, train, ModelConfig, ModelKind};
use spd_regime::synth::{generate_dataset, synthetic_regime_path, FactorSpec, SynthSpec};

fn main() -> spd_regime::Result<()> {
    let mut args = std::env::args().skip(1);
    let days: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1400);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let spec = SynthSpec::default();
    let factors = FactorSpec::calibrated(&spec)?;

    let data: Vec<_> = generate_dataset(&spec, &factors)?.iter().map(|s| s.to_windowed()).collect();
    let mut config = ModelConfig::preset(ModelKind::SpdNet);
    config.epochs = epochs;
    let mut model = build_model(&config, config.seed)?;
    let t = Instant::now();
    let report = train(&mut model, &data, &[])?;
    println!("trained {epochs} epochs in {:.1?}", t.elapsed());

    let path = synthetic_regime_path(&spec, &factors, days, 126, 7)?;
    let d0 = NaiveDate::from_ymd_opt(2007, 1, 1).unwrap();
    let returns = ReturnsTable {
        dates: (0..days).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
        tickers: (0..spec.n_assets).map(|i| format!("S{i:02}")).collect(),
        values: path.returns,
    };
    let t = Instant::now();
    let preds = daily_predictions(&report.best_model, &returns, spec.window_len)?;
    let hits = preds
        .iter()
        .zip(&path.regimes)
        .filter(|(p, r)| p.as_ref() == Some(*r))
        .count();
    println!("daily predictions in {:.1?}; {hits}/{days} match the generating regime", t.elapsed());

    let strategies = [
        Strategy::EqualWeight,
        Strategy::MeanVariance { risk_aversion: 5.0 },
        Strategy::RegimeDependent {
            model: "spdnet".into(),
            risk_aversion: default_regime_risk_aversion(),
            filter: true,
        },
    ];
    let predictions = BTreeMap::from([("spdnet".to_string(), preds)]);
    let t = Instant::now();
    let (results, rows) = compare_strategies(&returns, &strategies, &predictions, &BacktestSettings::default())?;
    println!("backtested {} days in {:.1?}", results[0].returns.len(), t.elapsed());
    print!("{}", comparison_csv(&rows));
    Ok(())
}
