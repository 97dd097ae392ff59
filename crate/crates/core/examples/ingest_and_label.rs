//! Writes a synthetic price file with gaps, ingests and cleans it, cuts
//! labelled rolling windows, and builds a purged, embargoed split around a
//! dated test period. Finishes with a block-resampled chronology.
//!
//! `cargo run --release --example ingest_and_label`

use std::fmt::Write as _;

use chrono::NaiveDate;
use spd_regime::ingest::{clean, load_prices_csv, to_returns, PriceSchema};
use spd_regime::regimes::{
    block_resample, index_range_for_dates, purged_split, rolling_windows, Regime, DEFAULT_BLOCK_LEN,
    DEFAULT_EMBARGO_DAYS,
};
use spd_regime::synth::{synthetic_regime_path, FactorSpec, SynthSpec};
use spd_regime::Error;

fn main() -> spd_regime::Result<()> {
    let spec = SynthSpec::default();
    let days = 1500;
    let path = synthetic_regime_path(&spec, &FactorSpec::calibrated(&spec)?, days, 252, 3)?;
    let d0 = NaiveDate::from_ymd_opt(2005, 1, 3).unwrap();
    let dates: Vec<NaiveDate> = (0..=days).map(|i| d0 + chrono::Days::new(i as u64)).collect();

    let mut csv = String::from("date");
    for i in 0..spec.n_assets {
        let _ = write!(csv, ",T{i:02}");
    }
    csv.push('\n');
    let mut prices = vec![100.0; spec.n_assets];
    for (t, d) in dates.iter().enumerate() {
        let _ = write!(csv, "{d}");
        for (i, p) in prices.iter_mut().enumerate() {
            if t > 0 {
                *p *= 1.0 + path.returns[t - 1][i];
            }
            if (i == 7 && t % 97 == 50) || (i == 59 && t > 1400) {
                csv.push_str(",NA");
            } else {
                let _ = write!(csv, ",{p}");
            }
        }
        csv.push('\n');
    }
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let file = dir.path().join("prices.csv");
    std::fs::write(&file, csv).map_err(|e| Error::io(&file, e))?;

    let table = load_prices_csv(&file, &PriceSchema::default())?;
    let (returns, report) = clean(&to_returns(&table)?, 0.05, 5)?;
    println!("ingested {} days x {} assets; dropped {:?}", returns.n_days(), returns.n_assets(), report.dropped());
    let filled: usize = report.assets.iter().map(|a| a.forward_filled).sum();
    println!("forward-filled {filled} cells");

    let windows = rolling_windows(&returns.values, 252, 5)?;
    let count = |r: Regime| windows.iter().filter(|w| w.label.regime == r).count();
    println!(
        "{} windows: {} stressed, {} normal, {} rally",
        windows.len(),
        count(Regime::Stressed),
        count(Regime::Normal),
        count(Regime::Rally)
    );

    let from = NaiveDate::from_ymd_opt(2008, 1, 1).unwrap();
    let to = NaiveDate::from_ymd_opt(2008, 12, 31).unwrap();
    let range = index_range_for_dates(&returns.dates, from, to)?;
    let plan = purged_split(&windows, range, DEFAULT_EMBARGO_DAYS, 0.15)?;
    let (lo, hi) = plan.forbidden_zone();
    println!(
        "test days {range:?}; forbidden zone [{lo}, {hi}]; train {} / val {} / test {} / purged {}",
        plan.train.len(),
        plan.val.len(),
        plan.test.len(),
        plan.purged.len()
    );
    let leaks = plan
        .train
        .iter()
        .chain(&plan.val)
        .filter(|&&i| windows[i].overlaps(lo, hi))
        .count();
    println!("train/val windows touching the forbidden zone: {leaks}");

    let resampled = block_resample(&windows, DEFAULT_BLOCK_LEN, 5)?;
    let starts: Vec<usize> = resampled.iter().take(15).map(|w| w.start_index).collect();
    println!("first resampled window starts: {starts:?}");
    Ok(())
}
