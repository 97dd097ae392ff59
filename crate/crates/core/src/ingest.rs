//! Price CSV ingestion, simple returns and cleaning.
//!
//! Input files look like `date,TICK1,TICK2,…` with ISO-8601 dates. Empty
//! cells and `NA` mark missing prices; anything else must parse as a number.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_MISSING_FRAC: f64 = 0.05;
pub const DEFAULT_FFILL_LIMIT: usize = 5;

/// Which columns to read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSchema {
    pub date_column: String,
    /// Tickers to keep, in this order. `None` keeps every column.
    pub tickers: Option<Vec<String>>,
}

impl Default for PriceSchema {
    fn default() -> Self {
        PriceSchema {
            date_column: "date".into(),
            tickers: None,
        }
    }
}

/// Prices with `None` for missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `values[t][i]`.
    pub values: Vec<Vec<Option<f64>>>,
}

/// Daily simple returns. `NaN` marks a missing value; a cleaned table has
/// none.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `values[t][i]`.
    pub values: Vec<Vec<f64>>,
}

impl ReturnsTable {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_clean(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// Rows `range`, keeping every column.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ReturnsTable {
        ReturnsTable {
            dates: self.dates[range.clone()].to_vec(),
            tickers: self.tickers.clone(),
            values: self.values[range].to_vec(),
        }
    }

    /// `date,TICK1,…` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file produced by [`ReturnsTable::write_csv`].
    pub fn read_csv(path: &Path) -> Result<ReturnsTable> {
        let p = load_prices_csv(path, &PriceSchema::default())?;
        Ok(ReturnsTable {
            dates: p.dates,
            tickers: p.tickers,
            values: p
                .values
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
                .collect(),
        })
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

pub fn load_prices_csv(path: &Path, schema: &PriceSchema) -> Result<PriceTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_prices_csv(f, schema)
}

/// Rows and columns in errors are 1-based data rows (the header is row 0)
/// and 0-based file columns (the date column is column 0 when first).
pub fn parse_prices_csv<R: Read>(reader: R, schema: &PriceSchema) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let date_col = header
        .iter()
        .position(|h| *h == schema.date_column)
        .ok_or_else(|| Error::MissingColumn(schema.date_column.clone()))?;
    let columns: Vec<(usize, String)> = match &schema.tickers {
        Some(list) => list
            .iter()
            .map(|t| {
                header
                    .iter()
                    .position(|h| h == t)
                    .map(|c| (c, t.clone()))
                    .ok_or_else(|| Error::MissingColumn(t.clone()))
            })
            .collect::<Result<_>>()?,
        None => header
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != date_col)
            .map(|(c, h)| (c, h.clone()))
            .collect(),
    };
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let d = parse_date(cell(date_col)).ok_or_else(|| Error::UnparseableCell {
            row,
            col: date_col,
            value: cell(date_col).to_string(),
        })?;
        if dates.last().is_some_and(|prev| d <= *prev) {
            return Err(Error::NonMonotonicDates { row });
        }
        dates.push(d);
        let vals = columns
            .iter()
            .map(|&(c, _)| {
                let s = cell(c);
                if s.is_empty() || s.eq_ignore_ascii_case("na") {
                    return Ok(None);
                }
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::UnparseableCell {
                        row,
                        col: c,
                        value: s.to_string(),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(vals);
    }
    Ok(PriceTable {
        dates,
        tickers: columns.into_iter().map(|(_, t)| t).collect(),
        values,
    })
}

/// One ticker per line; blank lines and `#` comments are skipped.
pub fn load_constituents(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if list.is_empty() {
        return Err(Error::Data(format!("{} lists no tickers", path.display())));
    }
    Ok(list)
}

/// `r_t = p_t / p_{t−1} − 1`; the first date is dropped. A return is
/// missing when either price is.
pub fn to_returns(prices: &PriceTable) -> Result<ReturnsTable> {
    for (t, row) in prices.values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if let Some(p) = v {
                if *p <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        ticker: prices.tickers[i].clone(),
                        row: t + 1,
                    });
                }
            }
        }
    }
    let values = prices
        .values
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => b / a - 1.0,
                    _ => f64::NAN,
                })
                .collect()
        })
        .collect();
    Ok(ReturnsTable {
        dates: prices.dates.iter().skip(1).copied().collect(),
        tickers: prices.tickers.clone(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetCleaning {
    pub ticker: String,
    pub dropped: bool,
    pub missing_fraction: f64,
    pub forward_filled: usize,
    pub zero_filled: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub assets: Vec<AssetCleaning>,
}

impl CleaningReport {
    pub fn dropped(&self) -> Vec<&str> {
        self.assets.iter().filter(|a| a.dropped).map(|a| a.ticker.as_str()).collect()
    }

    /// `ticker,status,missing_fraction,forward_filled,zero_filled`.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "ticker,status,missing_fraction,forward_filled,zero_filled").unwrap();
        for a in &self.assets {
            let status = if a.dropped { "dropped" } else { "kept" };
            writeln!(
                out,
                "{},{status},{},{},{}",
                a.ticker, a.missing_fraction, a.forward_filled, a.zero_filled
            )
            .unwrap();
        }
        String::from_utf8(out).unwrap()
    }
}

/// Drops assets missing more than `max_missing_frac` of their values, then
/// carries the last observed value forward across gaps for up to
/// `ffill_limit` days and zero-fills whatever remains.
pub fn clean(table: &ReturnsTable, max_missing_frac: f64, ffill_limit: usize) -> Result<(ReturnsTable, CleaningReport)> {
    if !(0.0..=1.0).contains(&max_missing_frac) {
        return Err(Error::Config(format!("max_missing_frac {max_missing_frac} must be in [0, 1]")));
    }
    let t = table.n_days();
    let mut report = CleaningReport::default();
    let mut keep = Vec::new();
    for (i, ticker) in table.tickers.iter().enumerate() {
        let missing = table.values.iter().filter(|r| !r[i].is_finite()).count();
        let frac = if t == 0 { 0.0 } else { missing as f64 / t as f64 };
        let dropped = frac > max_missing_frac;
        if !dropped {
            keep.push((i, report.assets.len()));
        }
        report.assets.push(AssetCleaning {
            ticker: ticker.clone(),
            dropped,
            missing_fraction: frac,
            forward_filled: 0,
            zero_filled: 0,
        });
    }
    if keep.is_empty() {
        return Err(Error::AllAssetsDropped);
    }
    let mut values = vec![vec![0.0; keep.len()]; t];
    for (k, &(i, rep)) in keep.iter().enumerate() {
        let mut last: Option<f64> = None;
        let mut gap = 0;
        for (day, row) in table.values.iter().enumerate() {
            let v = row[i];
            values[day][k] = if v.is_finite() {
                last = Some(v);
                gap = 0;
                v
            } else {
                gap += 1;
                match last {
                    Some(prev) if gap <= ffill_limit => {
                        report.assets[rep].forward_filled += 1;
                        prev
                    }
                    _ => {
                        report.assets[rep].zero_filled += 1;
                        0.0
                    }
                }
            };
        }
    }
    Ok((
        ReturnsTable {
            dates: table.dates.clone(),
            tickers: keep.iter().map(|&(i, _)| table.tickers[i].clone()).collect(),
            values,
        },
        report,
    ))
}
