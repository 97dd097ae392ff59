use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::window::WindowedSample;
use crate::error::{Error, Result};

pub const DEFAULT_EMBARGO_DAYS: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitAssignment {
    Train,
    Val,
    Test,
    Purged,
}

impl SplitAssignment {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitAssignment::Train => "train",
            SplitAssignment::Val => "val",
            SplitAssignment::Test => "test",
            SplitAssignment::Purged => "purged",
        }
    }
}

/// Window indices per split. Index sets refer to positions in the window
/// list the plan was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub purged: Vec<usize>,
    pub embargo_days: usize,
    /// Inclusive day-index interval of the test period.
    pub test_range: (usize, usize),
    /// Window length used for the lookback margin.
    pub lookback: usize,
}

impl SplitPlan {
    /// Day interval no train/val window may touch:
    /// `[test_start − lookback − embargo, test_end + embargo]`.
    pub fn forbidden_zone(&self) -> (i64, i64) {
        (
            self.test_range.0 as i64 - self.lookback as i64 - self.embargo_days as i64,
            (self.test_range.1 + self.embargo_days) as i64,
        )
    }

    pub fn assignment(&self, window: usize) -> Option<SplitAssignment> {
        if self.train.contains(&window) {
            Some(SplitAssignment::Train)
        } else if self.val.contains(&window) {
            Some(SplitAssignment::Val)
        } else if self.test.contains(&window) {
            Some(SplitAssignment::Test)
        } else if self.purged.contains(&window) {
            Some(SplitAssignment::Purged)
        } else {
            None
        }
    }
}

/// Builds a purged, embargoed split.
///
/// Test windows lie entirely inside `test_range`. Every other window that
/// touches the forbidden zone (the test period widened by one lookback plus
/// the embargo before it and by the embargo after it) is purged. Validation
/// is the chronologically last `val_fraction` of what remains.
pub fn purged_split(
    windows: &[WindowedSample],
    test_range: (usize, usize),
    embargo_days: usize,
    val_fraction: f64,
) -> Result<SplitPlan> {
    if test_range.0 > test_range.1 {
        return Err(Error::Config(format!("test range {test_range:?} is reversed")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction {val_fraction} must be in [0, 1)")));
    }
    let lookback = windows.iter().map(WindowedSample::len).max().unwrap_or(0);
    let mut plan = SplitPlan {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        purged: Vec::new(),
        embargo_days,
        test_range,
        lookback,
    };
    let (lo, hi) = plan.forbidden_zone();
    let mut remaining = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if w.start_index >= test_range.0 && w.end_index <= test_range.1 {
            plan.test.push(i);
        } else if w.overlaps(lo, hi) {
            plan.purged.push(i);
        } else {
            remaining.push(i);
        }
    }
    if plan.test.is_empty() {
        return Err(Error::Data(format!("no window lies inside test range {test_range:?}")));
    }
    remaining.sort_by_key(|&i| (windows[i].start_index, i));
    let n_val = (remaining.len() as f64 * val_fraction).round() as usize;
    let split_at = remaining.len() - n_val;
    plan.val = remaining[split_at..].to_vec();
    plan.train = remaining[..split_at].to_vec();
    if plan.train.is_empty() {
        return Err(Error::EmptySplit);
    }
    Ok(plan)
}

/// Holds out the chronologically last `test_fraction` of the windows as
/// the test set and carves validation so that it makes up `val_fraction`
/// of all windows before purging.
pub fn chronological_split(
    windows: &[WindowedSample],
    val_fraction: f64,
    test_fraction: f64,
    embargo_days: usize,
) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && val_fraction >= 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "fractions val {val_fraction} and test {test_fraction} must be non-negative with a positive test share and sum below 1"
        )));
    }
    if windows.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut starts: Vec<usize> = windows.iter().map(|w| w.start_index).collect();
    starts.sort_unstable();
    let n = windows.len();
    let first_test = ((n as f64 * (1.0 - test_fraction)).round() as usize).min(n - 1);
    let test_start = starts[first_test];
    let test_end = windows.iter().map(|w| w.end_index).max().unwrap();
    purged_split(
        windows,
        (test_start, test_end),
        embargo_days,
        val_fraction / (1.0 - test_fraction),
    )
}

/// Inclusive index interval of `dates` falling within `[from, to]`.
pub fn index_range_for_dates(dates: &[NaiveDate], from: NaiveDate, to: NaiveDate) -> Result<(usize, usize)> {
    let first = dates.iter().position(|d| *d >= from);
    let last = dates.iter().rposition(|d| *d <= to);
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b)),
        _ => Err(Error::Data(format!("no trading days between {from} and {to}"))),
    }
}

/// `window_start,window_end,sr,label,split` rows.
pub fn write_labels_csv(path: &Path, windows: &[WindowedSample], plan: Option<&SplitPlan>) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "window_start,window_end,sr,label,split").unwrap();
    for (i, w) in windows.iter().enumerate() {
        let split = plan
            .and_then(|p| p.assignment(i))
            .map(SplitAssignment::as_str)
            .unwrap_or("");
        writeln!(
            out,
            "{},{},{},{},{}",
            w.start_index, w.end_index, w.label.sr_value, w.label.regime, split
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::{label_from_sr, SampleSource};
    use crate::spd::SpdMatrix;

    fn windows(n: usize, stride: usize, len: usize) -> Vec<WindowedSample> {
        (0..n)
            .map(|i| WindowedSample {
                start_index: i * stride,
                end_index: i * stride + len - 1,
                corr: SpdMatrix::identity(2),
                label: label_from_sr(0.0),
                source: SampleSource::Empirical,
            })
            .collect()
    }

    fn brute_force_clean(plan: &SplitPlan, w: &[WindowedSample]) -> bool {
        let (lo, hi) = plan.forbidden_zone();
        for &i in plan.train.iter().chain(&plan.val) {
            for day in w[i].start_index..=w[i].end_index {
                if (day as i64) >= lo && (day as i64) <= hi {
                    return false;
                }
            }
            for &t in &plan.test {
                if w[i].start_index <= w[t].end_index && w[t].start_index <= w[i].end_index {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn disjoint_far_ranges() {
        // non-overlapping windows of 10 days, test in the middle
        let w = windows(30, 10, 10);
        let plan = purged_split(&w, (150, 199), 0, 0.0).unwrap();
        assert_eq!(plan.test, (15..20).collect::<Vec<_>>());
        // lookback margin of one window before the test period
        assert_eq!(plan.purged, vec![14]);
        assert!(brute_force_clean(&plan, &w));
    }

    #[test]
    fn window_ending_inside_lookback_is_excluded() {
        let w = windows(40, 1, 5);
        // test covers days 20..=30, lookback 5: zone starts at day 15
        let plan = purged_split(&w, (20, 30), 0, 0.0).unwrap();
        // window 11 spans 11..=15 and ends one day inside the zone
        assert!(plan.purged.contains(&11));
        assert!(plan.train.contains(&10));
        assert!(brute_force_clean(&plan, &w));
    }

    #[test]
    fn embargo_extends_after_test() {
        let w = windows(60, 1, 5);
        let plan = purged_split(&w, (20, 30), 4, 0.2).unwrap();
        // windows starting within 4 days after day 30 are gone
        for i in 27..=34 {
            assert!(!plan.train.contains(&i) && !plan.val.contains(&i));
        }
        assert!(brute_force_clean(&plan, &w));
        // validation is the chronological tail
        let max_train = plan.train.iter().map(|&i| w[i].start_index).max().unwrap();
        assert!(plan.val.iter().all(|&i| w[i].start_index > max_train));
    }

    #[test]
    fn empty_training_set() {
        let w = windows(5, 1, 5);
        assert!(matches!(purged_split(&w, (0, 8), 2, 0.0), Err(Error::EmptySplit)));
    }

    #[test]
    fn date_range_lookup() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let dates = vec![d("2007-12-28"), d("2008-01-02"), d("2010-05-05"), d("2012-07-31"), d("2012-08-01")];
        assert_eq!(index_range_for_dates(&dates, d("2008-01-01"), d("2012-07-31")).unwrap(), (1, 3));
        assert!(index_range_for_dates(&dates, d("2013-01-01"), d("2014-01-01")).is_err());
    }
}
