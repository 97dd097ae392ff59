use serde::{Deserialize, Serialize};

use super::label::{label_from_sr, sharpe_ratio, RegimeLabel};
use crate::error::{Error, Result};
use crate::spd::SpdMatrix;
use crate::synth::corr_from_returns;

pub const DEFAULT_WINDOW_LEN: usize = 252;
pub const DEFAULT_STRIDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Empirical,
    Synthetic,
    BlockResampled,
}

impl SampleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleSource::Empirical => "empirical",
            SampleSource::Synthetic => "synthetic",
            SampleSource::BlockResampled => "block_resampled",
        }
    }
}

/// One labelled correlation window. Indices are inclusive day offsets into
/// the source series.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    pub start_index: usize,
    pub end_index: usize,
    pub corr: SpdMatrix,
    pub label: RegimeLabel,
    pub source: SampleSource,
}

impl WindowedSample {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, lo: i64, hi: i64) -> bool {
        (self.end_index as i64) >= lo && (self.start_index as i64) <= hi
    }
}

/// Windows at offsets `0, stride, 2·stride, …`, each carrying its Pearson
/// correlation and Sharpe-ratio label. `returns[t][i]` is asset `i` on day `t`.
pub fn rolling_windows(returns: &[Vec<f64>], window_len: usize, stride: usize) -> Result<Vec<WindowedSample>> {
    if window_len < 2 || stride == 0 {
        return Err(Error::Config(format!(
            "window_len {window_len} must be >= 2 and stride {stride} >= 1"
        )));
    }
    if returns.len() < window_len {
        return Err(Error::Data(format!(
            "series of {} days is shorter than the {window_len}-day window",
            returns.len()
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_len <= returns.len() {
        let rows = &returns[start..start + window_len];
        let corr = corr_from_returns(rows)?;
        let sr = sharpe_ratio(rows)?;
        out.push(WindowedSample {
            start_index: start,
            end_index: start + window_len - 1,
            corr,
            label: label_from_sr(sr),
            source: SampleSource::Empirical,
        });
        start += stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(t: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| (0..n).map(|_| rng.random_range(-0.02..0.02)).collect()).collect()
    }

    #[test]
    fn single_window() {
        let r = noise(252, 4, 1);
        for stride in [1, 5, 300] {
            assert_eq!(rolling_windows(&r, 252, stride).unwrap().len(), 1);
        }
    }

    #[test]
    fn offsets() {
        let r = noise(262, 4, 2);
        let w = rolling_windows(&r, 252, 5).unwrap();
        let starts: Vec<usize> = w.iter().map(|s| s.start_index).collect();
        assert_eq!(starts, vec![0, 5, 10]);
        assert!(w.iter().all(|s| s.len() == 252));
    }

    #[test]
    fn count_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let len = rng.random_range(40..120);
            let stride = rng.random_range(1..9);
            let r = noise(len, 3, len as u64);
            let w = rolling_windows(&r, 30, stride).unwrap();
            assert_eq!(w.len(), (len - 30) / stride + 1);
        }
    }

    #[test]
    fn too_short() {
        let r = noise(100, 3, 4);
        assert!(matches!(rolling_windows(&r, 252, 5), Err(Error::Data(_))));
    }
}
