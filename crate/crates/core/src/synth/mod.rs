//! Nested hierarchical factor model: block hierarchical correlation
//! structures per regime, Student-t return windows, and labelled synthetic
//! datasets.

mod sample;

pub use sample::{
    apply_permutation, corr_from_returns, invert_permutation, permute_corr, random_permutation, student_t_sample,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regimes::{
    label_from_sr, sharpe_ratio, PerRegime, Regime, RegimeLabel, SampleSource, WindowedSample, TRADING_DAYS,
};
use crate::spd::{Mat, SpdMatrix};

/// Each cluster splits into this many subclusters per extra level.
pub const SUBCLUSTER_SPLIT: usize = 2;
/// Smallest idiosyncratic variance share kept per asset.
pub const IDIO_FLOOR: f64 = 0.05;

/// Generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub window_len: usize,
    pub n_clusters: usize,
    /// Market, cluster, subcluster, … Level `ℓ ≥ 1` has
    /// `n_clusters · 2^(ℓ−1)` equal groups.
    pub n_levels: usize,
    pub dof: f64,
    /// Target mean off-diagonal correlation.
    pub regime_targets: PerRegime<f64>,
    pub n_series_total: usize,
    pub permute_seed: u64,
    pub rng_seed: u64,
    /// Annualized Sharpe ratio the simulated basket drifts toward.
    pub regime_sharpe: PerRegime<f64>,
    pub daily_vol: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_assets: 60,
            window_len: 252,
            n_clusters: 5,
            n_levels: 3,
            dof: 3.0,
            regime_targets: PerRegime {
                stressed: 0.24,
                normal: 0.18,
                rally: 0.10,
            },
            n_series_total: 18_000,
            permute_seed: 27,
            rng_seed: 27,
            regime_sharpe: PerRegime {
                stressed: -2.0,
                normal: 0.75,
                rally: 3.5,
            },
            daily_vol: 0.01,
        }
    }
}

impl SynthSpec {
    pub fn n_windows(&self) -> usize {
        self.n_series_total / self.n_assets.max(1)
    }

    /// Number of groups at `level`.
    pub fn groups(&self, level: usize) -> usize {
        if level == 0 {
            1
        } else {
            self.n_clusters * SUBCLUSTER_SPLIT.pow(level as u32 - 1)
        }
    }

    pub fn group_of(&self, asset: usize, level: usize) -> usize {
        asset / (self.n_assets / self.groups(level))
    }

    /// Fraction of distinct asset pairs sharing the level-`level` group.
    pub fn pair_fraction(&self, level: usize) -> f64 {
        let g = self.groups(level);
        let size = self.n_assets / g;
        let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
        g as f64 * pairs(size) / pairs(self.n_assets)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_assets < 2 || self.window_len < 2 {
            return cfg(format!(
                "need at least 2 assets and 2 days, got {} and {}",
                self.n_assets, self.window_len
            ));
        }
        if self.n_levels == 0 || self.n_clusters == 0 {
            return cfg("n_levels and n_clusters must be positive".into());
        }
        let finest = self.groups(self.n_levels - 1);
        if self.n_assets % finest != 0 || self.n_assets % self.n_clusters != 0 {
            return cfg(format!(
                "{} assets do not divide into {} clusters over {} levels",
                self.n_assets, self.n_clusters, self.n_levels
            ));
        }
        if self.n_levels > 1 && self.n_assets / finest < 2 {
            return cfg("finest groups need at least 2 assets".into());
        }
        if !(self.dof > 2.0) {
            return cfg(format!("dof must exceed 2, got {}", self.dof));
        }
        let t = &self.regime_targets;
        if !(t.stressed > t.normal && t.normal > t.rally && t.rally >= 0.0 && t.stressed < 1.0) {
            return cfg(format!("regime targets must satisfy 1 > stressed > normal > rally >= 0, got {t:?}"));
        }
        if self.n_series_total % self.n_assets != 0 || self.n_windows() == 0 {
            return cfg(format!(
                "n_series_total {} is not a positive multiple of n_assets {}",
                self.n_series_total, self.n_assets
            ));
        }
        if !(self.daily_vol > 0.0) || ![t.stressed, t.normal, t.rally].iter().all(|v| v.is_finite()) {
            return cfg("daily_vol must be positive".into());
        }
        let s = &self.regime_sharpe;
        if ![s.stressed, s.normal, s.rally].iter().all(|v| v.is_finite()) {
            return cfg("regime_sharpe values must be finite".into());
        }
        Ok(())
    }
}

/// Factor sensitivities and noise scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    /// Multiplicative per-asset jitter on each loading, drawn uniformly.
    pub beta_range: (f64, f64),
    /// Additive loading noise, as a fraction of the level loading.
    pub eta_scale: f64,
    /// Idiosyncratic variance multiplier; 1 fills each asset to unit variance.
    pub eps_scale: f64,
    /// Relative loading magnitude per level before calibration.
    pub level_shares: Vec<f64>,
    /// Loading per level, per regime.
    pub loadings: PerRegime<Vec<f64>>,
}

impl FactorSpec {
    /// Default noise settings with loadings calibrated to `spec`'s targets.
    pub fn calibrated(spec: &SynthSpec) -> Result<Self> {
        let shares: Vec<f64> = [1.0, 0.9, 0.8].iter().copied().cycle().take(spec.n_levels).collect();
        Self::calibrated_with(spec, shares, (0.9, 1.1), 0.1, 1.0)
    }

    pub fn calibrated_with(
        spec: &SynthSpec,
        level_shares: Vec<f64>,
        beta_range: (f64, f64),
        eta_scale: f64,
        eps_scale: f64,
    ) -> Result<Self> {
        spec.validate()?;
        let loadings = spec
            .regime_targets
            .try_map(|_, &target| calibrate_loadings(spec, &level_shares, target))?;
        let f = FactorSpec {
            beta_range,
            eta_scale,
            eps_scale,
            level_shares,
            loadings,
        };
        f.validate(spec)?;
        Ok(f)
    }

    pub fn validate(&self, spec: &SynthSpec) -> Result<()> {
        let (lo, hi) = self.beta_range;
        if !(lo >= 0.0 && hi >= lo) || !(self.eta_scale >= 0.0) || !(self.eps_scale > 0.0) {
            return Err(Error::Config(format!(
                "invalid factor scales: beta_range {:?}, eta_scale {}, eps_scale {}",
                self.beta_range, self.eta_scale, self.eps_scale
            )));
        }
        for r in Regime::ALL {
            let l = self.loadings.get(r);
            if l.len() != spec.n_levels || l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!(
                    "{r} loadings must be {} non-negative values, got {l:?}",
                    spec.n_levels
                )));
            }
        }
        Ok(())
    }
}

fn implied_mean(spec: &SynthSpec, loadings: &[f64]) -> f64 {
    loadings
        .iter()
        .enumerate()
        .map(|(l, a)| spec.pair_fraction(l) * a * a)
        .sum()
}

/// Finds `k` with mean off-diagonal of the loadings `k·shares` equal to
/// `target`, by bisection.
fn calibrate_loadings(spec: &SynthSpec, shares: &[f64], target: f64) -> Result<Vec<f64>> {
    if shares.len() != spec.n_levels || shares.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config(format!("need {} non-negative level shares", spec.n_levels)));
    }
    let norm2: f64 = shares.iter().map(|s| s * s).sum();
    if norm2 == 0.0 {
        return if target == 0.0 {
            Ok(vec![0.0; shares.len()])
        } else {
            Err(Error::Config("all level shares are zero".into()))
        };
    }
    // total loading² must stay below 1 - IDIO_FLOOR
    let k_max = ((1.0 - IDIO_FLOOR) / norm2).sqrt();
    let at = |k: f64| -> Vec<f64> { shares.iter().map(|s| k * s).collect() };
    if implied_mean(spec, &at(k_max)) < target {
        return Err(Error::Config(format!("target correlation {target} is unreachable with shares {shares:?}")));
    }
    let (mut lo, mut hi) = (0.0, k_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if implied_mean(spec, &at(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// Noise-free implied correlation of `regime`:
/// `cᵢⱼ = Σ loading²` over the levels whose group `i` and `j` share.
pub fn build_block_hierarchical_corr(spec: &SynthSpec, factors: &FactorSpec, regime: Regime) -> Result<SpdMatrix> {
    spec.validate()?;
    factors.validate(spec)?;
    let l = factors.loadings.get(regime);
    let total: f64 = l.iter().map(|a| a * a).sum();
    if total >= 1.0 {
        return Err(Error::Config(format!(
            "{regime} loadings imply within-group correlation {total} >= 1"
        )));
    }
    let n = spec.n_assets;
    let m = Mat::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (0..spec.n_levels)
                .filter(|&lv| spec.group_of(i, lv) == spec.group_of(j, lv))
                .map(|lv| l[lv] * l[lv])
                .sum()
        }
    });
    SpdMatrix::new(m)
}

/// Per-window covariance with jittered loadings, normalized to unit
/// diagonal.
fn jittered_corr<R: Rng + ?Sized>(spec: &SynthSpec, factors: &FactorSpec, regime: Regime, rng: &mut R) -> Mat {
    let n = spec.n_assets;
    let levels = spec.n_levels;
    let l = factors.loadings.get(regime);
    let (lo, hi) = factors.beta_range;
    let mut b = Mat::zeros(n, levels);
    for i in 0..n {
        for lv in 0..levels {
            let beta = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let eta: f64 = rng.sample(StandardNormal);
            b[(i, lv)] = l[lv] * (beta + factors.eta_scale * eta);
        }
    }
    let mut sigma = Mat::from_fn(n, n, |i, j| {
        (0..levels)
            .filter(|&lv| spec.group_of(i, lv) == spec.group_of(j, lv))
            .map(|lv| b[(i, lv)] * b[(j, lv)])
            .sum()
    });
    for i in 0..n {
        let common = sigma[(i, i)];
        sigma[(i, i)] += factors.eps_scale * (1.0 - common).max(IDIO_FLOOR);
    }
    let d: Vec<f64> = (0..n).map(|i| sigma[(i, i)].sqrt()).collect();
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { sigma[(i, j)] / (d[i] * d[j]) })
}

/// Simulated daily returns for `days` days of `regime`: Student-t noise
/// scaled to `daily_vol` plus a drift that puts the equal-weight basket at
/// the regime's target Sharpe ratio.
pub fn regime_returns<R: Rng + ?Sized>(
    spec: &SynthSpec,
    factors: &FactorSpec,
    regime: Regime,
    days: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let corr = jittered_corr(spec, factors, regime, rng);
    let n = spec.n_assets as f64;
    let basket_sd = spec.daily_vol * corr.sum().sqrt() / n;
    let drift = spec.regime_sharpe.get(regime) / TRADING_DAYS.sqrt() * basket_sd;
    let mut x = sample::student_t_with(&corr, spec.dof, days, rng)?;
    for row in x.iter_mut() {
        for v in row.iter_mut() {
            *v = drift + spec.daily_vol * *v;
        }
    }
    Ok(x)
}

/// One labelled synthetic correlation window.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub index: usize,
    pub corr: SpdMatrix,
    /// Label from the simulated basket's Sharpe ratio.
    pub label: RegimeLabel,
    /// Regime whose factor structure generated the window.
    pub generating_regime: Regime,
    /// Asset order: row `i` of `corr` is simulated asset `permutation[i]`.
    pub permutation: Vec<usize>,
    pub spec_echo: SynthSpec,
}

impl SyntheticSample {
    pub fn regime(&self) -> Regime {
        self.label.regime
    }

    /// As a labelled window placed at `index · window_len` on a synthetic
    /// timeline of back-to-back windows.
    pub fn to_windowed(&self) -> WindowedSample {
        let len = self.spec_echo.window_len;
        WindowedSample {
            start_index: self.index * len,
            end_index: (self.index + 1) * len - 1,
            corr: self.corr.clone(),
            label: self.label,
            source: SampleSource::Synthetic,
        }
    }
}

fn window_rng(spec: &SynthSpec, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(stream);
    rng
}

/// Generating regimes of every window: equal thirds, shuffled.
pub fn regime_schedule(spec: &SynthSpec) -> Vec<Regime> {
    let n = spec.n_windows();
    let mut s: Vec<Regime> = (0..n).map(|i| Regime::ALL[i * 3 / n.max(1)]).collect();
    s.shuffle(&mut window_rng(spec, 0));
    s
}

/// Generates `n_series_total / n_assets` windows. Window `w` draws from its
/// own stream so the result does not depend on generation order. Every
/// window is permuted by the same seeded asset permutation.
pub fn generate_dataset(spec: &SynthSpec, factors: &FactorSpec) -> Result<Vec<SyntheticSample>> {
    spec.validate()?;
    factors.validate(spec)?;
    let perm = random_permutation(spec.n_assets, spec.permute_seed);
    regime_schedule(spec)
        .into_iter()
        .enumerate()
        .map(|(w, regime)| {
            let mut rng = window_rng(spec, w as u64 + 1);
            let returns = regime_returns(spec, factors, regime, spec.window_len, &mut rng)?;
            let label = label_from_sr(sharpe_ratio(&returns)?);
            let corr = corr_from_returns(&returns)?;
            let permuted = SpdMatrix::from_sym(
                crate::spd::SymMatrix::new(apply_permutation(corr.as_mat(), &perm))?,
                corr.tolerance(),
            )?;
            Ok(SyntheticSample {
                index: w,
                corr: permuted,
                label,
                generating_regime: regime,
                permutation: perm.clone(),
                spec_echo: spec.clone(),
            })
        })
        .collect()
}

/// Returns series that switches regime every `segment_len` days. Columns
/// follow the dataset's permuted asset order.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimePath {
    pub returns: Vec<Vec<f64>>,
    pub regimes: Vec<Regime>,
}

pub fn synthetic_regime_path(
    spec: &SynthSpec,
    factors: &FactorSpec,
    days: usize,
    segment_len: usize,
    seed: u64,
) -> Result<RegimePath> {
    spec.validate()?;
    factors.validate(spec)?;
    if segment_len == 0 {
        return Err(Error::Config("segment_len must be positive".into()));
    }
    let perm = random_permutation(spec.n_assets, spec.permute_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(days);
    let mut regimes = Vec::with_capacity(days);
    while returns.len() < days {
        let regime = Regime::ALL[rng.random_range(0..3)];
        let len = segment_len.min(days - returns.len());
        for row in regime_returns(spec, factors, regime, len, &mut rng)? {
            returns.push(perm.iter().map(|&p| row[p]).collect());
            regimes.push(regime);
        }
    }
    Ok(RegimePath { returns, regimes })
}
