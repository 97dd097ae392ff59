use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annualized Sharpe ratio below which a window is labelled stressed.
pub const STRESSED_BELOW: f64 = -0.5;
/// Annualized Sharpe ratio above which a window is labelled a rally.
pub const RALLY_ABOVE: f64 = 2.0;
/// Trading days per year used for annualization.
pub const TRADING_DAYS: f64 = 252.0;

/// Market regime classes, in the canonical class-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Stressed,
    Normal,
    Rally,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Stressed, Regime::Normal, Regime::Rally];

    pub fn index(self) -> usize {
        match self {
            Regime::Stressed => 0,
            Regime::Normal => 1,
            Regime::Rally => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Regime> {
        Regime::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Stressed => "stressed",
            Regime::Normal => "normal",
            Regime::Rally => "rally",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stressed" => Ok(Regime::Stressed),
            "normal" => Ok(Regime::Normal),
            "rally" => Ok(Regime::Rally),
            other => Err(Error::Data(format!("unknown regime label {other:?}"))),
        }
    }
}

/// One value per regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerRegime<T> {
    pub stressed: T,
    pub normal: T,
    pub rally: T,
}

impl<T> PerRegime<T> {
    pub fn get(&self, r: Regime) -> &T {
        match r {
            Regime::Stressed => &self.stressed,
            Regime::Normal => &self.normal,
            Regime::Rally => &self.rally,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Regime, &T) -> U) -> PerRegime<U> {
        PerRegime {
            stressed: f(Regime::Stressed, &self.stressed),
            normal: f(Regime::Normal, &self.normal),
            rally: f(Regime::Rally, &self.rally),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(Regime, &T) -> Result<U>) -> Result<PerRegime<U>> {
        Ok(PerRegime {
            stressed: f(Regime::Stressed, &self.stressed)?,
            normal: f(Regime::Normal, &self.normal)?,
            rally: f(Regime::Rally, &self.rally)?,
        })
    }
}

/// A regime together with the Sharpe ratio that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub sr_value: f64,
}

/// Threshold rule: `sr < −0.5` stressed, `sr > 2.0` rally, otherwise normal
/// (both boundaries are normal).
pub fn label_from_sr(sr: f64) -> RegimeLabel {
    let regime = if sr < STRESSED_BELOW {
        Regime::Stressed
    } else if sr > RALLY_ABOVE {
        Regime::Rally
    } else {
        Regime::Normal
    };
    RegimeLabel { regime, sr_value: sr }
}

/// Annualized Sharpe ratio of the equal-weight basket. `returns[t][i]` is the
/// return of asset `i` on day `t`. No risk-free rate.
pub fn sharpe_ratio(returns: &[Vec<f64>]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Data(format!("sharpe ratio needs at least 2 days, got {}", returns.len())));
    }
    let basket: Vec<f64> = returns
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                row.iter().sum::<f64>() / row.len() as f64
            }
        })
        .collect();
    let t = basket.len() as f64;
    let mean = basket.iter().sum::<f64>() / t;
    let var = basket.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1.0);
    let sd = var.sqrt();
    if sd < 1e-12 {
        return Err(Error::ZeroVolatility);
    }
    Ok(mean / sd * TRADING_DAYS.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(label_from_sr(-1.0).regime, Regime::Stressed);
        assert_eq!(label_from_sr(-0.5).regime, Regime::Normal);
        assert_eq!(label_from_sr(2.0).regime, Regime::Normal);
        assert_eq!(label_from_sr(2.5).regime, Regime::Rally);
        assert_eq!(label_from_sr(f64::NEG_INFINITY).regime, Regime::Stressed);
        assert_eq!(label_from_sr(-0.5000001).regime, Regime::Stressed);
    }

    #[test]
    fn zero_mean_window() {
        let r = vec![vec![0.01, -0.01], vec![-0.01, 0.01], vec![0.02, 0.0], vec![-0.02, 0.0]];
        assert!(sharpe_ratio(&r).unwrap().abs() < 1e-15);
    }

    #[test]
    fn direct_formula() {
        // basket returns alternate 0.001 ± 0.01·c so that mean = 0.001, sample sd = 0.01
        let n = 100;
        let c = ((n - 1) as f64 / n as f64).sqrt();
        let r: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let s = if t % 2 == 0 { 1.0 } else { -1.0 };
                vec![0.001 + s * 0.01 * c]
            })
            .collect();
        let sr = sharpe_ratio(&r).unwrap();
        assert!((sr - 0.1 * 252f64.sqrt()).abs() < 1e-9, "{sr}");
        assert!((sr - 1.5875).abs() < 1e-4);
    }

    #[test]
    fn constant_returns_have_no_volatility() {
        let r = vec![vec![0.01, 0.01]; 10];
        assert!(matches!(sharpe_ratio(&r), Err(Error::ZeroVolatility)));
        assert!(sharpe_ratio(&r[..1]).is_err());
    }

    #[test]
    fn regime_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
            assert_eq!(Regime::from_index(r.index()), Some(r));
        }
    }
}
