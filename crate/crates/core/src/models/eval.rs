use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::SpdModel;
use super::{predicted_regime, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::regimes::{Regime, WindowedSample};

/// A predicted column holding more than this share of all predictions is a
/// corner solution (when true classes are balanced).
pub const CORNER_SHARE_THRESHOLD: f64 = 0.9;
/// True classes count as balanced when each holds at least this share.
pub const CORNER_BALANCE_FLOOR: f64 = 1.0 / 6.0;

const PREDICT_CHUNK: usize = 64;

/// Rows are true regimes, columns predicted, both in class-index order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[Regime], predicted: &[Regime]) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, r: Regime) -> usize {
        self.counts[r.index()].iter().sum()
    }

    pub fn column_total(&self, r: Regime) -> usize {
        self.counts.iter().map(|row| row[r.index()]).sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total().max(1) as f64
    }

    /// `None` for classes absent from the truth.
    pub fn per_class_recall(&self) -> [Option<f64>; NUM_CLASSES] {
        Regime::ALL.map(|r| {
            let n = self.row_total(r);
            (n > 0).then(|| self.counts[r.index()][r.index()] as f64 / n as f64)
        })
    }

    /// One predicted class takes over `CORNER_SHARE_THRESHOLD` of the
    /// predictions while every true class holds at least
    /// `CORNER_BALANCE_FLOOR` of the samples.
    pub fn corner_solution(&self) -> bool {
        let n = self.total();
        if n == 0 {
            return false;
        }
        let share = |k: usize| k as f64 / n as f64;
        let balanced = Regime::ALL.iter().all(|&r| share(self.row_total(r)) >= CORNER_BALANCE_FLOOR);
        balanced && Regime::ALL.iter().any(|&r| share(self.column_total(r)) > CORNER_SHARE_THRESHOLD)
    }

    /// `true\predicted,stressed,normal,rally` plus one row per true regime.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "true\\predicted,stressed,normal,rally").unwrap();
        for r in Regime::ALL {
            let c = self.counts[r.index()];
            writeln!(out, "{r},{},{},{}", c[0], c[1], c[2]).unwrap();
        }
        String::from_utf8(out).unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub accuracy: f64,
    pub per_class_recall: [Option<f64>; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
    pub corner_solution: bool,
}

impl EvalReport {
    pub fn from_predictions(truth: &[Regime], predicted: &[Regime]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Data("cannot evaluate an empty dataset".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::shape(format!("{} predictions", truth.len()), predicted.len().to_string()));
        }
        let confusion = ConfusionMatrix::from_pairs(truth, predicted);
        Ok(EvalReport {
            n_samples: truth.len(),
            accuracy: confusion.accuracy(),
            per_class_recall: confusion.per_class_recall(),
            corner_solution: confusion.corner_solution(),
            confusion,
        })
    }
}

/// Inference-mode predictions, in input order.
pub fn predict(model: &SpdModel, samples: &[WindowedSample]) -> Result<Vec<Regime>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_CHUNK) {
        let xs: Vec<_> = chunk.iter().map(|s| s.corr.as_mat().clone()).collect();
        let o = model.forward_batch(&xs, false)?;
        out.extend(o.logits.iter().map(predicted_regime));
    }
    Ok(out)
}

pub fn evaluate(model: &SpdModel, samples: &[WindowedSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let predicted = predict(model, samples)?;
    let truth: Vec<Regime> = samples.iter().map(|s| s.label.regime).collect();
    EvalReport::from_predictions(&truth, &predicted)
}
