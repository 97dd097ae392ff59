use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::predict;
use super::network::{ParamKind, SpdModel};
use super::{batch_loss, predicted_regime};
use crate::error::{Error, Result};
use crate::layers::{sgd_momentum_step, stiefel_step, LogEigLayer};
use crate::regimes::{Regime, WindowedSample};
use crate::spd::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the total loss over the epoch's batches.
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_recon: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch with the highest validation accuracy (first on ties).
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    /// Parameters at `best_epoch`, or the final ones without validation data.
    pub best_model: SpdModel,
}

impl TrainingReport {
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "epoch,train_loss,train_acc,val_acc").unwrap();
        for e in &self.epochs {
            let val = e.val_acc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.train_acc, val).unwrap();
        }
        String::from_utf8(out).unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Sample indices for one epoch: minority classes topped up to the size of
/// the largest class by drawing with replacement, then shuffled.
fn epoch_order<R: Rng + ?Sized>(labels: &[Regime], oversample: bool, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    if oversample {
        let by_class: Vec<Vec<usize>> = Regime::ALL
            .iter()
            .map(|&r| (0..labels.len()).filter(|&i| labels[i] == r).collect())
            .collect();
        let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
        for members in by_class.iter().filter(|m| !m.is_empty()) {
            for _ in members.len()..target {
                order.push(members[rng.random_range(0..members.len())]);
            }
        }
    }
    order.shuffle(rng);
    order
}

/// [`train_with`] without a progress callback.
pub fn train(model: &mut SpdModel, train: &[WindowedSample], val: &[WindowedSample]) -> Result<TrainingReport> {
    train_with(model, train, val, |_| ControlFlow::Continue(()))
}

/// Runs `model.config.epochs` epochs of mini-batch Riemannian SGD with
/// momentum: BiMap weights move on the Stiefel manifold, everything else
/// takes Euclidean steps. `on_epoch` sees every epoch's statistics and may
/// stop training early by returning `Break`; the learning-rate schedule
/// always spans the configured epoch count.
pub fn train_with(
    model: &mut SpdModel,
    train: &[WindowedSample],
    val: &[WindowedSample],
    mut on_epoch: impl FnMut(&EpochStats) -> ControlFlow<()>,
) -> Result<TrainingReport> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit);
    }
    let xs: Vec<&Mat> = train.iter().map(|s| s.corr.as_mat()).collect();
    let labels: Vec<Regime> = train.iter().map(|s| s.label.regime).collect();
    let input_logs: Option<Vec<Mat>> = if model.is_unet() && cfg.recon_weight != 0.0 {
        Some(
            xs.iter()
                .map(|x| LogEigLayer.forward_mat(x).map(|(l, _)| l))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut buffers: Vec<Mat> = model
        .params_mut()
        .iter()
        .map(|(_, p)| Mat::zeros(p.nrows(), p.ncols()))
        .collect();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = None;
    let mut best_val_acc: Option<f64> = None;
    let mut best_model = model.clone();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate.at(epoch, cfg.epochs);
        let order = epoch_order(&labels, cfg.oversample, &mut rng);
        let (mut loss_sum, mut ce_sum, mut recon_sum) = (0.0, 0.0, 0.0);
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<Mat> = batch.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<Regime> = batch.iter().map(|&i| labels[i]).collect();
            let out = model.forward_batch(&bx, true)?;
            let logs: Option<Vec<&Mat>> = input_logs.as_ref().map(|l| batch.iter().map(|&i| &l[i]).collect());
            let bl = batch_loss(&out, &by, logs.as_deref(), cfg.recon_weight)?;
            if !bl.loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let n = batch.len() as f64;
            loss_sum += bl.loss * n;
            ce_sum += bl.ce * n;
            recon_sum += bl.recon * n;
            hits += out
                .logits
                .iter()
                .zip(&by)
                .filter(|(l, y)| predicted_regime(l) == **y)
                .count();

            let grads = model.backward_batch(&out.tape, &bl.grad_logits, bl.grad_recon.as_deref())?;
            if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::TrainingDiverged { epoch });
            }
            for (((kind, p), g), buf) in model.params_mut().into_iter().zip(&grads).zip(buffers.iter_mut()) {
                match kind {
                    ParamKind::Stiefel => stiefel_step(p, g, buf, lr, cfg.momentum)?,
                    ParamKind::Euclidean => sgd_momentum_step(p, g, buf, lr, cfg.momentum),
                }
            }
            model.update_running_stats(&out.tape)?;
        }
        let n = order.len() as f64;
        let val_acc = if val.is_empty() {
            None
        } else {
            let pred = predict(model, val)?;
            let ok = pred.iter().zip(val).filter(|(p, s)| **p == s.label.regime).count();
            Some(ok as f64 / val.len() as f64)
        };
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_ce: ce_sum / n,
            train_recon: recon_sum / n,
            train_acc: hits as f64 / n,
            val_acc,
        };
        if let Some(v) = val_acc {
            if best_val_acc.is_none_or(|b| v > b) {
                best_val_acc = Some(v);
                best_epoch = Some(epoch);
                best_model = model.clone();
            }
        }
        let flow = on_epoch(&stats);
        epochs.push(stats);
        if flow.is_break() {
            break;
        }
    }
    if best_epoch.is_none() {
        best_model = model.clone();
    }
    Ok(TrainingReport {
        epochs,
        best_epoch,
        best_val_acc,
        best_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversampling_balances_classes() {
        let labels = [Regime::Normal, Regime::Normal, Regime::Normal, Regime::Normal, Regime::Rally];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let order = epoch_order(&labels, true, &mut rng);
        let count = |r| order.iter().filter(|&&i| labels[i] == r).count();
        assert_eq!(count(Regime::Normal), 4);
        assert_eq!(count(Regime::Rally), 4);
        assert_eq!(count(Regime::Stressed), 0);
        assert_eq!(epoch_order(&labels, false, &mut rng).len(), 5);
    }
}
