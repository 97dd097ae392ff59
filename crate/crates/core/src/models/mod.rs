//! The model zoo: architecture assembly, losses, training and evaluation.

pub mod checkpoint;
mod config;
mod eval;
mod network;
mod train;

pub use config::{
    LearningRate, ModelConfig, ModelKind, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_MOMENTUM, NUM_CLASSES,
};
pub use eval::{
    evaluate, predict, ConfusionMatrix, EvalReport, CORNER_BALANCE_FLOOR, CORNER_SHARE_THRESHOLD,
};
pub use network::{
    tangent_flatten, tangent_len, tangent_unflatten_grad, BatchOutput, Layer, LayerKind, LayerStack, Linear, Logits,
    Network, ParamKind, SpdModel, Tape, USpdNet,
};
pub use train::{train, train_with, EpochStats, TrainingReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::LogEigLayer;
use crate::regimes::Regime;
use crate::spd::{Mat, SpdMatrix};

/// Builds a freshly initialized model. BiMap weights are QR factors of
/// Gaussian draws; RBN running means and biases start at the identity.
/// Identical `(config, seed)` pairs give bit-identical parameters.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<SpdModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = if config.name.is_unet() {
        Network::UNet(USpdNet::build(config, &mut rng)?)
    } else {
        Network::Stack(LayerStack::build(config, &mut rng)?)
    };
    Ok(SpdModel {
        config: config.clone(),
        network,
    })
}

/// Class logits for one input (inference mode).
pub fn forward_classify(model: &SpdModel, x: &SpdMatrix) -> Result<Logits> {
    let out = model.forward_batch(std::slice::from_ref(x.as_mat()), false)?;
    Ok(out.logits[0])
}

/// Logits, latent representation and reconstruction of one input.
pub fn uspdnet_forward(model: &SpdModel, x: &SpdMatrix) -> Result<(Logits, SpdMatrix, SpdMatrix)> {
    if !model.is_unet() {
        return Err(Error::Config(format!("{} has no decoder", model.config.name.name())));
    }
    let out = model.forward_batch(std::slice::from_ref(x.as_mat()), false)?;
    let latent = out.latent.unwrap().remove(0);
    let recon = out.reconstruction.unwrap().remove(0);
    Ok((out.logits[0], SpdMatrix::new(latent)?, SpdMatrix::new(recon)?))
}

pub fn argmax(l: &Logits) -> usize {
    let mut best = 0;
    for c in 1..l.len() {
        if l[c] > l[best] {
            best = c;
        }
    }
    best
}

pub fn predicted_regime(l: &Logits) -> Regime {
    Regime::from_index(argmax(l)).expect("logit count matches regime count")
}

pub fn softmax(l: &Logits) -> Logits {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(l) {
        *o = (v - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    out
}

/// `−ln softmax(l)[label]`, computed stably.
pub fn cross_entropy(l: &Logits, label: Regime) -> f64 {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - l[label.index()]
}

/// Squared log-Euclidean reconstruction error.
pub fn reconstruction_error(reconstruction: &SpdMatrix, input: &SpdMatrix) -> Result<f64> {
    Ok(crate::spd::log_euclidean_distance(reconstruction, input)?.powi(2))
}

/// Cross-entropy plus `recon_weight ·` squared log-Euclidean reconstruction
/// error; without a reconstruction this is plain cross-entropy.
pub fn loss_total(
    logits: &Logits,
    label: Regime,
    reconstruction: Option<&SpdMatrix>,
    input: &SpdMatrix,
    recon_weight: f64,
) -> Result<f64> {
    let ce = cross_entropy(logits, label);
    match reconstruction {
        Some(r) if recon_weight != 0.0 => Ok(ce + recon_weight * reconstruction_error(r, input)?),
        _ => Ok(ce),
    }
}

/// Mean batch loss and its gradients with respect to logits and
/// reconstructions. `input_logs` are `log Xᵢ`, needed only when the batch
/// carries reconstructions.
pub(crate) struct BatchLoss {
    pub loss: f64,
    pub ce: f64,
    pub recon: f64,
    pub grad_logits: Vec<Logits>,
    pub grad_recon: Option<Vec<Mat>>,
}

pub(crate) fn batch_loss(
    out: &BatchOutput,
    labels: &[Regime],
    input_logs: Option<&[&Mat]>,
    recon_weight: f64,
) -> Result<BatchLoss> {
    let b = labels.len() as f64;
    let mut ce = 0.0;
    let mut grad_logits = Vec::with_capacity(labels.len());
    for (l, &y) in out.logits.iter().zip(labels) {
        ce += cross_entropy(l, y);
        let mut g = softmax(l);
        g[y.index()] -= 1.0;
        for v in g.iter_mut() {
            *v /= b;
        }
        grad_logits.push(g);
    }
    let mut recon = 0.0;
    let mut grad_recon = None;
    if let (Some(recs), Some(logs)) = (&out.reconstruction, input_logs) {
        if recon_weight != 0.0 {
            let mut grads = Vec::with_capacity(recs.len());
            for (r, lx) in recs.iter().zip(logs) {
                let (lr, eig) = LogEigLayer.forward_mat(r)?;
                let diff = lr - *lx;
                recon += diff.norm_squared();
                grads.push(LogEigLayer.backward_mat(&eig, &(diff * (2.0 * recon_weight / b))));
            }
            grad_recon = Some(grads);
        }
    }
    let loss = (ce + recon_weight * recon) / b;
    Ok(BatchLoss {
        loss,
        ce: ce / b,
        recon: recon / b,
        grad_logits,
        grad_recon,
    })
}
