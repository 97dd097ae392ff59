use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five architectures of the model zoo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "SPDNet")]
    SpdNet,
    #[serde(rename = "SPDNetBN")]
    SpdNetBn,
    #[serde(rename = "SPDNet-3BiRe")]
    SpdNet3BiRe,
    #[serde(rename = "SPDNetBN-3BiRe")]
    SpdNetBn3BiRe,
    #[serde(rename = "U-SPDNet-6BiRe")]
    USpdNet6BiRe,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::SpdNet,
        ModelKind::SpdNetBn,
        ModelKind::SpdNet3BiRe,
        ModelKind::SpdNetBn3BiRe,
        ModelKind::USpdNet6BiRe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SpdNet => "SPDNet",
            ModelKind::SpdNetBn => "SPDNetBN",
            ModelKind::SpdNet3BiRe => "SPDNet-3BiRe",
            ModelKind::SpdNetBn3BiRe => "SPDNetBN-3BiRe",
            ModelKind::USpdNet6BiRe => "U-SPDNet-6BiRe",
        }
    }

    pub fn is_unet(self) -> bool {
        self == ModelKind::USpdNet6BiRe
    }
}

/// Fixed rate, or geometric annealing from `start` to `end` over the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    Fixed(f64),
    Annealed { start: f64, end: f64 },
}

impl LearningRate {
    /// Rate used during `epoch` (0-based) of `epochs`.
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LearningRate::Fixed(lr) => lr,
            LearningRate::Annealed { start, end } => {
                if epochs <= 1 {
                    start
                } else {
                    start * (end / start).powf(epoch as f64 / (epochs - 1) as f64)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Fixed(lr) => lr >= 0.0 && lr.is_finite(),
            LearningRate::Annealed { start, end } => start > 0.0 && end > 0.0 && start.is_finite() && end.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid learning rate {self:?}")))
        }
    }
}

/// Declarative description of one architecture and its training budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelKind,
    /// Transformation matrix dimensions, input first, class count last.
    pub tmd: Vec<usize>,
    pub use_rbn: bool,
    pub learning_rate: LearningRate,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the squared log-Euclidean reconstruction error (U-SPDNet).
    #[serde(default = "default_recon_weight")]
    pub recon_weight: f64,
    #[serde(default = "default_reeig_epsilon")]
    pub reeig_epsilon: f64,
    /// Weight of the upsampled feature in decoder skip blends (U-SPDNet).
    #[serde(default = "default_skip_weight")]
    pub skip_combine_weight: f64,
    /// Value `c` filling the complement of each decoder expansion,
    /// `W X Wᵀ + c (I − W Wᵀ)` (U-SPDNet). Zero leaves the expansion rank
    /// deficient until ReEig lifts it to the rectification floor.
    #[serde(default = "default_decoder_fill")]
    pub decoder_fill: f64,
    /// Encoder stage exposed as the latent representation (U-SPDNet).
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    /// Oversample minority regimes to parity within each epoch.
    #[serde(default = "default_true")]
    pub oversample: bool,
}

fn default_recon_weight() -> f64 {
    1.0
}
fn default_reeig_epsilon() -> f64 {
    crate::layers::DEFAULT_REEIG_EPSILON
}
fn default_skip_weight() -> f64 {
    0.5
}
fn default_decoder_fill() -> f64 {
    1.0
}
fn default_latent_dim() -> usize {
    20
}
fn default_true() -> bool {
    true
}

pub const DEFAULT_EPOCHS: usize = 600;
pub const DEFAULT_BATCH_SIZE: usize = 30;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const NUM_CLASSES: usize = 3;

impl ModelConfig {
    /// Reference configuration for `kind`.
    pub fn preset(kind: ModelKind) -> Self {
        let (tmd, use_rbn, lr) = match kind {
            ModelKind::SpdNet => (vec![60, 20, 3], false, LearningRate::Fixed(1e-3)),
            ModelKind::SpdNetBn => (vec![60, 20, 3], true, LearningRate::Fixed(1e-3)),
            ModelKind::SpdNet3BiRe => (vec![60, 40, 20, 10, 3], false, LearningRate::Fixed(1e-4)),
            ModelKind::SpdNetBn3BiRe => (vec![60, 40, 20, 10, 3], true, LearningRate::Fixed(1e-4)),
            ModelKind::USpdNet6BiRe => (
                vec![60, 40, 20, 10, 3],
                false,
                LearningRate::Annealed { start: 1e-2, end: 1e-5 },
            ),
        };
        ModelConfig {
            name: kind,
            tmd,
            use_rbn,
            learning_rate: lr,
            momentum: DEFAULT_MOMENTUM,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            recon_weight: default_recon_weight(),
            reeig_epsilon: default_reeig_epsilon(),
            skip_combine_weight: default_skip_weight(),
            decoder_fill: default_decoder_fill(),
            latent_dim: default_latent_dim(),
            oversample: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.tmd[0]
    }

    /// SPD stage dimensions (the TMD without the class count).
    pub fn spd_dims(&self) -> &[usize] {
        &self.tmd[..self.tmd.len() - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.tmd.len() < 3 {
            return Err(Error::Config(format!("tmd {:?} needs an input, a hidden stage and a class count", self.tmd)));
        }
        if *self.tmd.last().unwrap() != NUM_CLASSES {
            return Err(Error::Config(format!("tmd must end in {NUM_CLASSES} classes, got {:?}", self.tmd)));
        }
        let dims = self.spd_dims();
        if dims.windows(2).any(|w| w[1] >= w[0]) || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("tmd {:?} must be strictly decreasing", self.tmd)));
        }
        if dims[dims.len() - 1] < NUM_CLASSES {
            return Err(Error::Config(format!("tmd {:?} must stay at or above the class count", self.tmd)));
        }
        self.learning_rate.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.recon_weight >= 0.0) {
            return Err(Error::Config(format!("recon_weight {} must be >= 0", self.recon_weight)));
        }
        if !(self.reeig_epsilon > 0.0) {
            return Err(Error::Config(format!("reeig_epsilon {} must be > 0", self.reeig_epsilon)));
        }
        if self.name.is_unet() {
            if !(0.0..=1.0).contains(&self.skip_combine_weight) {
                return Err(Error::Config(format!(
                    "skip_combine_weight {} must be in [0, 1]",
                    self.skip_combine_weight
                )));
            }
            if !(self.decoder_fill >= 0.0 && self.decoder_fill.is_finite()) {
                return Err(Error::Config(format!("decoder_fill {} must be >= 0", self.decoder_fill)));
            }
            let inner = &dims[1..dims.len() - 1];
            if !inner.contains(&self.latent_dim) {
                return Err(Error::Config(format!(
                    "latent_dim {} must be an interior encoder stage of {:?}",
                    self.latent_dim, dims
                )));
            }
            if self.use_rbn {
                return Err(Error::Config("U-SPDNet does not use batch normalization".into()));
            }
        }
        Ok(())
    }
}
