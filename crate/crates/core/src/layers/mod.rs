//! SPDNet layers with exact backward passes.
//!
//! Gradients with respect to symmetric inputs use the symmetric convention:
//! `G` is symmetric and `dL = ⟨G, dX⟩_F` for every symmetric perturbation `dX`.

pub mod optim;
pub mod spectral;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{jacobi, spd_sqrt_pair, EigenDecomposition, KarcherOptions, Mat, SpdMatrix, SymMatrix};
pub use optim::{
    orthogonality_error, qr_retract, random_stiefel, sgd_momentum_step, stiefel_project, stiefel_step, STIEFEL_TOLERANCE,
};
use spectral::{spectral_backward, symmetrize};

/// Default ReEig rectification floor.
pub const DEFAULT_REEIG_EPSILON: f64 = 1e-4;

/// Default momentum of the RBN running mean.
pub const DEFAULT_RBN_MOMENTUM: f64 = 0.9;

/// Input gradients per sample plus Euclidean gradients per trainable
/// parameter, in the layer's declared parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub input_grads: Vec<SymMatrix>,
    pub param_grads: Vec<Mat>,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(format!("dim {expected}"), format!("dim {got}")));
    }
    Ok(())
}

fn sym_grad(m: Mat) -> SymMatrix {
    SymMatrix::symmetrized(m)
}

// ---------------------------------------------------------------------------
// BiMap

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiMapDirection {
    /// `Wᵀ X W`, shrinking `rows → cols`.
    Reduce,
    /// `W X Wᵀ + c (I − W Wᵀ)`, growing `cols → rows`; the orthogonal
    /// complement of the weight's range is filled with `c · I`.
    Expand,
}

/// Bilinear map with a semi-orthogonal weight. The weight is always stored
/// tall (`rows ≥ cols`) with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct BiMapLayer {
    pub weight: Mat,
    pub direction: BiMapDirection,
    /// Complement fill `c` of expanding maps; ignored when reducing.
    pub complement: f64,
}

impl BiMapLayer {
    pub fn new(weight: Mat, direction: BiMapDirection) -> Result<Self> {
        let (r, c) = weight.shape();
        if r < c || c == 0 {
            return Err(Error::shape("tall weight with rows >= cols >= 1", format!("{r}x{c}")));
        }
        let err = orthogonality_error(&weight);
        if err >= STIEFEL_TOLERANCE {
            return Err(Error::Domain(format!("weight columns are not orthonormal (error {err:e})")));
        }
        Ok(BiMapLayer {
            weight,
            direction,
            complement: 0.0,
        })
    }

    pub fn random<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        if d_in == 0 || d_out == 0 || d_in == d_out {
            return Err(Error::Config(format!("bimap {d_in}->{d_out} must change dimension")));
        }
        let (direction, rows, cols) = if d_in > d_out {
            (BiMapDirection::Reduce, d_in, d_out)
        } else {
            (BiMapDirection::Expand, d_out, d_in)
        };
        Ok(BiMapLayer {
            weight: random_stiefel(rows, cols, rng),
            direction,
            complement: 0.0,
        })
    }

    /// Sets the complement fill of an expanding map. With `c = 0` the output
    /// has rank `d_in` and needs a following ReEig to become SPD.
    pub fn with_complement(mut self, c: f64) -> Self {
        self.complement = c;
        self
    }

    pub fn d_in(&self) -> usize {
        match self.direction {
            BiMapDirection::Reduce => self.weight.nrows(),
            BiMapDirection::Expand => self.weight.ncols(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self.direction {
            BiMapDirection::Reduce => self.weight.ncols(),
            BiMapDirection::Expand => self.weight.nrows(),
        }
    }

    pub fn forward_mat(&self, x: &Mat) -> Result<Mat> {
        check_dim(self.d_in(), x.nrows())?;
        let w = &self.weight;
        let y = match self.direction {
            BiMapDirection::Reduce => w.transpose() * x * w,
            BiMapDirection::Expand => {
                let mut y = w * x * w.transpose();
                if self.complement != 0.0 {
                    y -= w * w.transpose() * self.complement;
                    for i in 0..y.nrows() {
                        y[(i, i)] += self.complement;
                    }
                }
                y
            }
        };
        Ok(symmetrize(y))
    }

    /// Returns `(input_grad, weight_grad)`.
    pub fn backward_mat(&self, x: &Mat, grad: &Mat) -> Result<(Mat, Mat)> {
        check_dim(self.d_in(), x.nrows())?;
        check_dim(self.d_out(), grad.nrows())?;
        let w = &self.weight;
        Ok(match self.direction {
            BiMapDirection::Reduce => (symmetrize(w * grad * w.transpose()), x * w * grad * 2.0),
            BiMapDirection::Expand => {
                let mut xc = x.clone();
                for i in 0..xc.nrows() {
                    xc[(i, i)] -= self.complement;
                }
                (symmetrize(w.transpose() * grad * w), grad * w * xc * 2.0)
            }
        })
    }
}

pub fn bimap_forward(layer: &BiMapLayer, x: &SpdMatrix) -> Result<SpdMatrix> {
    layer.forward_mat(x.as_mat()).map(SpdMatrix::from_trusted)
}

pub fn bimap_backward(layer: &BiMapLayer, x: &SpdMatrix, upstream: &SymMatrix) -> Result<LayerGradients> {
    let (gx, gw) = layer.backward_mat(x.as_mat(), upstream.as_mat())?;
    Ok(LayerGradients {
        input_grads: vec![sym_grad(gx)],
        param_grads: vec![gw],
    })
}

// ---------------------------------------------------------------------------
// ReEig

/// Eigenvalue rectification `U max(Σ, ε) Uᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReEigLayer {
    pub epsilon: f64,
}

impl Default for ReEigLayer {
    fn default() -> Self {
        ReEigLayer {
            epsilon: DEFAULT_REEIG_EPSILON,
        }
    }
}

impl ReEigLayer {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("ReEig epsilon must be positive, got {epsilon}")));
        }
        Ok(ReEigLayer { epsilon })
    }

    pub fn forward_mat(&self, x: &Mat) -> Result<(Mat, EigenDecomposition)> {
        let e = jacobi(x)?;
        let eps = self.epsilon;
        Ok((e.map(|s| s.max(eps)), e))
    }

    pub fn backward_mat(&self, eig: &EigenDecomposition, grad: &Mat) -> Mat {
        let eps = self.epsilon;
        spectral_backward(eig, grad, |s| s.max(eps), |s| if s > eps { 1.0 } else { 0.0 })
    }
}

pub fn reeig_forward(layer: &ReEigLayer, x: &SpdMatrix) -> Result<SpdMatrix> {
    Ok(SpdMatrix::from_trusted(layer.forward_mat(x.as_mat())?.0))
}

pub fn reeig_backward(layer: &ReEigLayer, x: &SpdMatrix, upstream: &SymMatrix) -> Result<LayerGradients> {
    let (_, eig) = layer.forward_mat(x.as_mat())?;
    Ok(LayerGradients {
        input_grads: vec![sym_grad(layer.backward_mat(&eig, upstream.as_mat()))],
        param_grads: vec![],
    })
}

// ---------------------------------------------------------------------------
// LogEig

/// Matrix logarithm into the tangent space at the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogEigLayer;

impl LogEigLayer {
    pub fn forward_mat(&self, x: &Mat) -> Result<(Mat, EigenDecomposition)> {
        let e = jacobi(x)?;
        if e.min_eigval() <= 0.0 {
            return Err(Error::Domain(format!("LogEig input eigenvalue {:e} is not positive", e.min_eigval())));
        }
        Ok((e.map(f64::ln), e))
    }

    pub fn backward_mat(&self, eig: &EigenDecomposition, grad: &Mat) -> Mat {
        spectral_backward(eig, grad, f64::ln, |s| 1.0 / s)
    }
}

pub fn logeig_forward(x: &SpdMatrix) -> Result<SymMatrix> {
    Ok(SymMatrix::symmetrized(LogEigLayer.forward_mat(x.as_mat())?.0))
}

pub fn logeig_backward(x: &SpdMatrix, upstream: &SymMatrix) -> Result<LayerGradients> {
    let (_, eig) = LogEigLayer.forward_mat(x.as_mat())?;
    Ok(LayerGradients {
        input_grads: vec![sym_grad(LogEigLayer.backward_mat(&eig, upstream.as_mat()))],
        param_grads: vec![],
    })
}

// ---------------------------------------------------------------------------
// Riemannian batch normalization

/// Riemannian batch normalization: congruence-center each sample at the batch
/// Karcher mean, then re-bias toward a learned SPD matrix.
///
/// The bias is stored as a free symmetric matrix `b` with `bias = exp(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbnLayer {
    pub running_mean: Mat,
    pub bias_log: Mat,
    pub running_momentum: f64,
    pub karcher: KarcherOptions,
}

/// Quantities saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct RbnCache {
    /// `G^{-1/2}` of the statistic used for centering.
    pub center: Mat,
    /// `exp(b/2)`, the square root of the bias.
    pub bias_sqrt: Mat,
    pub bias_log_eig: EigenDecomposition,
    /// Centered samples `G^{-1/2} Xᵢ G^{-1/2}`.
    pub centered: Vec<Mat>,
}

impl RbnLayer {
    pub fn new(dim: usize) -> Self {
        RbnLayer {
            running_mean: Mat::identity(dim, dim),
            bias_log: Mat::zeros(dim, dim),
            running_momentum: DEFAULT_RBN_MOMENTUM,
            karcher: KarcherOptions::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.nrows()
    }

    pub fn bias(&self) -> Result<SpdMatrix> {
        crate::spd::spd_exp(&SymMatrix::symmetrized(self.bias_log.clone()))
    }

    pub fn batch_mean(&self, batch: &[Mat]) -> Result<Mat> {
        for x in batch {
            check_dim(self.dim(), x.nrows())?;
        }
        let refs: Vec<&Mat> = batch.iter().collect();
        crate::spd::karcher_mean_mats(&refs, self.karcher)
    }

    /// Centers at `mean` and re-biases; `mean` is treated as a constant.
    pub fn forward_with_mean(&self, batch: &[Mat], mean: &Mat) -> Result<(Vec<Mat>, RbnCache)> {
        for x in batch {
            check_dim(self.dim(), x.nrows())?;
        }
        let (_, center) = spd_sqrt_pair(&SpdMatrix::from_trusted(mean.clone()))?;
        let bias_log_eig = jacobi(&self.bias_log)?;
        let bias_sqrt = bias_log_eig.map(|l| (0.5 * l).exp());
        let mut centered = Vec::with_capacity(batch.len());
        let mut out = Vec::with_capacity(batch.len());
        for x in batch {
            let z = symmetrize(&center * x * &center);
            out.push(symmetrize(&bias_sqrt * &z * &bias_sqrt));
            centered.push(z);
        }
        Ok((
            out,
            RbnCache {
                center,
                bias_sqrt,
                bias_log_eig,
                centered,
            },
        ))
    }

    /// Training mode centers at the batch Karcher mean and returns it; the
    /// running mean is not touched (see [`RbnLayer::update_running_mean`]).
    /// Inference mode centers at the running mean.
    pub fn forward_mat(&self, batch: &[Mat], training: bool) -> Result<(Vec<Mat>, RbnCache, Option<Mat>)> {
        if training {
            let mean = self.batch_mean(batch)?;
            let (out, cache) = self.forward_with_mean(batch, &mean)?;
            Ok((out, cache, Some(mean)))
        } else {
            let (out, cache) = self.forward_with_mean(batch, &self.running_mean)?;
            Ok((out, cache, None))
        }
    }

    /// Moves the running mean along the geodesic toward `batch_mean` by
    /// `1 − running_momentum`.
    pub fn update_running_mean(&mut self, batch_mean: &Mat) -> Result<()> {
        let t = 1.0 - self.running_momentum;
        let next = crate::spd::geodesic(
            &SpdMatrix::from_trusted(self.running_mean.clone()),
            &SpdMatrix::from_trusted(batch_mean.clone()),
            t,
        )?;
        self.running_mean = next.into_mat();
        Ok(())
    }

    /// Returns per-sample input gradients and the gradient with respect to
    /// `bias_log`.
    pub fn backward_mat(&self, cache: &RbnCache, grads: &[Mat]) -> Result<(Vec<Mat>, Mat)> {
        if grads.len() != cache.centered.len() {
            return Err(Error::shape(
                format!("{} upstream gradients", cache.centered.len()),
                grads.len(),
            ));
        }
        let m = &cache.center;
        let s = &cache.bias_sqrt;
        let n = self.dim();
        let mut grad_s = Mat::zeros(n, n);
        let mut input_grads = Vec::with_capacity(grads.len());
        for (g, z) in grads.iter().zip(&cache.centered) {
            let gz = s * g * s;
            input_grads.push(symmetrize(m * gz * m));
            let gsz = g * s * z;
            grad_s += &gsz + gsz.transpose();
        }
        let grad_b = spectral_backward(
            &cache.bias_log_eig,
            &symmetrize(grad_s),
            |l| (0.5 * l).exp(),
            |l| 0.5 * (0.5 * l).exp(),
        );
        Ok((input_grads, grad_b))
    }
}

/// Typed training/inference forward. In training mode the running mean is
/// updated from the batch Karcher mean.
pub fn rbn_forward(layer: &mut RbnLayer, batch: &[SpdMatrix], training: bool) -> Result<Vec<SpdMatrix>> {
    let mats: Vec<Mat> = batch.iter().map(|x| x.as_mat().clone()).collect();
    let (out, _, mean) = layer.forward_mat(&mats, training)?;
    if let Some(mean) = mean {
        layer.update_running_mean(&mean)?;
    }
    Ok(out.into_iter().map(SpdMatrix::from_trusted).collect())
}

/// Backward under the stopped-gradient convention for the batch mean. The
/// batch statistic is recomputed from `batch` (training semantics).
pub fn rbn_backward(layer: &RbnLayer, batch: &[SpdMatrix], upstream: &[SymMatrix]) -> Result<LayerGradients> {
    let mats: Vec<Mat> = batch.iter().map(|x| x.as_mat().clone()).collect();
    let (_, cache, _) = layer.forward_mat(&mats, true)?;
    let grads: Vec<Mat> = upstream.iter().map(|g| g.as_mat().clone()).collect();
    let (gx, gb) = layer.backward_mat(&cache, &grads)?;
    Ok(LayerGradients {
        input_grads: gx.into_iter().map(sym_grad).collect(),
        param_grads: vec![gb],
    })
}
