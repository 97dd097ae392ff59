//! Riemannian SGD with momentum on the Stiefel manifold, plus the plain
//! Euclidean momentum step used for unconstrained parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use super::spectral::symmetrize;
use crate::error::{Error, Result};
use crate::spd::Mat;

/// Orthonormality slack tolerated after a retraction.
pub const STIEFEL_TOLERANCE: f64 = 1e-8;

/// Projects an ambient matrix onto the tangent space at `w`:
/// `Z − W sym(Wᵀ Z)`.
pub fn stiefel_project(w: &Mat, z: &Mat) -> Mat {
    z - w * symmetrize(w.transpose() * z)
}

/// Q factor of a thin QR decomposition with the signs fixed so that `R` has a
/// positive diagonal.
pub fn qr_retract(m: &Mat) -> Result<Mat> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::Retraction(format!("wide matrix {rows}x{cols} has no orthonormal columns")));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale {
            return Err(Error::Retraction(format!("rank deficient at column {j}")));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// `‖WᵀW − I‖_F`.
pub fn orthogonality_error(w: &Mat) -> f64 {
    let c = w.ncols();
    (w.transpose() * w - Mat::identity(c, c)).norm()
}

/// Random matrix with orthonormal columns (QR of a Gaussian draw).
pub fn random_stiefel<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    loop {
        let g = Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(q) = qr_retract(&g) {
            return q;
        }
    }
}

/// One Riemannian momentum step.
///
/// The Euclidean gradient is projected to the tangent space, accumulated into
/// the momentum buffer, and the point is retracted with `qf(W − lr·m)`. The
/// buffer is then re-projected onto the tangent space at the new point.
pub fn stiefel_step(
    weight: &mut Mat,
    euclid_grad: &Mat,
    momentum_buf: &mut Mat,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if euclid_grad.shape() != weight.shape() || momentum_buf.shape() != weight.shape() {
        return Err(Error::shape(
            format!("{:?}", weight.shape()),
            format!("{:?} / {:?}", euclid_grad.shape(), momentum_buf.shape()),
        ));
    }
    let tangent = stiefel_project(weight, euclid_grad);
    *momentum_buf *= momentum;
    *momentum_buf += tangent;
    let delta = &*momentum_buf * lr;
    if delta.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let next = qr_retract(&(&*weight - delta))?;
    let err = orthogonality_error(&next);
    if err >= STIEFEL_TOLERANCE {
        return Err(Error::Retraction(format!("orthogonality drift {err:e}")));
    }
    *momentum_buf = stiefel_project(&next, momentum_buf);
    *weight = next;
    Ok(())
}

/// Heavy-ball momentum: `m ← μ m + g; p ← p − lr m`.
pub fn sgd_momentum_step(param: &mut Mat, grad: &Mat, momentum_buf: &mut Mat, lr: f64, momentum: f64) {
    *momentum_buf *= momentum;
    *momentum_buf += grad;
    if lr != 0.0 {
        *param -= &*momentum_buf * lr;
    }
}
