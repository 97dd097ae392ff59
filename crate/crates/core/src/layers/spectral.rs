//! Backpropagation through spectral functions `X ↦ U f(Σ) Uᵀ`.

use crate::spd::{EigenDecomposition, Mat};

/// Relative gap below which two eigenvalues are treated as equal.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Divided-difference (Loewner) matrix of `f` at the spectrum.
///
/// `K[i][j] = (f(σᵢ) − f(σⱼ)) / (σᵢ − σⱼ)`, falling back to `f'((σᵢ + σⱼ)/2)`
/// when the pair is degenerate.
pub fn loewner(eigvals: &[f64], f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Mat {
    let n = eigvals.len();
    let fv: Vec<f64> = eigvals.iter().map(|&s| f(s)).collect();
    Mat::from_fn(n, n, |i, j| {
        let (si, sj) = (eigvals[i], eigvals[j]);
        if (si - sj).abs() < DEGENERACY_GAP * si.abs().max(1.0) {
            df(0.5 * (si + sj))
        } else {
            (fv[i] - fv[j]) / (si - sj)
        }
    })
}

/// Gradient of `L(U f(Σ) Uᵀ)` with respect to the input, given the symmetric
/// upstream gradient `grad`: `U (K ∘ Uᵀ grad U) Uᵀ`.
pub fn spectral_backward(
    eig: &EigenDecomposition,
    grad: &Mat,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> Mat {
    let u = &eig.eigvecs;
    let k = loewner(eig.eigvals.as_slice(), f, df);
    let inner = u.transpose() * grad * u;
    let out = u * inner.component_mul(&k) * u.transpose();
    symmetrize(out)
}

pub(crate) fn symmetrize(m: Mat) -> Mat {
    let t = m.transpose();
    (m + t) * 0.5
}
