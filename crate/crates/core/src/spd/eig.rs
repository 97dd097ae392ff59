//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use nalgebra::DVector;

use super::{Mat, SymMatrix};
use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm (relative to the matrix norm) at which a sweep
/// sequence is considered converged.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Sweep cap. Cyclic Jacobi converges quadratically, so anything near this
/// indicates non-finite input rather than slow convergence.
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub eigvals: DVector<f64>,
    pub eigvecs: Mat,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let vals: Vec<f64> = self.eigvals.iter().map(|&l| f(l)).collect();
        self.reconstruct_with(&vals)
    }

    pub fn reconstruct(&self) -> Mat {
        let vals: Vec<f64> = self.eigvals.iter().copied().collect();
        self.reconstruct_with(&vals)
    }

    /// `U diag(vals) Uᵀ` for an arbitrary spectrum.
    pub fn reconstruct_with(&self, vals: &[f64]) -> Mat {
        let n = self.dim();
        let u = &self.eigvecs;
        let mut scaled = u.clone();
        for (j, &v) in vals.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        let mut out = &scaled * u.transpose();
        // exact symmetry for downstream consumers
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = m;
                out[(j, i)] = m;
            }
        }
        out
    }

    pub fn min_eigval(&self) -> f64 {
        self.eigvals[self.dim() - 1]
    }

    pub fn max_eigval(&self) -> f64 {
        self.eigvals[0]
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvectors follow a fixed sign convention: the component of largest
/// magnitude in each column is positive (first such index on ties).
pub fn sym_eig(s: &SymMatrix) -> Result<EigenDecomposition> {
    jacobi(s.as_mat())
}

pub(crate) fn jacobi(input: &Mat) -> Result<EigenDecomposition> {
    let n = input.nrows();
    debug_assert_eq!(n, input.ncols());
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite matrix entry".into()));
    }
    let mut a: Vec<f64> = input.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_TOLERANCE * scale.max(f64::MIN_POSITIVE);

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        let off = off_diagonal_norm(&a, n);
        if off <= threshold {
            converged = true;
            break;
        }
        if sweeps == MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::EigFailure { iterations: sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));

    let eigvals = DVector::from_iterator(n, order.iter().map(|&i| a[i * n + i]));
    let mut eigvecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = &v[src * n..(src + 1) * n];
        let mut pivot = 0;
        for k in 1..n {
            if col[k].abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigvecs[(k, dst)] = sign * col[k];
        }
    }
    Ok(EigenDecomposition { eigvals, eigvecs })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..j {
            s += a[j * n + i] * a[j * n + i];
        }
    }
    (2.0 * s).sqrt()
}

// One Jacobi rotation zeroing a[p,q]. `a` is a full symmetric matrix in
// column-major storage; rows are kept in sync with columns.
#[inline]
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[q * n + p];
    if apq == 0.0 {
        return;
    }
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[p * n + k];
        let akq = a[q * n + k];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a[p * n + k] = new_p;
        a[k * n + p] = new_p;
        a[q * n + k] = new_q;
        a[k * n + q] = new_q;
    }
    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    a[q * n + p] = 0.0;
    a[p * n + q] = 0.0;

    let (vp, vq) = if p < q {
        let (lo, hi) = v.split_at_mut(q * n);
        (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
    } else {
        unreachable!()
    };
    for k in 0..n {
        let x = vp[k];
        let y = vq[k];
        vp[k] = c * x - s * y;
        vq[k] = s * x + c * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + Mat::identity(n, n) * 0.1
    }

    #[test]
    fn identity_is_fixed() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.eigvals.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(e.eigvecs, Mat::identity(3, 3));
    }

    #[test]
    fn diagonal_input() {
        let e = sym_eig(&SymMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert_eq!(e.eigvals.as_slice(), &[4.0, 1.0]);
        assert_eq!(e.eigvecs, Mat::identity(2, 2));
        let e = sym_eig(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(e.eigvals.as_slice(), &[4.0, 1.0]);
        assert_eq!(e.eigvecs[(1, 0)], 1.0);
        assert_eq!(e.eigvecs[(0, 1)], 1.0);
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 17, 60] {
            let x = random_spd(n, &mut rng);
            let e = jacobi(&x).unwrap();
            let rec = e.reconstruct();
            assert!((&rec - &x).norm() / x.norm() < 1e-9, "n={n}");
            let orth = e.eigvecs.transpose() * &e.eigvecs - Mat::identity(n, n);
            assert!(orth.norm() < 1e-10);
            for w in e.eigvals.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn deterministic_and_sign_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_spd(8, &mut rng);
        let a = jacobi(&x).unwrap();
        let b = jacobi(&x).unwrap();
        assert_eq!(a, b);
        for j in 0..8 {
            let col = a.eigvecs.column(j);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn ill_conditioned_reconstruction() {
        // κ = 1e8
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let q = random_spd(n, &mut rng).qr().q();
        let spectrum: Vec<f64> = (0..n).map(|i| 10f64.powf(-8.0 * i as f64 / (n - 1) as f64)).collect();
        let x = &q * Mat::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose();
        let x = 0.5 * (&x + x.transpose());
        let e = jacobi(&x).unwrap();
        assert!((e.reconstruct() - &x).norm() / x.norm() < 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Mat::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(jacobi(&m).is_err());
    }
}
