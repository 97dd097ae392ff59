use nalgebra::Cholesky;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spd::{Mat, SpdMatrix, SymMatrix};

/// `T × N` Student-t draws with covariance `sigma`:
/// `x = z·Lᵀ·sqrt((v−2)/v) / sqrt(w/v)` with `z` standard normal, `L` the
/// Cholesky factor of `sigma` and `w ~ χ²_v` shared across a row.
pub fn student_t_sample(sigma: &SpdMatrix, v: f64, t: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    student_t_with(sigma.as_mat(), v, t, &mut rng)
}

pub(crate) fn student_t_with<R: Rng + ?Sized>(sigma: &Mat, v: f64, t: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(v > 2.0) {
        return Err(Error::Config(format!("degrees of freedom must exceed 2, got {v}")));
    }
    let l = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Domain("Cholesky factorization failed".into()))?
        .unpack();
    let n = sigma.nrows();
    let chi = ChiSquared::new(v).map_err(|e| Error::Config(e.to_string()))?;
    let scale = ((v - 2.0) / v).sqrt();
    let mut z = vec![0.0; n];
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let w: f64 = chi.sample(rng);
        let f = scale / (w / v).sqrt();
        let row = (0..n)
            .map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>() * f)
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Pearson correlation of the columns of `returns[t][i]`.
pub fn corr_from_returns(returns: &[Vec<f64>]) -> Result<SpdMatrix> {
    let t = returns.len();
    if t < 2 {
        return Err(Error::Data(format!("correlation needs at least 2 rows, got {t}")));
    }
    let n = returns[0].len();
    if n == 0 {
        return Err(Error::Data("correlation needs at least one column".into()));
    }
    if let Some(r) = returns.iter().position(|row| row.len() != n) {
        return Err(Error::Data(format!("row {r} has {} columns, expected {n}", returns[r].len())));
    }
    let mut x = Mat::from_fn(t, n, |r, c| returns[r][c]);
    for c in 0..n {
        let mut col = x.column_mut(c);
        let mean = col.sum() / t as f64;
        col.add_scalar_mut(-mean);
        let sd = col.norm();
        if !sd.is_finite() {
            return Err(Error::Data(format!("column {c} has non-finite values")));
        }
        if sd <= 1e-14 * (1.0 + mean.abs()) * (t as f64).sqrt() {
            return Err(Error::Data(format!("column {c} is constant")));
        }
        col /= sd;
    }
    let mut c = x.tr_mul(&x);
    for i in 0..n {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = c[(i, j)].clamp(-1.0, 1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    SpdMatrix::new(c)
}

/// Seeded uniform permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

/// `out[i][j] = c[perm[i]][perm[j]]`, i.e. `PᵀCP`.
pub fn apply_permutation(c: &Mat, perm: &[usize]) -> Mat {
    Mat::from_fn(perm.len(), perm.len(), |i, j| c[(perm[i], perm[j])])
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Simultaneous row/column shuffle of `c`. The returned permutation
/// reproduces the output via [`apply_permutation`].
pub fn permute_corr(c: &SpdMatrix, seed: u64) -> Result<(SpdMatrix, Vec<usize>)> {
    let perm = random_permutation(c.dim(), seed);
    let m = apply_permutation(c.as_mat(), &perm);
    Ok((SpdMatrix::from_sym(SymMatrix::new(m)?, c.tolerance())?, perm))
}
