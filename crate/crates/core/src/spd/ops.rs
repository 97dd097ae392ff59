use super::{jacobi, Mat, SpdMatrix, SymMatrix};
use crate::error::{Error, Result};

/// Largest eigenvalue `spd_exp` accepts before reporting overflow.
pub const EXP_CAP: f64 = 700.0;

/// Matrix logarithm `U diag(ln λ) Uᵀ`.
pub fn spd_log(x: &SpdMatrix) -> Result<SymMatrix> {
    let e = x.eig()?;
    if e.min_eigval() < x.tolerance() {
        return Err(Error::Domain(format!(
            "eigenvalue {:e} below spd tolerance {:e}",
            e.min_eigval(),
            x.tolerance()
        )));
    }
    Ok(SymMatrix(e.map(f64::ln)))
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn spd_exp(s: &SymMatrix) -> Result<SpdMatrix> {
    let e = s.eig()?;
    if e.max_eigval() > EXP_CAP {
        return Err(Error::Overflow(e.max_eigval()));
    }
    Ok(SpdMatrix::from_trusted(e.map(f64::exp)))
}

/// `X^p` through the spectrum.
pub fn spd_pow(x: &SpdMatrix, p: f64) -> Result<SpdMatrix> {
    let e = x.eig()?;
    Ok(SpdMatrix::from_trusted(e.map(|l| l.powf(p))))
}

/// `(X^{1/2}, X^{-1/2})` from one eigendecomposition.
pub fn spd_sqrt_pair(x: &SpdMatrix) -> Result<(Mat, Mat)> {
    sqrt_pair(x.as_mat())
}

pub(crate) fn sqrt_pair(x: &Mat) -> Result<(Mat, Mat)> {
    let e = jacobi(x)?;
    if e.min_eigval() <= 0.0 {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (smallest eigenvalue {:e})",
            e.min_eigval()
        )));
    }
    Ok((e.map(f64::sqrt), e.map(|l| 1.0 / l.sqrt())))
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("dim {a}"), format!("dim {b}")));
    }
    Ok(())
}

/// Affine-invariant distance `‖log(X^{-1/2} Y X^{-1/2})‖_F`.
pub fn affine_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    let (_, xi) = spd_sqrt_pair(x)?;
    let inner = &xi * y.as_mat() * &xi;
    let e = jacobi(&SymMatrix::symmetrized(inner).0)?;
    if e.min_eigval() <= 0.0 {
        return Err(Error::Domain("congruence lost positive definiteness".into()));
    }
    Ok(e.eigvals.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Log-Euclidean distance `‖log A − log B‖_F`.
pub fn log_euclidean_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok((spd_log(a)?.as_mat() - spd_log(b)?.as_mat()).norm())
}

/// Affine-invariant geodesic from `a` (t = 0) to `b` (t = 1).
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_dims(a.dim(), b.dim())?;
    let (ah, aih) = spd_sqrt_pair(a)?;
    let inner = SymMatrix::symmetrized(&aih * b.as_mat() * &aih);
    let e = inner.eig()?;
    let powed = e.map(|l| l.max(f64::MIN_POSITIVE).powf(t));
    Ok(SpdMatrix::from_trusted(&ah * powed * &ah))
}

/// Log-Euclidean interpolation `exp(w log a + (1 − w) log b)`.
pub fn log_euclidean_blend(a: &SpdMatrix, b: &SpdMatrix, w: f64) -> Result<SpdMatrix> {
    check_dims(a.dim(), b.dim())?;
    let mixed = spd_log(a)?.as_mat() * w + spd_log(b)?.as_mat() * (1.0 - w);
    spd_exp(&SymMatrix::symmetrized(mixed))
}

/// `G^{-1/2} X G^{-1/2}`.
pub fn transport_center(x: &SpdMatrix, g: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(x.dim(), g.dim())?;
    let (_, gi) = spd_sqrt_pair(g)?;
    Ok(SpdMatrix::from_trusted(&gi * x.as_mat() * &gi))
}

/// `B^{1/2} X B^{1/2}`.
pub fn transport_bias(x: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(x.dim(), b.dim())?;
    let (bh, _) = spd_sqrt_pair(b)?;
    Ok(SpdMatrix::from_trusted(&bh * x.as_mat() * &bh))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KarcherOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        KarcherOptions {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

/// Karcher (Fréchet) mean under the affine-invariant metric, with default
/// options.
pub fn karcher_mean(batch: &[SpdMatrix]) -> Result<SpdMatrix> {
    karcher_mean_with(batch, KarcherOptions::default())
}

/// Fixed-point iteration `G ← G^{1/2} exp(mean log(G^{-1/2} Xᵢ G^{-1/2})) G^{1/2}`
/// started at the arithmetic mean.
pub fn karcher_mean_with(batch: &[SpdMatrix], opts: KarcherOptions) -> Result<SpdMatrix> {
    let mats: Vec<&Mat> = batch.iter().map(|x| x.as_mat()).collect();
    karcher_mean_mats(&mats, opts).map(SpdMatrix::from_trusted)
}

pub(crate) fn karcher_mean_mats(batch: &[&Mat], opts: KarcherOptions) -> Result<Mat> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Data("karcher mean of an empty batch".into()))?;
    let n = first.nrows();
    for x in batch {
        check_dims(n, x.nrows())?;
    }
    let mut g = Mat::zeros(n, n);
    for x in batch {
        g += *x;
    }
    g /= batch.len() as f64;

    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (gh, gih) = sqrt_pair(&g)?;
        let mut tangent = Mat::zeros(n, n);
        for x in batch {
            let inner = SymMatrix::symmetrized(&gih * *x * &gih);
            let e = inner.eig()?;
            if e.min_eigval() <= 0.0 {
                return Err(Error::Domain("batch member is not positive definite".into()));
            }
            tangent += e.map(f64::ln);
        }
        tangent /= batch.len() as f64;
        residual = tangent.norm();
        if residual < opts.tol {
            return Ok(g);
        }
        let step = jacobi(&SymMatrix::symmetrized(tangent).0)?.map(f64::exp);
        g = SymMatrix::symmetrized(&gh * step * &gh).0;
    }
    Err(Error::MeanFailure { residual })
}

/// Correlation distance `sqrt(2(1 − c))` elementwise, zero diagonal.
pub fn corr_distance(c: &SymMatrix) -> Result<SymMatrix> {
    const SLACK: f64 = 1e-12;
    let n = c.dim();
    let mut d = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let v = c.get(i, j);
            if !(-1.0 - SLACK..=1.0 + SLACK).contains(&v) {
                return Err(Error::Domain(format!("correlation {v} at ({i},{j}) outside [-1, 1]")));
            }
            if i != j {
                d[(i, j)] = (2.0 * (1.0 - v.clamp(-1.0, 1.0))).sqrt();
            }
        }
    }
    Ok(SymMatrix(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, SQRT_2};

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(&a * a.transpose() + Mat::identity(n, n) * 0.2).unwrap()
    }

    fn rel(a: &Mat, b: &Mat) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn log_exp_anchors() {
        let l = spd_log(&SpdMatrix::identity(3)).unwrap();
        assert!(l.as_mat().norm() < 1e-15);
        let l = spd_log(&SpdMatrix::from_diagonal(&[E, 1.0]).unwrap()).unwrap();
        assert!((l.get(0, 0) - 1.0).abs() < 1e-15 && l.get(1, 1).abs() < 1e-15);
        let x = spd_exp(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(x.as_mat(), &Mat::identity(3, 3));
        let x = spd_exp(&SymMatrix::from_diagonal(&[1.0, 0.0])).unwrap();
        assert!((x.get(0, 0) - E).abs() < 1e-15 && (x.get(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spd(6, &mut rng);
        let back = spd_exp(&spd_log(&x).unwrap()).unwrap();
        assert!(rel(back.as_mat(), x.as_mat()) < 1e-8);
    }

    #[test]
    fn exp_overflow() {
        let s = SymMatrix::from_diagonal(&[800.0, 0.0]);
        assert!(matches!(spd_exp(&s), Err(Error::Overflow(_))));
    }

    #[test]
    fn log_below_tolerance_is_domain_error() {
        let x = SpdMatrix::with_tolerance(Mat::from_diagonal(&nalgebra::dvector![1.0, 1e-3]), 1e-4).unwrap();
        assert!(spd_log(&x).is_ok());
        let mut tight = x.clone();
        tight.tolerance = 1e-2;
        assert!(matches!(spd_log(&tight), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_anchors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_spd(4, &mut rng);
        let d0 = affine_distance(&x, &x).unwrap();
        assert!(d0 < 1e-10, "{d0}");
        let one = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let e2 = SpdMatrix::from_diagonal(&[E * E]).unwrap();
        assert!((affine_distance(&one, &e2).unwrap() - 2.0).abs() < 1e-14);
        let y = random_spd(4, &mut rng);
        let d1 = affine_distance(&x, &y).unwrap();
        let d2 = affine_distance(&y, &x).unwrap();
        assert!((d1 - d2).abs() < 1e-10);
        assert!(affine_distance(&x, &one).is_err());
    }

    #[test]
    fn karcher_anchors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(5, &mut rng);
        let m = karcher_mean(&[a.clone(), a.clone()]).unwrap();
        assert!((m.as_mat() - a.as_mat()).norm() < 1e-10);
        let m = karcher_mean(&[a.clone()]).unwrap();
        assert!((m.as_mat() - a.as_mat()).norm() < 1e-10);
        let m = karcher_mean(&[
            SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap(),
            SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap(),
        ])
        .unwrap();
        assert!((m.as_mat() - Mat::identity(2, 2) * 2.0).norm() < 1e-10);
        assert!(karcher_mean(&[]).is_err());
    }

    #[test]
    fn karcher_iteration_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch: Vec<_> = (0..4).map(|_| random_spd(4, &mut rng)).collect();
        let r = karcher_mean_with(&batch, KarcherOptions { max_iter: 1, tol: 1e-14 });
        assert!(matches!(r, Err(Error::MeanFailure { .. })));
    }

    #[test]
    fn transport_anchors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_spd(5, &mut rng);
        let g = random_spd(5, &mut rng);
        let c = transport_center(&x, &x).unwrap();
        assert!((c.as_mat() - Mat::identity(5, 5)).norm() < 1e-10);
        let b = transport_bias(&SpdMatrix::identity(5), &g).unwrap();
        assert!(rel(b.as_mat(), g.as_mat()) < 1e-12);
        let round = transport_bias(&transport_center(&x, &g).unwrap(), &g).unwrap();
        assert!(rel(round.as_mat(), x.as_mat()) < 1e-9);
    }

    #[test]
    fn geodesic_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(4, &mut rng);
        let b = random_spd(4, &mut rng);
        assert!(rel(geodesic(&a, &b, 0.0).unwrap().as_mat(), a.as_mat()) < 1e-10);
        assert!(rel(geodesic(&a, &b, 1.0).unwrap().as_mat(), b.as_mat()) < 1e-10);
        let mid = geodesic(&a, &b, 0.5).unwrap();
        let da = affine_distance(&a, &mid).unwrap();
        let db = affine_distance(&mid, &b).unwrap();
        assert!((da - db).abs() < 1e-9);
    }

    #[test]
    fn corr_distance_anchors() {
        let c = SymMatrix::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ])
        .unwrap();
        let d = corr_distance(&c).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(0, 2), SQRT_2);
        assert_eq!(d.get(1, 2), 2.0);
        assert_eq!(d.get(0, 0), 0.0);
        let bad = SymMatrix::from_rows(&[vec![1.0, 1.1], vec![1.1, 1.0]]).unwrap();
        assert!(corr_distance(&bad).is_err());
    }
}
