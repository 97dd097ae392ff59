//! Symmetric and SPD matrix types plus the Riemannian primitives every other
//! module builds on.
//!
//! Geometry is affine-invariant unless a function name says otherwise
//! (`log_euclidean_*`).

mod eig;
mod ops;

use nalgebra::DMatrix;

pub use eig::{sym_eig, EigenDecomposition, JACOBI_TOLERANCE, MAX_SWEEPS};
pub use ops::{
    affine_distance, corr_distance, geodesic, karcher_mean, karcher_mean_with, log_euclidean_blend,
    log_euclidean_distance, spd_exp, spd_log, spd_pow, spd_sqrt_pair, transport_bias,
    transport_center, KarcherOptions, EXP_CAP,
};

pub(crate) use eig::jacobi;
pub(crate) use ops::karcher_mean_mats;

use crate::error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

/// Default minimum admissible eigenvalue for [`SpdMatrix`].
pub const DEFAULT_SPD_TOLERANCE: f64 = 1e-10;

/// Eigenvalues in `(-JITTER_FLOOR, tolerance]` are repaired by a diagonal
/// shift; anything more negative is rejected.
pub const JITTER_FLOOR: f64 = 1e-10;

/// A square matrix that is exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Rejects non-square, empty or
    /// non-finite input.
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::shape("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 {
            return Err(Error::shape("dim >= 1", "0"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite matrix entry".into()));
        }
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(mut m: Mat) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Mat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SymMatrix(Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    /// Builds from row-major nested data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("{n}x{n}"), "ragged rows"));
        }
        Self::new(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        sym_eig(self)
    }

    /// Mean of the strictly off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.dim();
        if n < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..j {
                s += self.0[(i, j)];
            }
        }
        s / (n * (n - 1) / 2) as f64
    }
}

/// A symmetric positive-definite matrix with a validated spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    sym: SymMatrix,
    tolerance: f64,
    repaired: bool,
}

impl SpdMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        Self::with_tolerance(m, DEFAULT_SPD_TOLERANCE)
    }

    /// Validates `m`. A smallest eigenvalue inside `(-1e-10, tolerance]` is
    /// lifted to `tolerance` by adding a multiple of the identity and the
    /// result is flagged as repaired.
    pub fn with_tolerance(m: Mat, tolerance: f64) -> Result<Self> {
        Self::from_sym(SymMatrix::new(m)?, tolerance)
    }

    pub fn from_sym(sym: SymMatrix, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::Config(format!("spd tolerance must be positive, got {tolerance}")));
        }
        let lmin = sym.eig()?.min_eigval();
        if lmin > tolerance {
            return Ok(SpdMatrix { sym, tolerance, repaired: false });
        }
        if lmin > -JITTER_FLOOR {
            let mut m = sym.into_mat();
            let shift = tolerance - lmin;
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
            return Ok(SpdMatrix {
                sym: SymMatrix(m),
                tolerance,
                repaired: true,
            });
        }
        Err(Error::Domain(format!("matrix is not positive definite (smallest eigenvalue {lmin:e})")))
    }

    /// Wraps a matrix that is SPD by construction (congruences, spectral maps
    /// with positive images). Only symmetrizes.
    pub(crate) fn from_trusted(m: Mat) -> Self {
        SpdMatrix {
            sym: SymMatrix::symmetrized(m),
            tolerance: DEFAULT_SPD_TOLERANCE,
            repaired: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_trusted(Mat::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(d).into_mat())
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn as_mat(&self) -> &Mat {
        self.sym.as_mat()
    }

    pub fn into_mat(self) -> Mat {
        self.sym.into_mat()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Whether construction had to lift the spectrum.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        self.sym.eig()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sym.get(i, j)
    }
}

impl From<SpdMatrix> for SymMatrix {
    fn from(x: SpdMatrix) -> Self {
        x.sym
    }
}

impl AsRef<Mat> for SymMatrix {
    fn as_ref(&self) -> &Mat {
        &self.0
    }
}

impl AsRef<Mat> for SpdMatrix {
    fn as_ref(&self) -> &Mat {
        self.as_mat()
    }
}
