use crate::error::{Error, Result};
use crate::spd::{Mat, SpdMatrix};

/// Projected-gradient stopping threshold.
pub const KKT_TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 200_000;

/// Long-only, fully invested portfolio.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioWeights {
    pub weights: Vec<f64>,
}

impl PortfolioWeights {
    pub fn equal(n: usize) -> Self {
        PortfolioWeights {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dot(&self, r: &[f64]) -> f64 {
        self.weights.iter().zip(r).map(|(w, x)| w * x).sum()
    }
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}` by the sort-and-threshold
/// rule.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `μᵀw − (γ/2) wᵀΣw`.
pub fn mv_objective(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64]) -> f64 {
    let n = w.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += w[i] * sigma[(i, j)] * w[j];
        }
    }
    mu.iter().zip(w).map(|(m, x)| m * x).sum::<f64>() - 0.5 * gamma * quad
}

fn gradient(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64]) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| mu[i] - gamma * (0..n).map(|j| sigma[(i, j)] * w[j]).sum::<f64>())
        .collect()
}

/// `L·‖w − P(w + ∇f/L)‖`, zero exactly at the constrained maximizer.
fn kkt_residual(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64], l: f64) -> f64 {
    let g = gradient(mu, sigma, gamma, w);
    let step: Vec<f64> = w.iter().zip(&g).map(|(x, gi)| x + gi / l).collect();
    let p = project_simplex(&step);
    l * w.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Solves the equality-constrained problem on the support of `w`; returns
/// the result when it is feasible and at least as accurate.
fn polish(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64], l: f64) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let k = support.len();
    let s = Mat::from_fn(k, k, |a, b| sigma[(support[a], support[b])]);
    let chol = nalgebra::Cholesky::new(s)?;
    let ones = nalgebra::DVector::from_element(k, 1.0);
    let m = nalgebra::DVector::from_iterator(k, support.iter().map(|&i| mu[i]));
    let si_one = chol.solve(&ones);
    let si_mu = chol.solve(&m);
    let nu = (ones.dot(&si_mu) - gamma) / ones.dot(&si_one);
    let ws = (si_mu - si_one * nu) / gamma;
    if ws.iter().any(|v| *v < 0.0) {
        return None;
    }
    let mut out = vec![0.0; w.len()];
    for (a, &i) in support.iter().enumerate() {
        out[i] = ws[a];
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    (kkt_residual(mu, sigma, gamma, &out, l) <= kkt_residual(mu, sigma, gamma, w, l)).then_some(out)
}

/// Maximizes `μᵀw − (γ/2) wᵀΣw` over the long-only simplex with
/// accelerated projected gradient (step `1/(γ λmax)`, adaptive restart),
/// then polishes on the detected support.
pub fn mv_optimize(mu: &[f64], sigma: &SpdMatrix, risk_aversion: f64) -> Result<PortfolioWeights> {
    mv_optimize_from(mu, sigma, risk_aversion, None)
}

/// [`mv_optimize`] with an optional starting point.
pub fn mv_optimize_from(
    mu: &[f64],
    sigma: &SpdMatrix,
    risk_aversion: f64,
    start: Option<&[f64]>,
) -> Result<PortfolioWeights> {
    let n = mu.len();
    if n == 0 || sigma.dim() != n {
        return Err(Error::shape(format!("{n}-asset covariance"), format!("{}x{}", sigma.dim(), sigma.dim())));
    }
    if !(risk_aversion > 0.0) {
        return Err(Error::Config(format!("risk aversion {risk_aversion} must be positive")));
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::Estimation("non-finite expected return".into()));
    }
    let s = sigma.as_mat();
    let l = (risk_aversion * sigma.eig()?.max_eigval()).max(1e-300);
    let mut w = match start {
        Some(w0) if w0.len() == n => project_simplex(w0),
        _ => vec![1.0 / n as f64; n],
    };
    let mut y = w.clone();
    let mut t: f64 = 1.0;
    let mut f_prev = mv_objective(mu, s, risk_aversion, &w);
    let mut residual = kkt_residual(mu, s, risk_aversion, &w, l);
    let mut iter = 0;
    while residual >= KKT_TOLERANCE && iter < MAX_ITER {
        let g = gradient(mu, s, risk_aversion, &y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(x, gi)| x + gi / l).collect();
        let next = project_simplex(&step);
        let f = mv_objective(mu, s, risk_aversion, &next);
        if f < f_prev {
            // restart momentum
            t = 1.0;
            y = w.clone();
            iter += 1;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = next.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
        w = next;
        t = t_next;
        f_prev = f;
        iter += 1;
        if iter % 10 == 0 {
            residual = kkt_residual(mu, s, risk_aversion, &w, l);
        }
    }
    residual = kkt_residual(mu, s, risk_aversion, &w, l);
    if let Some(p) = polish(mu, s, risk_aversion, &w, l) {
        w = p;
        residual = kkt_residual(mu, s, risk_aversion, &w, l);
    }
    if residual >= KKT_TOLERANCE {
        return Err(Error::OptFailure { residual });
    }
    Ok(PortfolioWeights { weights: w })
}
