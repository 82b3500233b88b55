//! Bayesian logistic regression with a Gaussian (Laplace) posterior.
//!
//! The posterior over `beta = (intercept, w_1..w_d)` is approximated by a
//! Gaussian centred at the MAP estimate, found by Newton-Raphson, with
//! covariance `(X^T L X + S0^-1)^-1` where `L = diag(l+ * l-)`. Predictions
//! integrate the logistic over that Gaussian with the probit-style
//! approximation `sigma(m_a / sqrt(1 + pi s_a^2 / 8))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::DesignMatrix;

/// Prior variance of every coefficient under the default flat-ish prior.
pub const DEFAULT_PRIOR_VARIANCE: f64 = 1e4;

// Fixed chunking keeps the floating-point reduction order independent of the
// number of worker threads.
const CHUNK_ROWS: usize = 4096;

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log sigma(a)`, finite for any finite `a`.
#[inline]
pub fn log_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

/// Approximate predictive probability for a linear score with mean `m_a`
/// and variance `s2_a` under a Gaussian posterior.
pub fn moderated_probability(m_a: f64, s2_a: f64) -> f64 {
    let kappa = (1.0 + std::f64::consts::PI * s2_a / 8.0).sqrt().recip();
    sigmoid(kappa * m_a).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        let precision = spd_inverse(&cov, "prior covariance")?;
        Ok(GaussianPrior { mean, cov, precision })
    }

    /// `N(0, alpha I)` over `n_params` coefficients (intercept included).
    pub fn isotropic(n_params: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("prior variance {alpha} must be positive")));
        }
        Self::new(
            DVector::zeros(n_params),
            DMatrix::from_diagonal_element(n_params, n_params, alpha),
        )
    }

    /// The default prior for `n_covariates` features plus an intercept.
    pub fn default_for(n_covariates: usize) -> Self {
        Self::isotropic(n_covariates + 1, DEFAULT_PRIOR_VARIANCE).expect("valid default prior")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn n_params(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

impl GaussianPosterior {
    pub fn n_params(&self) -> usize {
        self.mean.len()
    }

    /// Reuse as the prior for the next batch of data.
    pub fn to_prior(&self) -> Result<GaussianPrior> {
        GaussianPrior::new(self.mean.clone(), self.cov.clone())
    }

    /// Posterior standard deviation of coefficient `i` (0 is the intercept).
    pub fn sd(&self, i: usize) -> f64 {
        self.cov[(i, i)].sqrt()
    }

    /// `(m_a, s_a^2)` of the linear score for covariates `x` (no intercept entry).
    pub fn score_moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.n_params();
        if x.len() + 1 != p {
            return Err(Error::DimensionMismatch {
                expected: p - 1,
                actual: x.len(),
            });
        }
        let xa = |i: usize| if i == 0 { 1.0 } else { x[i - 1] };
        let mut m_a = 0.0;
        let mut s2 = 0.0;
        for i in 0..p {
            m_a += xa(i) * self.mean[i];
            let mut row = 0.0;
            for j in 0..p {
                row += self.cov[(i, j)] * xa(j);
            }
            s2 += xa(i) * row;
        }
        Ok((m_a, s2.max(0.0)))
    }

    /// Predictive probability of being online for covariates `x` (no intercept entry).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let (m_a, s2) = self.score_moments(x)?;
        Ok(moderated_probability(m_a, s2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop once the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Step halvings tried when a full Newton step lowers the log posterior.
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-6,
            max_iter: 100,
            max_halvings: 20,
        }
    }
}

/// Log-likelihood, gradient of the log-likelihood and `X^T L X` in one pass.
struct Sums {
    loglik: f64,
    grad: Vec<f64>,
    // Row-major p x p; only the upper triangle is accumulated.
    xtlx: Vec<f64>,
}

impl Sums {
    fn zeros(p: usize) -> Self {
        Sums {
            loglik: 0.0,
            grad: vec![0.0; p],
            xtlx: vec![0.0; p * p],
        }
    }

    fn merge(&mut self, other: &Sums) {
        self.loglik += other.loglik;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
        for (a, b) in self.xtlx.iter_mut().zip(&other.xtlx) {
            *a += b;
        }
    }
}

fn accumulate(beta: &[f64], x: &DesignMatrix, want_curvature: bool) -> Sums {
    let p = beta.len();
    let d = p - 1;
    let cov = x.covariates();
    let labels = x.labels();
    let n_chunks = labels.len().div_ceil(CHUNK_ROWS);
    let partials: Vec<Sums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let rows = c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(labels.len());
            let xc = &cov[rows.start * d..rows.end * d];
            let yc = &labels[rows];
            let mut s = Sums::zeros(p);
            let mut xa = vec![1.0; p];
            for (i, &y) in yc.iter().enumerate() {
                xa[1..].copy_from_slice(&xc[i * d..(i + 1) * d]);
                let a: f64 = xa.iter().zip(beta).map(|(u, b)| u * b).sum();
                let y = y as f64;
                s.loglik += y * log_sigmoid(a) + (1.0 - y) * log_sigmoid(-a);
                let lp = sigmoid(a);
                let r = y - lp;
                for (g, u) in s.grad.iter_mut().zip(&xa) {
                    *g += u * r;
                }
                if want_curvature {
                    let w = lp * sigmoid(-a);
                    for j in 0..p {
                        let wj = w * xa[j];
                        for k in j..p {
                            s.xtlx[j * p + k] += wj * xa[k];
                        }
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Sums::zeros(p);
    for s in &partials {
        total.merge(s);
    }
    for j in 0..p {
        for k in 0..j {
            total.xtlx[j * p + k] = total.xtlx[k * p + j];
        }
    }
    total
}

fn check_dims(beta_len: usize, x: &DesignMatrix, prior: &GaussianPrior) -> Result<()> {
    if prior.n_params() != x.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: x.dim() + 1,
            actual: prior.n_params(),
        });
    }
    if beta_len != prior.n_params() {
        return Err(Error::DimensionMismatch {
            expected: prior.n_params(),
            actual: beta_len,
        });
    }
    Ok(())
}

fn prior_terms(beta: &DVector<f64>, prior: &GaussianPrior) -> (f64, DVector<f64>) {
    let diff = beta - prior.mean();
    let pd = prior.precision() * &diff;
    (-0.5 * diff.dot(&pd), -pd)
}

/// Log posterior up to an additive constant: the log-likelihood plus
/// `-1/2 (beta - m0)^T S0^-1 (beta - m0)`; normalising constants are dropped.
pub fn log_posterior(beta: &DVector<f64>, x: &DesignMatrix, prior: &GaussianPrior) -> Result<f64> {
    check_dims(beta.len(), x, prior)?;
    let sums = accumulate(beta.as_slice(), x, false);
    Ok(sums.loglik + prior_terms(beta, prior).0)
}

/// `X^T (y - l+) - S0^-1 (beta - m0)`.
pub fn gradient(beta: &DVector<f64>, x: &DesignMatrix, prior: &GaussianPrior) -> Result<DVector<f64>> {
    check_dims(beta.len(), x, prior)?;
    let sums = accumulate(beta.as_slice(), x, false);
    Ok(DVector::from_vec(sums.grad) + prior_terms(beta, prior).1)
}

/// Hessian of the log posterior, `-(X^T L X + S0^-1)`.
pub fn hessian(beta: &DVector<f64>, x: &DesignMatrix, prior: &GaussianPrior) -> Result<DMatrix<f64>> {
    check_dims(beta.len(), x, prior)?;
    let p = beta.len();
    let sums = accumulate(beta.as_slice(), x, true);
    Ok(-(DMatrix::from_row_slice(p, p, &sums.xtlx) + prior.precision()))
}

/// Diagonal of `L = diag(l+ l-)` at `beta`.
pub fn curvature_weights(beta: &DVector<f64>, x: &DesignMatrix) -> Vec<f64> {
    (0..x.n_rows())
        .map(|i| {
            let a = beta[0]
                + x.row(i)
                    .iter()
                    .zip(beta.iter().skip(1))
                    .map(|(u, b)| u * b)
                    .sum::<f64>();
            sigmoid(a) * sigmoid(-a)
        })
        .collect()
}

struct Evaluation {
    log_post: f64,
    grad: DVector<f64>,
    /// `X^T L X + S0^-1`, the negative Hessian.
    neg_hess: DMatrix<f64>,
}

impl Evaluation {
    fn at(beta: &DVector<f64>, x: &DesignMatrix, prior: &GaussianPrior) -> Self {
        let p = beta.len();
        let sums = accumulate(beta.as_slice(), x, true);
        let (prior_lp, prior_grad) = prior_terms(beta, prior);
        Evaluation {
            log_post: sums.loglik + prior_lp,
            grad: DVector::from_vec(sums.grad) + prior_grad,
            neg_hess: DMatrix::from_row_slice(p, p, &sums.xtlx) + prior.precision(),
        }
    }

    fn grad_norm(&self) -> f64 {
        self.grad.amax()
    }
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| {
        let diag: Vec<String> = m.diagonal().iter().map(|v| format!("{v:.3e}")).collect();
        Error::NotPositiveDefinite(format!("{what} (diagonal [{}])", diag.join(", ")))
    })
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotPositiveDefinite(format!("{what} is not square")));
    }
    let inv = cholesky(m, what)?.inverse();
    // Cholesky only reads the lower triangle; symmetrise the result.
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Laplace approximation of the posterior, starting Newton-Raphson from zero.
///
/// When a full Newton step would lower the log posterior the step is halved
/// (up to `max_halvings` times), which keeps iterates monotone. If
/// `max_iter` is reached the current iterate is returned with
/// `converged = false`.
pub fn fit_laplace(x: &DesignMatrix, prior: &GaussianPrior, opts: &FitOptions) -> Result<GaussianPosterior> {
    if x.is_empty() {
        return Err(Error::invalid("cannot fit on an empty design matrix"));
    }
    let p = prior.n_params();
    check_dims(p, x, prior)?;

    let mut beta = DVector::zeros(p);
    let mut eval = Evaluation::at(&beta, x, prior);
    let mut iterations = 0;
    while eval.grad_norm() > opts.grad_tol && iterations < opts.max_iter {
        let direction = cholesky(&eval.neg_hess, "X^T L X + S0^-1")?.solve(&eval.grad);
        // Rounding noise in a sum over many rows must not count as a decrease.
        let slack = 1e-11 * (1.0 + eval.log_post.abs());
        let mut step = 1.0;
        let mut halvings = 0;
        let (next_beta, next_eval) = loop {
            let cand = &beta + &direction * step;
            let ev = Evaluation::at(&cand, x, prior);
            if ev.log_post >= eval.log_post - slack || halvings >= opts.max_halvings {
                break (cand, ev);
            }
            step *= 0.5;
            halvings += 1;
        };
        beta = next_beta;
        eval = next_eval;
        iterations += 1;
    }

    let cov = spd_inverse(&eval.neg_hess, "posterior precision")?;
    Ok(GaussianPosterior {
        converged: eval.grad_norm() <= opts.grad_tol,
        final_grad_norm: eval.grad_norm(),
        mean: beta,
        cov,
        iterations,
    })
}

/// Sequential Bayesian updating: the posterior after each batch is the prior
/// for the next. Empty batches leave the posterior unchanged.
pub fn fit_batched<'a, I>(batches: I, prior: &GaussianPrior, opts: &FitOptions) -> Result<GaussianPosterior>
where
    I: IntoIterator<Item = &'a DesignMatrix>,
{
    let mut current: Option<GaussianPosterior> = None;
    let mut prior = prior.clone();
    let mut dim = None;
    for batch in batches {
        if *dim.get_or_insert(batch.dim()) != batch.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap(),
                actual: batch.dim(),
            });
        }
        if batch.is_empty() {
            continue;
        }
        let post = fit_laplace(batch, &prior, opts)?;
        prior = post.to_prior()?;
        current = Some(post);
    }
    match current {
        Some(p) => Ok(p),
        None => Err(Error::invalid("no non-empty batches to fit")),
    }
}
