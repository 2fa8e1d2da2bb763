//! Multivariate normal distributions in precision form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(mean, precision^-1)` with a cached Cholesky factor of the precision.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    logdet_precision: f64,
    jittered: bool,
}

impl PartialEq for GaussianDist {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.precision == other.precision
    }
}

/// Cholesky factorisation with one diagonal-jitter retry.
///
/// Returns the factor and whether jitter (`1e-10 * trace / d`) was needed.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, false));
    }
    let d = m.nrows().max(1) as f64;
    let jitter = 1e-10 * m.trace().abs() / d;
    if jitter == 0.0 || !jitter.is_finite() {
        return None;
    }
    let mut j = m.clone();
    for i in 0..m.nrows() {
        j[(i, i)] += jitter;
    }
    Cholesky::new(j).map(|c| (c, true))
}

pub(crate) fn logdet_from_cholesky(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl GaussianDist {
    /// Builds a Gaussian from its mean and (symmetric positive-definite) precision.
    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidArgument("Gaussian dimension must be at least 1".into()));
        }
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch { context: "precision vs mean", left: precision.nrows(), right: d });
        }
        if mean.iter().chain(precision.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gaussian parameters"));
        }
        let scale = precision.amax().max(f64::MIN_POSITIVE);
        let asym = (&precision - precision.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidArgument(format!("precision is not symmetric (max asymmetry {asym:e})")));
        }
        let (chol, jittered) = cholesky_with_jitter(&precision).ok_or_else(|| Error::NotPositiveDefinite("precision matrix".into()))?;
        let logdet_precision = logdet_from_cholesky(&chol);
        Ok(Self { mean, precision, chol, logdet_precision, jittered })
    }

    pub fn from_covariance(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let (chol, _) = cholesky_with_jitter(&covariance).ok_or_else(|| Error::NotPositiveDefinite("covariance matrix".into()))?;
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        Self::from_precision(mean, precision)
    }

    /// `N(0, variance * I)`.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance must be finite and positive, got {variance}")));
        }
        Self::from_precision(DVector::zeros(d), DMatrix::identity(d, d) / variance)
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance must be finite and positive, got {variance}")));
        }
        Self::from_precision(DVector::from_element(1, mean), DMatrix::from_element(1, 1, 1.0 / variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn logdet_precision(&self) -> f64 {
        self.logdet_precision
    }

    /// Whether the Cholesky factorisation needed diagonal jitter.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `precision * mean`, the natural-parameter vector.
    pub fn precision_mean(&self) -> DVector<f64> {
        &self.precision * &self.mean
    }

    /// `mean' precision mean`.
    pub fn mahalanobis_mean(&self) -> f64 {
        self.mean.dot(&self.precision_mean())
    }

    /// Solves `precision * x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn log_density(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "log_density point", left: w.len(), right: self.dim() });
        }
        let diff = w - &self.mean;
        let quad = diff.dot(&(&self.precision * &diff));
        Ok(-0.5 * quad + 0.5 * self.logdet_precision - 0.5 * self.dim() as f64 * LN_2PI)
    }

    /// `count` draws as rows of a `count x d` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        let d = self.dim();
        let l = self.chol.l();
        let mut out = DMatrix::zeros(count, d);
        for r in 0..count {
            let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            // x = L^-T z has covariance (L L^T)^-1
            let x = l.tr_solve_lower_triangular(&z).expect("Cholesky factor has a positive diagonal");
            for j in 0..d {
                out[(r, j)] = self.mean[j] + x[j];
            }
        }
        out
    }
}

/// Closed-form `KL(p || q)` between two Gaussians.
pub fn kl_gaussian(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { context: "kl_gaussian", left: d, right: q.dim() });
    }
    // tr(Λ_q Σ_p) = tr(Σ_p Λ_q)
    let sigma_p_lambda_q = p.chol.solve(&q.precision);
    let trace = sigma_p_lambda_q.trace();
    let diff = &q.mean - &p.mean;
    let quad = diff.dot(&(&q.precision * &diff));
    let kl = 0.5 * (trace + quad - d as f64 + p.logdet_precision - q.logdet_precision);
    Ok(kl.max(0.0))
}

/// Exact posterior of an unknown mean under a known-variance Gaussian likelihood.
pub fn conjugate_mean_fit(samples: &[f64], noise_var: f64, prior: &GaussianDist) -> Result<GaussianDist> {
    if prior.dim() != 1 {
        return Err(Error::DimensionMismatch { context: "conjugate prior must be 1-D", left: prior.dim(), right: 1 });
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
    }
    let lambda0 = prior.precision[(0, 0)];
    let mu0 = prior.mean[0];
    let lambda = lambda0 + samples.len() as f64 / noise_var;
    let mean = (lambda0 * mu0 + samples.iter().sum::<f64>() / noise_var) / lambda;
    GaussianDist::from_precision(DVector::from_element(1, mean), DMatrix::from_element(1, 1, lambda))
}
