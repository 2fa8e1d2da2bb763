//! Pointwise mutual information between a training and a test dataset,
//! computed from Gaussian parameter posteriors.
//!
//! For conditionally independent datasets `d`, `t` given parameters `w`,
//!
//! ```text
//! log p(t|d)/p(t) = log p(w|d) + log p(w|t) - log p(w) - log p(w|d,t)
//! ```
//!
//! holds at every `w`. With Gaussian posteriors the joint posterior follows from
//! the two marginal posteriors, so only two fits are needed.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddedDataset;
use crate::error::{Error, Result};
use crate::gaussian::{kl_gaussian, GaussianDist};
use crate::laplace::{laplace_fit, log_likelihood, FitSettings, PriorSpec};

/// Which evaluation route produced a PMI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PmiPath {
    /// Joint posterior derived in closed form from the two marginal posteriors.
    GaussianClosedForm,
    /// Log-density identity at a point, with a separately supplied joint posterior.
    EtaPoint,
    /// Sampled predictive likelihoods.
    MonteCarlo,
}

impl std::fmt::Display for PmiPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PmiPath::GaussianClosedForm => "gaussian-closed-form",
            PmiPath::EtaPoint => "eta-point",
            PmiPath::MonteCarlo => "monte-carlo",
        })
    }
}

/// A PMI value in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiValue {
    pub value: f64,
    pub eta_used: Vec<f64>,
    pub path: PmiPath,
}

fn check_dims(gs: &[&GaussianDist]) -> Result<usize> {
    let d = gs[0].dim();
    for g in &gs[1..] {
        if g.dim() != d {
            return Err(Error::DimensionMismatch { context: "posterior dimensions", left: d, right: g.dim() });
        }
    }
    Ok(d)
}

/// `p(w | d, t)` from `p(w | d)`, `p(w | t)` and the prior.
///
/// Precision `Λ_d + Λ_t - Λ_0`, mean `Λ^-1 (Λ_d μ_d + Λ_t μ_t - Λ_0 μ_0)`.
pub fn joint_posterior(post_d: &GaussianDist, post_t: &GaussianDist, prior: &GaussianDist) -> Result<GaussianDist> {
    check_dims(&[post_d, post_t, prior])?;
    let precision = post_d.precision() + post_t.precision() - prior.precision();
    let precision = (&precision + precision.transpose()) * 0.5;
    let Some(chol) = Cholesky::new(precision.clone()) else {
        let min_eigenvalue = precision.symmetric_eigenvalues().min();
        return Err(Error::JointPosteriorUndefined { min_eigenvalue });
    };
    let h = post_d.precision_mean() + post_t.precision_mean() - prior.precision_mean();
    let mean = chol.solve(&h);
    GaussianDist::from_precision(mean, precision)
}

/// Closed-form Gaussian PMI, evaluated in precision form.
pub fn pmi_gaussian(post_d: &GaussianDist, post_t: &GaussianDist, prior: &GaussianDist) -> Result<PmiValue> {
    let joint = joint_posterior(post_d, post_t, prior)?;
    Ok(PmiValue { value: pmi_from_joint(post_d, post_t, prior, &joint), eta_used: vec![0.0; prior.dim()], path: PmiPath::GaussianClosedForm })
}

fn pmi_from_joint(a: &GaussianDist, b: &GaussianDist, prior: &GaussianDist, joint: &GaussianDist) -> f64 {
    let logdet = a.logdet_precision() + b.logdet_precision() - prior.logdet_precision() - joint.logdet_precision();
    let quad = prior.mahalanobis_mean() + joint.mahalanobis_mean() - a.mahalanobis_mean() - b.mahalanobis_mean();
    0.5 * (logdet + quad)
}

/// PMI through the log-density identity at `eta`.
///
/// Independent of `eta` only when `post_joint` is the exact joint posterior.
pub fn pmi_at_eta(
    post_d: &GaussianDist,
    post_t: &GaussianDist,
    post_joint: &GaussianDist,
    prior: &GaussianDist,
    eta: &DVector<f64>,
) -> Result<PmiValue> {
    check_dims(&[post_d, post_t, post_joint, prior])?;
    let value = post_d.log_density(eta)? + post_t.log_density(eta)? - prior.log_density(eta)? - post_joint.log_density(eta)?;
    Ok(PmiValue { value, eta_used: eta.iter().copied().collect(), path: PmiPath::EtaPoint })
}

/// `log(mean(exp(values)))`, stable against overflow and underflow.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY || values.is_empty() {
        return f64::NEG_INFINITY;
    }
    if peak == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - peak).exp()).sum();
    peak + (s / values.len() as f64).ln()
}

/// Monte-Carlo PMI for an arbitrary test log-likelihood:
/// `log E_{w~post_d}[p(t|w)] - log E_{w~prior}[p(t|w)]`.
///
/// Posterior draws come first, then prior draws, from the same rng.
pub fn pmi_monte_carlo_with<R, F>(post_d: &GaussianDist, prior: &GaussianDist, n_samples: usize, rng: &mut R, test_loglik: F) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>) -> f64,
{
    check_dims(&[post_d, prior])?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("Monte-Carlo PMI needs at least 2 samples, got {n_samples}")));
    }
    let mut estimate = |g: &GaussianDist| -> Result<f64> {
        let draws = g.sample(rng, n_samples);
        let ll: Vec<f64> = (0..n_samples).map(|r| test_loglik(&draws.row(r).transpose())).collect();
        let v = log_mean_exp(&ll);
        if v == f64::NEG_INFINITY {
            return Err(Error::NumericalUnderflow);
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("Monte-Carlo log-likelihood"));
        }
        Ok(v)
    };
    let with_d = estimate(post_d)?;
    let without = estimate(prior)?;
    Ok(with_d - without)
}

/// Monte-Carlo PMI for the logistic model: fits `p(w|d)` by Laplace and samples it.
pub fn pmi_monte_carlo<R: Rng + ?Sized>(
    d: &EmbeddedDataset,
    t: &EmbeddedDataset,
    prior: &PriorSpec,
    settings: &FitSettings,
    n_samples: usize,
    rng: &mut R,
) -> Result<PmiValue> {
    if d.dim() != t.dim() {
        return Err(Error::DimensionMismatch { context: "Monte-Carlo pair dimensions", left: d.dim(), right: t.dim() });
    }
    if t.is_empty() {
        return Ok(PmiValue { value: 0.0, eta_used: Vec::new(), path: PmiPath::MonteCarlo });
    }
    let post_d = laplace_fit(d, prior, settings)?;
    let value = pmi_monte_carlo_with(&post_d, &prior.to_gaussian(), n_samples, rng, |w| log_likelihood(t, w))?;
    Ok(PmiValue { value, eta_used: Vec::new(), path: PmiPath::MonteCarlo })
}

/// KL-form breakdown of a Gaussian PMI value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiDecomposition {
    /// `KL(p(w|d,t) || p(w))`
    pub kl_joint_vs_prior: f64,
    /// `KL(p(w|d,t) || p(w|d))`
    pub kl_joint_vs_post_d: f64,
    /// `KL(p(w|d,t) || p(w|t))`
    pub kl_joint_vs_post_t: f64,
    /// Dual skew geometric Jensen-Shannon divergence (skew ½) of the two posteriors.
    pub js_dual: f64,
    /// `½ (log det Λ_joint - log det Λ_0)`: log generalised-variance reduction.
    pub confidence_gain: f64,
    /// Parameter dimension.
    pub dim: usize,
}

impl PmiDecomposition {
    /// `kl_joint_vs_prior - kl_joint_vs_post_d - kl_joint_vs_post_t`; equals the PMI.
    pub fn kl_form(&self) -> f64 {
        self.kl_joint_vs_prior - self.kl_joint_vs_post_d - self.kl_joint_vs_post_t
    }

    /// Flat-prior approximation `confidence_gain - 2 js_dual - d ln 2`.
    pub fn flat_prior_approximation(&self) -> f64 {
        self.confidence_gain - 2.0 * self.js_dual - self.dim as f64 * std::f64::consts::LN_2
    }
}

pub fn decompose(post_d: &GaussianDist, post_t: &GaussianDist, prior: &GaussianDist) -> Result<PmiDecomposition> {
    let joint = joint_posterior(post_d, post_t, prior)?;
    let sum_precision = post_d.precision() + post_t.precision();
    let sum_chol = Cholesky::new(sum_precision.clone()).ok_or_else(|| Error::NotPositiveDefinite("summed posterior precision".into()))?;
    let geo_mean = sum_chol.solve(&(post_d.precision_mean() + post_t.precision_mean()));
    let geo = GaussianDist::from_precision(geo_mean, sum_precision * 0.5)?;
    Ok(PmiDecomposition {
        kl_joint_vs_prior: kl_gaussian(&joint, prior)?,
        kl_joint_vs_post_d: kl_gaussian(&joint, post_d)?,
        kl_joint_vs_post_t: kl_gaussian(&joint, post_t)?,
        js_dual: 0.5 * kl_gaussian(&geo, post_d)? + 0.5 * kl_gaussian(&geo, post_t)?,
        confidence_gain: 0.5 * (joint.logdet_precision() - prior.logdet_precision()),
        dim: prior.dim(),
    })
}
