//! Laplace-approximate Bayesian logistic regression.
//!
//! Model: `y_i ~ Bernoulli(sigmoid(w . x_i))`, `w ~ N(0, c I)`, no intercept.
//! The posterior is approximated by `N(w_map, H^-1)` where `H` is the Hessian of
//! the negative log-joint `E(w)` at the MAP:
//!
//! ```text
//! E(w)  = sum_i [softplus(w.x_i) - y_i w.x_i] + |w|^2 / (2c)
//! grad  = X^T (sigmoid(Xw) - y) + w / c
//! H     = X^T S X + I / c,   S = diag(s_i (1 - s_i))
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddedDataset;
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;

/// Isotropic zero-mean prior `N(0, c I)` over `d` weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    c: f64,
    d: usize,
}

impl PriorSpec {
    pub fn new(c: f64, d: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior scale C must be finite and positive, got {c}")));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("prior dimension must be at least 1".into()));
        }
        Ok(Self { c, d })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn to_gaussian(&self) -> GaussianDist {
        GaussianDist::isotropic(self.d, self.c).expect("validated prior")
    }
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub max_iter: usize,
    /// Stop once `|grad E|_inf <= grad_tol`.
    pub grad_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { max_iter: 5000, grad_tol: 1e-8 }
    }
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli-sigmoid log-likelihood `log p(y | X, w)`.
pub fn log_likelihood(x: &EmbeddedDataset, w: &DVector<f64>) -> f64 {
    let z = x.features() * w;
    z.iter().zip(x.labels()).map(|(&z, &y)| y as f64 * z - softplus(z)).sum()
}

/// Negative log-joint `E(w)` up to the prior's normalising constant.
pub fn negative_log_joint(x: &EmbeddedDataset, w: &DVector<f64>, c: f64) -> f64 {
    -log_likelihood(x, w) + w.norm_squared() / (2.0 * c)
}

pub fn gradient(x: &EmbeddedDataset, w: &DVector<f64>, c: f64) -> DVector<f64> {
    let z = x.features() * w;
    let resid = DVector::from_iterator(z.len(), z.iter().zip(x.labels()).map(|(&z, &y)| sigmoid(z) - y as f64));
    x.features().tr_mul(&resid) + w / c
}

pub fn hessian(x: &EmbeddedDataset, w: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let d = x.dim();
    let z = x.features() * w;
    let mut weighted = x.features().clone();
    for (i, &zi) in z.iter().enumerate() {
        let s = sigmoid(zi);
        weighted.row_mut(i).scale_mut(s * (1.0 - s));
    }
    let mut h = x.features().tr_mul(&weighted);
    for i in 0..d {
        h[(i, i)] += 1.0 / c;
    }
    // exact symmetry for the Cholesky-based consumers
    (&h + h.transpose()) * 0.5
}

/// Posterior plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub posterior: GaussianDist,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `E(w)` at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

pub fn laplace_fit(x: &EmbeddedDataset, prior: &PriorSpec, settings: &FitSettings) -> Result<GaussianDist> {
    laplace_fit_detailed(x, prior, settings).map(|f| f.posterior)
}

pub fn laplace_fit_detailed(x: &EmbeddedDataset, prior: &PriorSpec, settings: &FitSettings) -> Result<LaplaceFit> {
    settings.validate()?;
    if x.dim() != prior.dim() {
        return Err(Error::DimensionMismatch { context: "dataset vs prior dimension", left: x.dim(), right: prior.dim() });
    }
    let c = prior.c();
    let d = x.dim();
    let mut w = DVector::zeros(d);
    let mut value = negative_log_joint(x, &w, c);
    let mut grad = gradient(x, &w, c);
    let mut trace = vec![value];
    let mut iterations = 0;

    while grad.amax() > settings.grad_tol {
        if iterations == settings.max_iter {
            return Err(Error::NotConverged { iterations, grad_norm: grad.amax() });
        }
        iterations += 1;
        let h = hessian(x, &w, c);
        let chol = nalgebra::Cholesky::new(h).ok_or(Error::NonFinite("Newton Hessian"))?;
        let step = chol.solve(&grad);
        let slope = grad.dot(&step);
        if !slope.is_finite() {
            return Err(Error::NonFinite("Newton step"));
        }
        // Below the objective's resolution Armijo cannot see a decrease; the
        // full Newton step is taken there (quadratic convergence regime).
        let resolvable = 0.5 * slope > 1e-12 * (1.0 + value.abs());
        let mut t = 1.0;
        let mut accepted = None;
        if !resolvable {
            let cand = &w - &step;
            let v = negative_log_joint(x, &cand, c);
            if v.is_finite() {
                accepted = Some((cand, v));
            }
        }
        for _ in 0..60 {
            if accepted.is_some() {
                break;
            }
            let cand = &w - &step * t;
            let v = negative_log_joint(x, &cand, c);
            if v.is_finite() && v <= value - 1e-4 * t * slope {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            // no representable decrease left: at the floating-point floor of E
            let g = grad.amax();
            return Err(Error::NotConverged { iterations, grad_norm: g });
        };
        w = next;
        value = next_value;
        grad = gradient(x, &w, c);
        trace.push(value);
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
    }

    let precision = hessian(x, &w, c);
    let grad_norm = grad.amax();
    let posterior = GaussianDist::from_precision(w, precision)?;
    Ok(LaplaceFit { posterior, iterations, grad_norm, objective_trace: trace })
}
