//! Exact-inference oracle: the 1-D Gaussian-mean model.
//!
//! `theta ~ N(mu0, v0)`, each observation `~ N(theta, noise_var)`. Posteriors are
//! exactly Gaussian, so the closed-form PMI is exact here and the true mutual
//! information of a dataset pair is known analytically.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{conjugate_mean_fit, GaussianDist};

#[derive(Debug, Clone)]
pub struct ConjugateModel {
    prior: GaussianDist,
    noise_var: f64,
}

impl ConjugateModel {
    pub fn new(prior_mean: f64, prior_var: f64, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
        }
        Ok(Self { prior: GaussianDist::univariate(prior_mean, prior_var)?, noise_var })
    }

    /// Model whose size-`n` dataset pairs carry exactly `target_bits` of mutual information.
    pub fn for_target_bits(target_bits: f64, n: usize, prior_var: f64) -> Result<Self> {
        if !(target_bits > 0.0 && target_bits.is_finite()) || n == 0 {
            return Err(Error::InvalidArgument(format!("need target_bits > 0 and n >= 1, got {target_bits}, {n}")));
        }
        // I = -½ ln(1 - r²) with r = v0 / (v0 + noise/n)
        let r = (1.0 - (-2.0 * target_bits * std::f64::consts::LN_2).exp()).sqrt();
        let noise_var = n as f64 * prior_var * (1.0 / r - 1.0);
        Self::new(0.0, prior_var, noise_var)
    }

    pub fn prior(&self) -> &GaussianDist {
        &self.prior
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn posterior(&self, samples: &[f64]) -> Result<GaussianDist> {
        conjugate_mean_fit(samples, self.noise_var, &self.prior)
    }

    /// `log p(samples | theta)`.
    pub fn log_likelihood(&self, samples: &[f64], theta: f64) -> f64 {
        let c = -0.5 * (2.0 * std::f64::consts::PI * self.noise_var).ln();
        samples.iter().map(|s| c - 0.5 * (s - theta).powi(2) / self.noise_var).sum()
    }

    /// Draws a shared `theta` from the prior, then `n_d` and `n_t` observations.
    pub fn sample_pair<R: Rng + ?Sized>(&self, n_d: usize, n_t: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let theta = self.prior.mean()[0] + rng.sample::<f64, _>(StandardNormal) / self.prior.precision()[(0, 0)].sqrt();
        let sd = self.noise_var.sqrt();
        let mut draw = |n: usize| (0..n).map(|_| theta + sd * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
        let d = draw(n_d);
        let t = draw(n_t);
        (d, t)
    }

    /// Exact `I(D; T)` in nats for dataset sizes `n_d`, `n_t`.
    pub fn mutual_information(&self, n_d: usize, n_t: usize) -> f64 {
        if n_d == 0 || n_t == 0 {
            return 0.0;
        }
        let v0 = 1.0 / self.prior.precision()[(0, 0)];
        let var_d = v0 + self.noise_var / n_d as f64;
        let var_t = v0 + self.noise_var / n_t as f64;
        let r2 = v0 * v0 / (var_d * var_t);
        -0.5 * (1.0 - r2).ln()
    }
}
