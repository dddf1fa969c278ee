//! Diagonal Gaussian policy heads.

use crate::{Error, Result};

/// `0.5 * ln(2π)`
pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::config(format!(
                "mean has {} entries but std has {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(s) = std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Invariant(format!("standard deviation must be positive and finite, got {s}")));
        }
        Ok(Self { mean, std })
    }

    pub fn from_log_std(mean: Vec<f64>, log_std: &[f64]) -> Result<Self> {
        Self::new(mean, log_std.iter().map(|l| l.exp()).collect())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Log-density of `action` under the diagonal Gaussian `head`.
pub fn gaussian_log_prob(head: &GaussianHead, action: &[f64]) -> Result<f64> {
    if action.len() != head.dim() {
        return Err(Error::config(format!(
            "action has {} entries, head has {}",
            action.len(),
            head.dim()
        )));
    }
    if let Some(s) = head.std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Invariant(format!("standard deviation must be positive, got {s}")));
    }
    Ok(head
        .mean
        .iter()
        .zip(&head.std)
        .zip(action)
        .map(|((mu, sigma), a)| {
            let z = (a - mu) / sigma;
            -0.5 * z * z - sigma.ln() - HALF_LOG_2PI
        })
        .sum())
}

/// `mean + noise * std`, elementwise.
pub fn reparam_sample(head: &GaussianHead, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != head.dim() {
        return Err(Error::config(format!(
            "noise has {} entries, head has {}",
            noise.len(),
            head.dim()
        )));
    }
    Ok(head
        .mean
        .iter()
        .zip(&head.std)
        .zip(noise)
        .map(|((mu, sigma), e)| mu + e * sigma)
        .collect())
}

/// Log-density of one action dimension parameterized by `log_std`, with its
/// partial derivatives `(d/d mean, d/d log_std, d/d action)`.
#[inline]
pub(crate) fn log_prob_with_grads(action: f64, mean: f64, log_std: f64) -> (f64, f64, f64, f64) {
    let inv_var = (-2.0 * log_std).exp();
    let diff = action - mean;
    let lp = -0.5 * diff * diff * inv_var - log_std - HALF_LOG_2PI;
    let d_mean = diff * inv_var;
    let d_log_std = diff * diff * inv_var - 1.0;
    (lp, d_mean, d_log_std, -d_mean)
}
