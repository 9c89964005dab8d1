//! Reconstruction plus weighted KL divergence, and the weight schedule.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub distribution: f64,
}

/// Loss of one sample: `(1/d)·Σ(x − x̂)²` plus `beta` times
/// `½·Σ(μ² + σ² − ln σ² − 1)`.
pub fn vae_loss(x: &[f64], x_hat: &[f64], mu: &[f64], sigma: &[f64], beta: f64) -> Result<LossParts> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::ShapeMismatch { expected: x.len(), found: x_hat.len() });
    }
    if mu.len() != sigma.len() {
        return Err(Error::ShapeMismatch { expected: mu.len(), found: sigma.len() });
    }
    if x.iter().chain(x_hat).chain(mu).chain(sigma).any(|v| !v.is_finite()) || !beta.is_finite() {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    let log_var: Vec<f64> = sigma.iter().map(|s| (s * s).ln()).collect();
    let reconstruction = reconstruction_item(x, x_hat);
    let distribution = distribution_item(mu, &log_var);
    Ok(LossParts { total: reconstruction + beta * distribution, reconstruction, distribution })
}

pub(crate) fn reconstruction_item(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

pub(crate) fn distribution_item(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu.iter().zip(log_var).map(|(m, lv)| m * m + lv.exp() - lv - 1.0).sum::<f64>()
}

/// Batch-mean loss and its gradients at the decoder output and at the two
/// heads. Rows of `x`, `x_hat`, `mu` and `log_var` are samples.
pub(crate) struct BatchLoss {
    pub parts: LossParts,
    pub d_output: Vec<f64>,
    pub d_mu: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

pub(crate) fn batch_loss(x: &[f64], x_hat: &[f64], mu: &[f64], log_var: &[f64], batch: usize, beta: f64) -> BatchLoss {
    let d = x.len() / batch;
    let latent = mu.len() / batch;
    let inv_b = 1.0 / batch as f64;
    let (mut rec, mut kl) = (0.0, 0.0);
    for b in 0..batch {
        rec += reconstruction_item(&x[b * d..(b + 1) * d], &x_hat[b * d..(b + 1) * d]);
        kl += distribution_item(&mu[b * latent..(b + 1) * latent], &log_var[b * latent..(b + 1) * latent]);
    }
    let (rec, kl) = (rec * inv_b, kl * inv_b);
    let scale = 2.0 * inv_b / d as f64;
    BatchLoss {
        parts: LossParts { total: rec + beta * kl, reconstruction: rec, distribution: kl },
        d_output: x_hat.iter().zip(x).map(|(h, t)| scale * (h - t)).collect(),
        d_mu: mu.iter().map(|m| beta * inv_b * m).collect(),
        d_log_var: log_var.iter().map(|lv| beta * inv_b * 0.5 * (lv.exp() - 1.0)).collect(),
    }
}

/// Linear ramp of the KL weight from 0 to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealSchedule {
    pub warmup_steps: u64,
}

impl AnnealSchedule {
    pub fn new(warmup_steps: u64) -> Result<Self> {
        if warmup_steps == 0 {
            return Err(Error::InvalidParameter("warmup must be at least one step".into()));
        }
        Ok(Self { warmup_steps })
    }

    pub fn weight(&self, step: u64) -> f64 {
        anneal_weight(step, self)
    }
}

pub fn anneal_weight(step: u64, schedule: &AnnealSchedule) -> f64 {
    (step as f64 / schedule.warmup_steps as f64).min(1.0)
}
