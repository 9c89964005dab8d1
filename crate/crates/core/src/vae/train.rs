//! Mini-batch Adam training of the autoencoder.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::loss::{batch_loss, AnnealSchedule, LossParts};
use super::network::{Architecture, Network, OutputGradients};
use super::serialize::{augment, serialize, Scaler, SerializedParticle};
use crate::metaball::MetaballModel;
use crate::optim::Adam;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the augmented set; 0 picks enough for twice the warmup.
    pub epochs: usize,
    /// Exact step count, overriding `epochs`.
    pub steps: Option<u64>,
    pub seed: u64,
    pub rotations_per_particle: usize,
    pub shuffles_per_particle: usize,
    pub leaky_slope: f64,
    pub warmup_steps: u64,
    /// Radius the dataset's bounding radius is scaled to before training.
    pub target_radius: f64,
    pub encoder: Vec<usize>,
    pub latent: usize,
    pub decoder: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = Architecture::standard(1);
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 0,
            steps: None,
            seed: 0,
            rotations_per_particle: 5,
            shuffles_per_particle: 50,
            leaky_slope: 0.01,
            warmup_steps: 10_000,
            target_radius: DEFAULT_TARGET_RADIUS,
            encoder: arch.encoder,
            latent: arch.latent,
            decoder: arch.decoder,
        }
    }
}

/// Default for [`TrainConfig::target_radius`]. With the reconstruction
/// averaged over the input width the latent only carries directions whose
/// variance beats half that width; unit-radius data sits far below it.
pub const DEFAULT_TARGET_RADIUS: f64 = 32.0;

impl TrainConfig {
    pub fn architecture(&self, n: usize) -> Architecture {
        Architecture { input: 4 * n, encoder: self.encoder.clone(), latent: self.latent, decoder: self.decoder.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} must be positive")));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate");
        }
        if self.batch_size == 0 {
            return bad("batch size");
        }
        if self.shuffles_per_particle == 0 {
            return bad("shuffles per particle");
        }
        if self.warmup_steps == 0 {
            return bad("warmup");
        }
        if !(self.target_radius > 0.0) || !self.target_radius.is_finite() {
            return bad("target radius");
        }
        if self.steps == Some(0) {
            return bad("step count");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub beta: f64,
    pub reconstruction: f64,
    pub distribution: f64,
}

pub const LOG_HEADER: &str = "step,beta,reconstruction,distribution";

pub fn log_csv(log: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in log {
        out.push_str(&format!("{},{:?},{:?},{:?}\n", r.step, r.beta, r.reconstruction, r.distribution));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    pub scaler: Scaler,
    pub n: usize,
    /// Loss of every step, measured before that step's update.
    pub log: Vec<LogRow>,
    /// Training stopped at a non-finite loss; `network` holds the last
    /// finite parameters.
    pub diverged: bool,
}

/// Batch-mean loss for inputs `x` (rows are samples) and noise `epsilon`,
/// with its gradient over every network parameter.
pub fn loss_and_gradient(network: &Network, x: &[f64], epsilon: &[f64], beta: f64) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; network.params.len()];
    let parts = loss_and_gradient_into(network, x, epsilon, beta, &mut grad)?;
    Ok((parts, grad))
}

/// [`loss_and_gradient`] writing into a reused buffer of the parameter
/// length.
pub fn loss_and_gradient_into(network: &Network, x: &[f64], epsilon: &[f64], beta: f64, grad: &mut [f64]) -> Result<LossParts> {
    let pass = network.forward(x, epsilon)?;
    let loss = batch_loss(x, &pass.output, &pass.mu, &pass.log_var, pass.batch, beta);
    network.backward_into(
        x,
        epsilon,
        &pass,
        OutputGradients { output: &loss.d_output, mu: &loss.d_mu, log_var: &loss.d_log_var },
        grad,
    );
    Ok(loss.parts)
}

/// Serializes, augments and trains on `models`, which must all have the
/// same number of control points.
pub fn train(models: &[MetaballModel], config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let first = models.first().ok_or_else(|| Error::InvalidParameter("empty training set".into()))?;
    let n = first.len();
    let scaler = Scaler::fit(models, config.target_radius)?;
    let serialized = models.iter().map(|m| serialize(m, &scaler, n)).collect::<Result<Vec<_>>>()?;
    let data = augment(&serialized, config.rotations_per_particle, config.shuffles_per_particle, config.seed)?;
    train_serialized(&data, scaler, config)
}

/// Trains on an already serialized (and augmented) set.
pub fn train_serialized(data: &[SerializedParticle], scaler: Scaler, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let d = data.first().ok_or_else(|| Error::InvalidParameter("empty training set".into()))?.values.len();
    if d == 0 || d % 4 != 0 {
        return Err(Error::Format(format!("serialized length {d} is not a positive multiple of 4")));
    }
    if let Some(p) = data.iter().find(|p| p.values.len() != d) {
        return Err(Error::ShapeMismatch { expected: d, found: p.values.len() });
    }
    let n = d / 4;
    let mut network = Network::glorot(config.architecture(n), config.leaky_slope, config.seed)?;
    network.clear_heads();
    let schedule = AnnealSchedule::new(config.warmup_steps)?;
    let per_epoch = data.len().div_ceil(config.batch_size) as u64;
    let total = config.steps.unwrap_or_else(|| {
        let epochs = if config.epochs > 0 { config.epochs as u64 } else { (2 * config.warmup_steps).div_ceil(per_epoch).max(1) };
        epochs * per_epoch
    });

    let mut adam = Adam::with_defaults(network.params.len(), config.learning_rate);
    let mut order_rng = rng::stream(config.seed, rng::TRAIN);
    let mut eps_rng = rng::stream(config.seed, rng::EPSILON);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let latent = config.latent;
    let mut log = Vec::with_capacity(total as usize);
    let mut x = Vec::with_capacity(config.batch_size * d);
    let mut diverged = false;
    let mut grad = vec![0.0; network.params.len()];

    for step in 0..total {
        let within = (step % per_epoch) as usize;
        if within == 0 {
            order.shuffle(&mut order_rng);
        }
        let batch_idx = &order[within * config.batch_size..((within + 1) * config.batch_size).min(data.len())];
        let batch = batch_idx.len();
        x.clear();
        for &i in batch_idx {
            x.extend_from_slice(&data[i].values);
        }
        let eps: Vec<f64> = (0..batch * latent).map(|_| StandardNormal.sample(&mut eps_rng)).collect();

        let beta = schedule.weight(step);
        let parts = loss_and_gradient_into(&network, &x, &eps, beta, &mut grad)?;
        if !parts.total.is_finite() {
            diverged = true;
            break;
        }
        log.push(LogRow { step, beta, reconstruction: parts.reconstruction, distribution: parts.distribution });
        if grad.iter().any(|g| !g.is_finite()) {
            diverged = true;
            break;
        }
        adam.update(&mut network.params, &grad);
    }
    if !diverged {
        let (shift, scale) = latent_moments(&network, data)?;
        network.reparameterize_latent(&shift, &scale)?;
    }
    Ok(Trained { network, scaler, n, log, diverged })
}

/// Mean and root second moment about it of every latent coordinate under
/// the encoder's posterior, pooled over `data`.
///
/// Rescaling each coordinate by these moments leaves every reconstruction
/// unchanged and can only lower the distribution item, since
/// `(s² + m² - 1) / 2 - ln s >= 0`. It also puts the pooled posterior where
/// the generator samples from.
pub fn latent_moments(network: &Network, data: &[SerializedParticle]) -> Result<(Vec<f64>, Vec<f64>)> {
    let latent = network.latent_dim();
    let mut mus = Vec::with_capacity(data.len() * latent);
    let mut vars = Vec::with_capacity(data.len() * latent);
    let mut x = Vec::new();
    for chunk in data.chunks(256) {
        x.clear();
        chunk.iter().for_each(|p| x.extend_from_slice(&p.values));
        let (mu, log_var) = network.encode_batch(&x)?;
        mus.extend(mu);
        vars.extend(log_var.iter().map(|lv| lv.exp()));
    }
    let count = data.len() as f64;
    let mut shift = vec![0.0; latent];
    for row in mus.chunks_exact(latent) {
        shift.iter_mut().zip(row).for_each(|(s, m)| *s += m);
    }
    shift.iter_mut().for_each(|s| *s /= count);
    let mut second = vec![0.0; latent];
    for (row, var) in mus.chunks_exact(latent).zip(vars.chunks_exact(latent)) {
        for j in 0..latent {
            second[j] += (row[j] - shift[j]).powi(2) + var[j];
        }
    }
    let scale = second.iter().map(|v| (v / count).sqrt()).collect();
    Ok((shift, scale))
}
