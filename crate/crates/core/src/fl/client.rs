//! Client-side training: per-example clipping, mechanism noise and the
//! heterogeneous-ε penalty.

use std::sync::Arc;

use rand::Rng;

use super::data::DatasetShard;
use super::model::{LossModel, ModelVector};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{self, MechanismParams};
use crate::rng::{NoiseStream, Purpose};

/// One participant's training configuration.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub id: usize,
    pub shard: Arc<DatasetShard>,
    /// Privacy level this client asked for; drives the penalty coefficient.
    pub epsilon: f64,
    /// Calibrated mechanism, or `None` to train without noise.
    pub mechanism: Option<MechanismParams>,
    pub clip: f64,
    pub sample_rate: f64,
    pub local_epochs: usize,
    pub learning_rate: f64,
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be > 0"));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(invalid("clip", "must be finite and > 0"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(invalid("sample_rate", "must lie in (0, 1]"));
        }
        if self.local_epochs == 0 {
            return Err(invalid("local_epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be finite and > 0"));
        }
        if let Some(m) = &self.mechanism {
            m.validate()?;
        }
        Ok(())
    }

    /// Penalty coefficient `λ_k = (ε_max - ε_k) / ε_max`.
    pub fn penalty_coefficient(&self, eps_max: f64) -> Result<f64> {
        if !(eps_max >= self.epsilon) {
            return Err(invalid(
                "eps_max",
                format!("eps_max {eps_max} is below client epsilon {}", self.epsilon),
            ));
        }
        if eps_max.is_infinite() {
            return Ok(if self.epsilon.is_infinite() { 0.0 } else { 1.0 });
        }
        Ok((eps_max - self.epsilon) / eps_max)
    }
}

/// Pull toward the weakest-privacy client's model during local steps.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub w_max: ModelVector,
    pub eps_max: f64,
}

/// Result of [`local_update`].
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub model: ModelVector,
    /// Steps that drew mechanism noise (empty subsamples are skipped).
    pub noisy_steps: usize,
}

/// Scales `g` by `min(1, c/‖g‖)`.
pub fn clip_gradient(g: &ModelVector, c: f64) -> Result<ModelVector> {
    let mut out = g.clone();
    clip_in_place(&mut out, c)?;
    Ok(out)
}

pub(crate) fn clip_in_place(g: &mut [f64], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(invalid("clip", "must be > 0"));
    }
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::Domain("gradient has non-finite entries".into()));
    }
    if norm > c {
        let s = c / norm;
        for v in g.iter_mut() {
            *v *= s;
        }
    }
    Ok(())
}

/// Penalized step `w_k - η(g + λ_k(w_k - w_max))`.
pub fn heterogeneous_update(
    cfg: &ClientConfig,
    w_k: &ModelVector,
    g_clipped: &ModelVector,
    w_max: &ModelVector,
    eps_max: f64,
) -> Result<ModelVector> {
    let lambda = cfg.penalty_coefficient(eps_max)?;
    g_clipped.check_dim(w_k.dim())?;
    w_max.check_dim(w_k.dim())?;
    let eta = cfg.learning_rate;
    Ok(ModelVector(
        w_k.iter()
            .zip(g_clipped.iter())
            .zip(w_max.iter())
            .map(|((w, g), m)| w - eta * (g + lambda * (w - m)))
            .collect(),
    ))
}

/// Runs `local_epochs` noisy clipped SGD steps starting from `global_w`.
///
/// Each step includes every example independently with probability
/// `sample_rate`, clips per-example gradients at `clip`, sums them, adds one
/// mechanism draw per coordinate (sensitivity = `clip`), divides by the
/// subsample size and steps. Draws come from the `(seed, round, id)` sampling
/// and noise sub-streams.
pub fn local_update<M: LossModel + ?Sized>(
    cfg: &ClientConfig,
    global_w: &ModelVector,
    model: &M,
    seed: u64,
    round: u64,
    penalty: Option<&Penalty>,
) -> Result<LocalOutcome> {
    cfg.validate()?;
    global_w.check_dim(model.dim())?;
    if let Some(m) = &cfg.mechanism {
        if (m.sensitivity - cfg.clip).abs() > 1e-12 * cfg.clip {
            return Err(invalid(
                "mechanism",
                "sensitivity must equal the clip bound",
            ));
        }
    }
    let mut sampling = NoiseStream::derive(seed, round, cfg.id as u64, Purpose::Sampling);
    let mut noise = NoiseStream::derive(seed, round, cfg.id as u64, Purpose::Noise);
    let shard = cfg.shard.as_ref();
    let dim = model.dim();
    let mut w = global_w.clone();
    let mut g = vec![0.0; dim];
    let mut sum = ModelVector::zeros(dim);
    let mut batch = Vec::with_capacity(shard.len());
    let mut noisy_steps = 0;

    for _ in 0..cfg.local_epochs {
        batch.clear();
        batch.extend((0..shard.len()).filter(|_| sampling.random::<f64>() < cfg.sample_rate));
        if batch.is_empty() {
            continue;
        }
        sum.fill(0.0);
        for &i in &batch {
            model.example_gradient(&w, shard, i, &mut g);
            clip_in_place(&mut g, cfg.clip)?;
            for (s, v) in sum.iter_mut().zip(&g) {
                *s += v;
            }
        }
        if let Some(m) = &cfg.mechanism {
            mechanisms::add_noise(m, &mut sum, &mut noise)?;
            noisy_steps += 1;
        }
        let n = batch.len() as f64;
        for s in sum.iter_mut() {
            *s /= n;
        }
        match penalty {
            Some(p) => w = heterogeneous_update(cfg, &w, &sum, &p.w_max, p.eps_max)?,
            None => w.axpy(-cfg.learning_rate, &sum),
        }
    }
    if !w.is_finite() {
        return Err(Error::Domain(format!(
            "client {} produced a non-finite model",
            cfg.id
        )));
    }
    Ok(LocalOutcome {
        model: w,
        noisy_steps,
    })
}
