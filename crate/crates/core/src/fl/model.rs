//! Flat parameter vectors and the loss-model contract.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use super::data::DatasetShard;
use crate::error::{Error, Result};

/// Dense real parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector(pub Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: f64, x: &ModelVector) {
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// Linear combination `Σ c_i · v_i`; all vectors must share a dimension.
    pub fn combine(terms: &[(f64, &ModelVector)]) -> Result<Self> {
        let dim = terms.first().map(|(_, v)| v.dim()).unwrap_or(0);
        let mut out = Self::zeros(dim);
        for (c, v) in terms {
            v.check_dim(dim)?;
            out.axpy(*c, v);
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &ModelVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for ModelVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModelVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A trainable model evaluated on a dataset shard.
pub trait LossModel: Sync {
    fn dim(&self) -> usize;

    /// Mean loss over the whole shard.
    fn loss(&self, w: &ModelVector, shard: &DatasetShard) -> f64;

    /// Writes the gradient of example `index`'s loss into `out`.
    fn example_gradient(
        &self,
        w: &ModelVector,
        shard: &DatasetShard,
        index: usize,
        out: &mut [f64],
    );

    fn accuracy(&self, w: &ModelVector, shard: &DatasetShard) -> f64;

    /// Mean gradient over `indices`.
    fn gradient(&self, w: &ModelVector, shard: &DatasetShard, indices: &[usize]) -> ModelVector {
        let mut total = ModelVector::zeros(self.dim());
        let mut g = vec![0.0; self.dim()];
        for &i in indices {
            self.example_gradient(w, shard, i, &mut g);
            for (t, v) in total.iter_mut().zip(&g) {
                *t += v;
            }
        }
        if !indices.is_empty() {
            let n = indices.len() as f64;
            for t in total.iter_mut() {
                *t /= n;
            }
        }
        total
    }
}

/// Differentiable scalar function of the parameters, used for curve training.
pub trait Objective: Sync {
    fn value(&self, w: &ModelVector) -> f64;
    fn gradient(&self, w: &ModelVector) -> ModelVector;
}

/// A [`LossModel`] bound to a fixed evaluation shard.
pub struct ShardObjective<'a, M: LossModel> {
    pub model: &'a M,
    pub shard: &'a DatasetShard,
    indices: Vec<usize>,
}

impl<'a, M: LossModel> ShardObjective<'a, M> {
    pub fn new(model: &'a M, shard: &'a DatasetShard) -> Self {
        Self {
            model,
            shard,
            indices: (0..shard.len()).collect(),
        }
    }
}

impl<M: LossModel> Objective for ShardObjective<'_, M> {
    fn value(&self, w: &ModelVector) -> f64 {
        self.model.loss(w, self.shard)
    }

    fn gradient(&self, w: &ModelVector) -> ModelVector {
        self.model.gradient(w, self.shard, &self.indices)
    }
}

/// Multinomial logistic regression with softmax cross-entropy.
///
/// Parameters are laid out as a row-major `classes × features` weight matrix
/// followed by one bias per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticRegression {
    pub n_features: usize,
    pub n_classes: usize,
}

impl LogisticRegression {
    pub fn new(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
        }
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let f = self.n_features;
        let bias = &w[self.n_classes * f..];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w[k * f..(k + 1) * f];
            *o = bias[k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Softmax probabilities in place; returns log-sum-exp of the logits.
    fn softmax(z: &mut [f64]) -> f64 {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in z.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    pub fn predict(&self, w: &ModelVector, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.n_classes];
        self.logits(w, x, &mut z);
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }
}

impl LossModel for LogisticRegression {
    fn dim(&self) -> usize {
        self.n_classes * self.n_features + self.n_classes
    }

    fn loss(&self, w: &ModelVector, shard: &DatasetShard) -> f64 {
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for i in 0..shard.len() {
            self.logits(w, shard.row(i), &mut z);
            let label_logit = z[shard.labels[i]];
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - label_logit;
        }
        total / shard.len().max(1) as f64
    }

    fn example_gradient(
        &self,
        w: &ModelVector,
        shard: &DatasetShard,
        index: usize,
        out: &mut [f64],
    ) {
        let f = self.n_features;
        let x = shard.row(index);
        let mut p = vec![0.0; self.n_classes];
        self.logits(w, x, &mut p);
        Self::softmax(&mut p);
        p[shard.labels[index]] -= 1.0;
        for k in 0..self.n_classes {
            let row = &mut out[k * f..(k + 1) * f];
            for (o, xv) in row.iter_mut().zip(x) {
                *o = p[k] * xv;
            }
            out[self.n_classes * f + k] = p[k];
        }
    }

    fn accuracy(&self, w: &ModelVector, shard: &DatasetShard) -> f64 {
        if shard.is_empty() {
            return 0.0;
        }
        let correct = (0..shard.len())
            .filter(|&i| self.predict(w, shard.row(i)) == shard.labels[i])
            .count();
        correct as f64 / shard.len() as f64
    }
}
