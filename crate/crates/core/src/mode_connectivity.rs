//! Low-loss curves between model pairs and curve-based model merging.
//!
//! Two single-bend curves are supported:
//!
//! ```text
//! polygonal  φ(p) = 2(pθ + (0.5 - p)w₁)          p ≤ 0.5
//!            φ(p) = 2((p - 0.5)w₂ + (1 - p)θ)    p > 0.5
//! bezier     φ(p) = (1-p)²w₁ + 2p(1-p)θ + p²w₂
//! ```
//!
//! Training the bend θ minimizes `E_{p~U(0,1)} ℓ(φ_θ(p))` by stochastic
//! gradient steps; the endpoints never move.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fl::model::{ModelVector, Objective};
use crate::par::{self, Execution};
use crate::rng::{NoiseStream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    #[default]
    PolygonalChain,
    QuadraticBezier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub w1: ModelVector,
    pub w2: ModelVector,
    pub theta: ModelVector,
}

impl CurveSpec {
    pub fn new(
        kind: CurveKind,
        w1: ModelVector,
        w2: ModelVector,
        theta: ModelVector,
    ) -> Result<Self> {
        w2.check_dim(w1.dim())?;
        theta.check_dim(w1.dim())?;
        Ok(Self {
            kind,
            w1,
            w2,
            theta,
        })
    }

    /// Bend initialized at the midpoint `0.5(w₁ + w₂)`.
    pub fn midpoint(kind: CurveKind, w1: ModelVector, w2: ModelVector) -> Result<Self> {
        let theta = ModelVector::combine(&[(0.5, &w1), (0.5, &w2)])?;
        Self::new(kind, w1, w2, theta)
    }

    /// Coefficients `(c₁, c_θ, c₂)` of `φ(p) = c₁w₁ + c_θθ + c₂w₂`.
    fn coefficients(&self, p: f64) -> (f64, f64, f64) {
        match self.kind {
            CurveKind::PolygonalChain if p <= 0.5 => (2.0 * (0.5 - p), 2.0 * p, 0.0),
            CurveKind::PolygonalChain => (0.0, 2.0 * (1.0 - p), 2.0 * (p - 0.5)),
            CurveKind::QuadraticBezier => ((1.0 - p) * (1.0 - p), 2.0 * p * (1.0 - p), p * p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveTrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for CurveTrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.01,
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "curve parameter must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Point on the curve at parameter `p`. The endpoints are returned exactly.
pub fn curve_point(spec: &CurveSpec, p: f64) -> Result<ModelVector> {
    check_p(p)?;
    if p == 0.0 {
        return Ok(spec.w1.clone());
    }
    if p == 1.0 {
        return Ok(spec.w2.clone());
    }
    let (a, b, c) = spec.coefficients(p);
    ModelVector::combine(&[(a, &spec.w1), (b, &spec.theta), (c, &spec.w2)])
}

/// `∂φ(p)/∂θ`, a scalar multiple of the identity.
pub fn bend_gradient_factor(kind: CurveKind, p: f64) -> f64 {
    match kind {
        CurveKind::PolygonalChain if p <= 0.5 => 2.0 * p,
        CurveKind::PolygonalChain => 2.0 * (1.0 - p),
        CurveKind::QuadraticBezier => 2.0 * p * (1.0 - p),
    }
}

/// Trains the bend by `cfg.steps` stochastic steps; returns the trained θ.
pub fn train_curve<O: Objective + ?Sized>(
    spec: &CurveSpec,
    cfg: &CurveTrainConfig,
    objective: &O,
    stream: &mut NoiseStream,
) -> Result<ModelVector> {
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(invalid("curve_learning_rate", "must be finite and >= 0"));
    }
    let mut spec = spec.clone();
    for _ in 0..cfg.steps {
        let p: f64 = stream.random();
        let point = curve_point(&spec, p)?;
        let grad = objective.gradient(&point);
        grad.check_dim(spec.theta.dim())?;
        spec.theta.axpy(
            -cfg.learning_rate * bend_gradient_factor(spec.kind, p),
            &grad,
        );
    }
    if !spec.theta.is_finite() {
        return Err(Error::Domain("curve training diverged".into()));
    }
    Ok(spec.theta)
}

/// Monte-Carlo estimate of `E_p ℓ(φ_θ(p))`.
pub fn expected_curve_loss<O: Objective + ?Sized>(
    spec: &CurveSpec,
    objective: &O,
    samples: usize,
    stream: &mut NoiseStream,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..samples {
        let p: f64 = stream.random();
        total += objective.value(&curve_point(spec, p)?);
    }
    Ok(total / samples.max(1) as f64)
}

/// Closed-form bend `1.2/L + 1.1·w̄ - 0.1·v̄`, with `1.2/L` added to every
/// coordinate.
pub fn theta_star(lipschitz: f64, w_bar: &ModelVector, v_bar: &ModelVector) -> Result<ModelVector> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Domain(format!(
            "smoothness constant must be > 0, got {lipschitz}"
        )));
    }
    v_bar.check_dim(w_bar.dim())?;
    let shift = 1.2 / lipschitz;
    Ok(ModelVector(
        w_bar
            .iter()
            .zip(v_bar.iter())
            .map(|(w, v)| shift + 1.1 * w - 0.1 * v)
            .collect(),
    ))
}

/// `(1-r)²v + 2(r-r²)θ + r²w`.
pub fn bezier_fedavg_update(
    v: &ModelVector,
    theta: &ModelVector,
    w: &ModelVector,
    r: f64,
) -> Result<ModelVector> {
    check_p(r)?;
    ModelVector::combine(&[
        ((1.0 - r) * (1.0 - r), v),
        (2.0 * (r - r * r), theta),
        (r * r, w),
    ])
}

/// Merges models pairwise until one survives. Adjacent pairs are formed in
/// the given order (an odd leftover carries to the next level); each pair is
/// replaced by its trained bend. Pairs within a level run independently.
pub fn mode_connect_aggregate<O: Objective + ?Sized>(
    models: &[ModelVector],
    kind: CurveKind,
    cfg: &CurveTrainConfig,
    objective: &O,
    key: StreamKey,
    exec: Execution,
) -> Result<ModelVector> {
    let first = models
        .first()
        .ok_or_else(|| invalid("models", "need at least one model"))?;
    for m in models {
        m.check_dim(first.dim())?;
    }
    let mut level: Vec<ModelVector> = models.to_vec();
    let mut depth = 0u64;
    while level.len() > 1 {
        let pairs: Vec<(&ModelVector, &ModelVector)> =
            level.chunks_exact(2).map(|c| (&c[0], &c[1])).collect();
        let level_key = key.child(depth);
        let merged = par::map_range(exec, pairs.len(), |i| -> Result<ModelVector> {
            let (a, b) = pairs[i];
            let spec = CurveSpec::midpoint(kind, a.clone(), b.clone())?;
            let mut stream = NoiseStream::new(level_key.child(i as u64));
            train_curve(&spec, cfg, objective, &mut stream)
        });
        let mut next = merged.into_iter().collect::<Result<Vec<_>>>()?;
        if level.len() % 2 == 1 {
            next.push(level.last().cloned().expect("odd level is non-empty"));
        }
        level = next;
        depth += 1;
    }
    Ok(level.pop().expect("one survivor"))
}

/// Extra-rounds quantity `Δ²·e^ε/(e^ε - 1)²` (constant factor 1).
pub fn extra_rounds_bound(sensitivity: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::Domain(format!(
            "sensitivity must be > 0, got {sensitivity}"
        )));
    }
    // e^ε/(e^ε-1)² = e^{-ε}/(1-e^{-ε})², stable for large ε
    let em = (-epsilon).exp();
    let denom = -(-epsilon).exp_m1();
    Ok(sensitivity * sensitivity * em / (denom * denom))
}
