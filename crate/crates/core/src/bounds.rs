//! Expected ℓ1 perturbation of a model after `T` noisy rounds of an
//! `m`-coordinate update.
//!
//! The trusted forms are `mTσ√(2/π)` (Gaussian), `mTb` (Laplace) and
//! `mT·E|X|` by exact band summation (Staircase). The literal published
//! Staircase expression is available for comparison.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::mechanisms::{self, MechanismKind, MechanismParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub mechanism: MechanismParams,
    /// Number of perturbed coordinates `m`.
    pub loss_length: usize,
    pub rounds: usize,
}

impl BoundQuery {
    pub fn new(mechanism: MechanismParams, loss_length: usize, rounds: usize) -> Result<Self> {
        mechanism.validate()?;
        if loss_length == 0 {
            return Err(invalid("loss_length", "must be >= 1"));
        }
        if rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        Ok(Self {
            mechanism,
            loss_length,
            rounds,
        })
    }

    fn m_t(&self) -> f64 {
        self.loss_length as f64 * self.rounds as f64
    }

    fn expect(&self, kind: MechanismKind) -> Result<()> {
        if self.mechanism.kind != kind {
            return Err(Error::MechanismMismatch {
                expected: kind.name(),
                found: self.mechanism.kind.name(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    AsPublished,
    #[default]
    Numeric,
}

/// `mTσ√(2/π)`.
pub fn l1_bound_gaussian(q: &BoundQuery) -> Result<f64> {
    q.expect(MechanismKind::Gaussian)?;
    Ok(q.m_t() * q.mechanism.scale * (2.0 / std::f64::consts::PI).sqrt())
}

/// `mTb`.
pub fn l1_bound_laplace(q: &BoundQuery) -> Result<f64> {
    q.expect(MechanismKind::Laplace)?;
    Ok(q.m_t() * q.mechanism.scale)
}

pub fn l1_bound_staircase(q: &BoundQuery, mode: BoundMode) -> Result<f64> {
    q.expect(MechanismKind::Staircase)?;
    let p = &q.mechanism;
    match mode {
        BoundMode::Numeric => Ok(q.m_t() * mechanisms::expected_abs_noise(p)?),
        BoundMode::AsPublished => {
            let (d, lam) = (p.sensitivity, p.scale);
            let nu = p.nu.unwrap_or(0.5);
            let r = (-lam).exp();
            let bracket = nu * nu * d * d + r * d * d - r * nu * nu * d * d + d * r;
            Ok(q.m_t() / (1.0 - r) * bracket)
        }
    }
}

/// Trusted bound for any mechanism.
pub fn l1_bound(q: &BoundQuery) -> Result<f64> {
    match q.mechanism.kind {
        MechanismKind::Gaussian => l1_bound_gaussian(q),
        MechanismKind::Laplace => l1_bound_laplace(q),
        MechanismKind::Staircase => l1_bound_staircase(q, BoundMode::Numeric),
    }
}

/// Amplitude-minimizing inner fraction `ν* = 1/(1+e^{λ/2})` and the
/// resulting `E|X|/Δ = e^{λ/2}/(e^λ - 1)`.
pub fn optimal_nu(lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda must be finite and > 0, got {lambda}"
        )));
    }
    let half = (lambda / 2.0).exp();
    Ok((
        mechanisms::staircase_optimal_nu(lambda),
        half / lambda.exp_m1(),
    ))
}

/// Bound summary printed by the `bounds` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub mechanism: MechanismKind,
    pub sensitivity: f64,
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub loss_length: usize,
    pub rounds: usize,
    pub l1_bound: f64,
    /// Literal published Staircase value and its gap to the numeric one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub as_published: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub as_published_gap: Option<f64>,
}

pub fn report(q: &BoundQuery) -> Result<BoundReport> {
    let l1 = l1_bound(q)?;
    let published = match q.mechanism.kind {
        MechanismKind::Staircase => Some(l1_bound_staircase(q, BoundMode::AsPublished)?),
        _ => None,
    };
    Ok(BoundReport {
        mechanism: q.mechanism.kind,
        sensitivity: q.mechanism.sensitivity,
        scale: q.mechanism.scale,
        nu: q.mechanism.nu,
        loss_length: q.loss_length,
        rounds: q.rounds,
        l1_bound: l1,
        as_published: published,
        as_published_gap: published.map(|p| p - l1),
    })
}
