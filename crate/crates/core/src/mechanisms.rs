//! Additive noise mechanisms: Gaussian, Laplace and Staircase.
//!
//! Each mechanism is described by a [`MechanismParams`] value and exposes its
//! density, a sampler, the exact Rényi divergence between the noise density
//! and its copy shifted by the sensitivity, its pure-DP level (if any) and the
//! expected noise amplitude `E|X|`.
//!
//! The Staircase density with band width `Δ`, decay `λ` and inner fraction
//! `ν` is piecewise constant:
//!
//! ```text
//! f(x) = y·e^{-ρλ}      for |x| ∈ [ρΔ, (ρ+ν)Δ)
//! f(x) = y·e^{-(ρ+1)λ}  for |x| ∈ [(ρ+ν)Δ, (ρ+1)Δ)
//! y    = (1 - e^{-λ}) / (2Δ(ν + e^{-λ}(1-ν)))
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par::{self, Execution};
use crate::rng::{NoiseStream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Gaussian,
    Laplace,
    Staircase,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 3] = [
        MechanismKind::Gaussian,
        MechanismKind::Laplace,
        MechanismKind::Staircase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::Laplace => "laplace",
            MechanismKind::Staircase => "staircase",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(MechanismKind::Gaussian),
            "laplace" => Ok(MechanismKind::Laplace),
            "staircase" => Ok(MechanismKind::Staircase),
            other => Err(invalid("mechanism", format!("unknown mechanism `{other}`"))),
        }
    }
}

/// One noise mechanism instance.
///
/// `scale` is σ (Gaussian), b (Laplace) or the per-application pure-DP level
/// λ (Staircase). `nu` is only meaningful for the Staircase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub kind: MechanismKind,
    pub sensitivity: f64,
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu: Option<f64>,
}

impl MechanismParams {
    pub fn gaussian(sensitivity: f64, sigma: f64) -> Result<Self> {
        Self::new(MechanismKind::Gaussian, sensitivity, sigma, None)
    }

    pub fn laplace(sensitivity: f64, b: f64) -> Result<Self> {
        Self::new(MechanismKind::Laplace, sensitivity, b, None)
    }

    pub fn staircase(sensitivity: f64, lambda: f64, nu: f64) -> Result<Self> {
        Self::new(MechanismKind::Staircase, sensitivity, lambda, Some(nu))
    }

    /// Staircase with the amplitude-minimizing inner fraction for `lambda`.
    pub fn staircase_optimal(sensitivity: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("scale", "staircase lambda must be > 0"));
        }
        Self::staircase(sensitivity, lambda, staircase_optimal_nu(lambda))
    }

    pub fn new(kind: MechanismKind, sensitivity: f64, scale: f64, nu: Option<f64>) -> Result<Self> {
        let p = Self {
            kind,
            sensitivity,
            scale,
            nu: match kind {
                MechanismKind::Staircase => nu,
                _ => None,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return Err(invalid(
                "sensitivity",
                format!("must be finite and > 0, got {}", self.sensitivity),
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(invalid(
                "scale",
                format!("must be finite and > 0, got {}", self.scale),
            ));
        }
        if self.kind == MechanismKind::Staircase {
            match self.nu {
                Some(nu) if nu > 0.0 && nu < 1.0 => {}
                Some(nu) => return Err(invalid("nu", format!("must lie in (0, 1), got {nu}"))),
                None => return Err(invalid("nu", "staircase requires nu")),
            }
        }
        Ok(())
    }

    fn nu_or_half(&self) -> f64 {
        self.nu.unwrap_or(0.5)
    }

    /// Staircase normalizer `y`.
    fn staircase_y(&self) -> f64 {
        let (d, lam, nu) = (self.sensitivity, self.scale, self.nu_or_half());
        let r = (-lam).exp();
        -(-lam).exp_m1() / (2.0 * d * (nu + r * (1.0 - nu)))
    }

    fn ln_staircase_y(&self) -> f64 {
        let (d, lam, nu) = (self.sensitivity, self.scale, self.nu_or_half());
        let ln_mass = log_sum_exp(&[nu.ln(), -lam + (-nu).ln_1p()]);
        (-(-lam).exp_m1()).ln() - (2.0 * d).ln() - ln_mass
    }
}

/// `ν* = 1 / (1 + e^{λ/2})`, the inner fraction that minimizes `E|X|`.
///
/// Floored at the smallest positive normal so that `ν > 0` survives
/// underflow for `λ` beyond ~1400, where the noise is negligible anyway.
pub fn staircase_optimal_nu(lambda: f64) -> f64 {
    (1.0 / (1.0 + (lambda / 2.0).exp())).max(f64::MIN_POSITIVE)
}

/// Probability density of the zero-centered noise at `x`.
pub fn density(params: &MechanismParams, x: f64) -> Result<f64> {
    params.validate()?;
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "density evaluated at non-finite x = {x}"
        )));
    }
    Ok(density_unchecked(params, x))
}

pub(crate) fn density_unchecked(params: &MechanismParams, x: f64) -> f64 {
    match params.kind {
        MechanismKind::Gaussian => {
            let s = params.scale;
            (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        }
        MechanismKind::Laplace => {
            let b = params.scale;
            (-x.abs() / b).exp() / (2.0 * b)
        }
        MechanismKind::Staircase => {
            let (d, lam, nu) = (params.sensitivity, params.scale, params.nu_or_half());
            let t = x.abs() / d;
            let band = t.floor();
            let steps = if t - band < nu { band } else { band + 1.0 };
            params.staircase_y() * (-steps * lam).exp()
        }
    }
}

/// One draw from the mechanism's noise distribution.
pub fn sample_noise(params: &MechanismParams, stream: &mut NoiseStream) -> Result<f64> {
    params.validate()?;
    Ok(sample_unchecked(params, stream))
}

pub(crate) fn sample_unchecked(params: &MechanismParams, stream: &mut NoiseStream) -> f64 {
    match params.kind {
        MechanismKind::Gaussian => {
            let z: f64 = stream.sample(StandardNormal);
            params.scale * z
        }
        MechanismKind::Laplace => {
            let e: f64 = stream.sample(Exp1);
            let sign = if stream.random::<bool>() { 1.0 } else { -1.0 };
            sign * params.scale * e
        }
        MechanismKind::Staircase => {
            let (d, lam, nu) = (params.sensitivity, params.scale, params.nu_or_half());
            let sign = if stream.random::<bool>() { 1.0 } else { -1.0 };
            // P(band = i) = (1 - e^{-λ}) e^{-iλ}
            let band = (-stream.open01().ln() / lam).floor();
            let r = (-lam).exp();
            let p_inner = nu / (nu + r * (1.0 - nu));
            let u = stream.open01();
            let offset = if stream.open01() < p_inner {
                nu * u
            } else {
                nu + (1.0 - nu) * u
            };
            sign * (band + offset) * d
        }
    }
}

/// Adds one independent noise draw to every coordinate of `values`.
pub fn add_noise(
    params: &MechanismParams,
    values: &mut [f64],
    stream: &mut NoiseStream,
) -> Result<()> {
    params.validate()?;
    for v in values {
        *v += sample_unchecked(params, stream);
    }
    Ok(())
}

/// Draws `n` samples split into fixed chunks, each with its own sub-stream,
/// so the output is identical under sequential and parallel execution.
pub fn sample_many(
    params: &MechanismParams,
    key: StreamKey,
    n: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    params.validate()?;
    const CHUNK: usize = 16_384;
    let chunks = n.div_ceil(CHUNK);
    let parts = par::map_range(exec, chunks, |c| {
        let mut stream = NoiseStream::new(key.child(c as u64));
        let len = CHUNK.min(n - c * CHUNK);
        (0..len)
            .map(|_| sample_unchecked(params, &mut stream))
            .collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

/// Rényi divergence `D_α(P ‖ Q)` where `P` is the noise density and `Q` the
/// same density shifted by the sensitivity.
pub fn rdp(params: &MechanismParams, alpha: f64) -> Result<f64> {
    params.validate()?;
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "Rényi order must be finite and > 1, got {alpha}"
        )));
    }
    let d = params.sensitivity;
    let gamma = match params.kind {
        MechanismKind::Gaussian => alpha * d * d / (2.0 * params.scale * params.scale),
        MechanismKind::Laplace => laplace_rdp(d / params.scale, alpha),
        MechanismKind::Staircase => staircase_rdp(params, alpha),
    };
    Ok(gamma.max(0.0))
}

fn laplace_rdp(u: f64, alpha: f64) -> f64 {
    let a = alpha / (2.0 * alpha - 1.0);
    let b = (alpha - 1.0) / (2.0 * alpha - 1.0);
    if u * alpha < 1.0 {
        // excess over 1 computed directly to keep precision for small u
        let excess = a * (u * (alpha - 1.0)).exp_m1() + b * (-u * alpha).exp_m1();
        excess.ln_1p() / (alpha - 1.0)
    } else {
        log_sum_exp(&[a.ln() + u * (alpha - 1.0), b.ln() - u * alpha]) / (alpha - 1.0)
    }
}

fn staircase_rdp(params: &MechanismParams, alpha: f64) -> f64 {
    let (d, lam, nu) = (params.sensitivity, params.scale, params.nu_or_half());
    let half = 0.5f64.ln();
    // x < 0: Q = e^{-λ}P, integrates to ½e^{(α-1)λ}; x > Δ: Q = e^{λ}P, gives ½e^{-αλ}
    let mut terms = vec![half + (alpha - 1.0) * lam, half - alpha * lam];

    // [0, Δ]: both densities are piecewise constant with breaks at νΔ and (1-ν)Δ
    let ln_y = params.ln_staircase_y();
    let mut cuts = [0.0, nu, 1.0 - nu, 1.0];
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let steps_p = if mid < nu { 0.0 } else { 1.0 };
        let steps_q = if 1.0 - mid < nu { 0.0 } else { 1.0 };
        terms.push((width * d).ln() + ln_y - lam * (alpha * steps_p + (1.0 - alpha) * steps_q));
    }
    log_sum_exp(&terms) / (alpha - 1.0)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Pure-DP level of one application: λ (Staircase), Δ/b (Laplace), `None`
/// for the Gaussian, which has no finite pure-DP guarantee.
pub fn pure_dp_epsilon(params: &MechanismParams) -> Option<f64> {
    match params.kind {
        MechanismKind::Gaussian => None,
        MechanismKind::Laplace => Some(params.sensitivity / params.scale),
        MechanismKind::Staircase => Some(params.scale),
    }
}

/// Expected noise amplitude `E|X|`.
///
/// For the Staircase the per-band first moments are summed as geometric
/// series, which is exact for any `ν`.
pub fn expected_abs_noise(params: &MechanismParams) -> Result<f64> {
    params.validate()?;
    Ok(match params.kind {
        MechanismKind::Gaussian => params.scale * (2.0 / std::f64::consts::PI).sqrt(),
        MechanismKind::Laplace => params.scale,
        MechanismKind::Staircase => {
            let (d, lam, nu) = (params.sensitivity, params.scale, params.nu_or_half());
            let r = (-lam).exp();
            let one_minus_r = -(-lam).exp_m1();
            let s0 = 1.0 / one_minus_r;
            let s1 = r / (one_minus_r * one_minus_r);
            let y = params.staircase_y();
            // band ρ, inner: ∫ x dx over [ρΔ, (ρ+ν)Δ) = Δ²(ρν + ν²/2)
            let inner = nu * s1 + 0.5 * nu * nu * s0;
            // band ρ, outer: Δ²(1-ν)(2ρ + 1 + ν)/2, one extra factor e^{-λ}
            let outer = r * (1.0 - nu) * (2.0 * s1 + (1.0 + nu) * s0) / 2.0;
            2.0 * y * d * d * (inner + outer)
        }
    })
}

/// Literal published expressions, kept for comparison reporting only. These
/// carry known typos and must not be used for accounting.
pub mod as_published {
    use super::*;

    /// Staircase normalizer with numerator `1 - e^{-1}` instead of
    /// `1 - e^{-λ}`.
    pub fn staircase_normalizer(sensitivity: f64, lambda: f64, nu: f64) -> f64 {
        (1.0 - (-1.0f64).exp()) / (2.0 * sensitivity * (nu + (-lambda).exp() * (1.0 - nu)))
    }

    /// Staircase density using [`staircase_normalizer`].
    pub fn staircase_density(params: &MechanismParams, x: f64) -> Result<f64> {
        params.validate()?;
        if params.kind != MechanismKind::Staircase {
            return Err(Error::MechanismMismatch {
                expected: "staircase",
                found: params.kind.name(),
            });
        }
        let correct = density(params, x)?;
        let nu = params.nu_or_half();
        Ok(correct / params.staircase_y()
            * staircase_normalizer(params.sensitivity, params.scale, nu))
    }

    /// Closed-form Staircase Rényi expression as printed, evaluated verbatim
    /// (no logarithm, no `1/(α-1)`, `sgn(½-ν)` read as 0 for ν < ½ else 1).
    pub fn staircase_rdp(lambda: f64, nu: f64, alpha: f64) -> f64 {
        let up = ((alpha - 1.0) * lambda).exp();
        let down = (-alpha * lambda).exp();
        let sgn = if nu < 0.5 { 0.0 } else { 1.0 };
        0.5 * up
            + 0.5 * down
            + ((up + down) * (1.0 - nu) + (2.0 * nu - 1.0).abs() * (-sgn * lambda).exp())
                * (1.0 - (-1.0f64).exp())
                / (2.0 * (nu + (-lambda).exp() * (1.0 - nu)))
    }

    /// Gaussian Rényi divergence as printed: `αΔ/(2σ²)` (Δ not squared).
    pub fn gaussian_rdp(sensitivity: f64, sigma: f64, alpha: f64) -> f64 {
        alpha * sensitivity / (2.0 * sigma * sigma)
    }
}
