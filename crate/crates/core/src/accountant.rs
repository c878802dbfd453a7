//! Rényi privacy accounting.
//!
//! Every mechanism's divergence curve is evaluated on a shared [`AlphaGrid`]
//! and summed into an [`RdpLedger`]. The ledger converts to (ε, δ)-DP with
//!
//! ```text
//! ε(δ) = min_α { γ_α + ln(1/δ) / (α - 1) }
//! ```
//!
//! [`calibrate_noise`] bisects a monotone privacy knob (σ, b or 1/λ) for the
//! least noise that keeps `T` compositions within budget.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mechanisms::{self, MechanismKind, MechanismParams};

/// Default knob search bounds and relative bisection tolerance.
pub const KNOB_LOWER: f64 = 1e-4;
pub const KNOB_UPPER: f64 = 1e6;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Strictly increasing Rényi orders, each > 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid(Vec<f64>);

impl AlphaGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("alpha_grid", "must be non-empty"));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a > 1.0)) {
            return Err(invalid("alpha_grid", "every order must be finite and > 1"));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("alpha_grid", "orders must be strictly increasing"));
        }
        Ok(Self(alphas))
    }

    /// Integers `lo..=hi`.
    pub fn integers(lo: u32, hi: u32) -> Result<Self> {
        Self::new((lo..=hi).map(f64::from).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("grid is non-empty")
    }
}

impl Default for AlphaGrid {
    /// `{1.25, 1.5, 1.75} ∪ {2, …, 64}`.
    fn default() -> Self {
        let mut a = vec![1.25, 1.5, 1.75];
        a.extend((2..=64).map(f64::from));
        Self(a)
    }
}

/// Per-order divergence of one mechanism application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve(pub Vec<f64>);

impl RdpCurve {
    pub fn of(params: &MechanismParams, grid: &AlphaGrid) -> Result<Self> {
        grid.as_slice()
            .iter()
            .map(|&a| mechanisms::rdp(params, a))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn zeros(grid: &AlphaGrid) -> Self {
        Self(vec![0.0; grid.len()])
    }

    /// Shuffle-model upper bound evaluated from a per-report pure-DP level.
    /// Non-integer orders get `+∞` so they never win the conversion.
    pub fn shuffled(pure_epsilon: f64, n_clients: u64, grid: &AlphaGrid) -> Result<Self> {
        grid.as_slice()
            .iter()
            .map(|&a| {
                if a.fract() == 0.0 {
                    shuffle_amplify_upper(pure_epsilon, a, n_clients)
                } else {
                    Ok(f64::INFINITY)
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub horizon: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, horizon: usize) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(invalid("epsilon", format!("must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        Ok(Self {
            epsilon,
            delta,
            horizon,
        })
    }
}

/// Accumulated divergence per order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpLedger {
    grid: AlphaGrid,
    gamma: Vec<f64>,
    rounds_composed: usize,
}

/// Outcome of [`RdpLedger::spend`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpendOutcome {
    /// Committed; `remaining` is the ε headroom left after the spend.
    Continue { remaining: f64 },
    /// Would exceed the budget; the ledger is unchanged.
    Halt,
}

impl RdpLedger {
    pub fn new(grid: AlphaGrid) -> Self {
        let gamma = vec![0.0; grid.len()];
        Self {
            grid,
            gamma,
            rounds_composed: 0,
        }
    }

    pub fn grid(&self) -> &AlphaGrid {
        &self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn rounds_composed(&self) -> usize {
        self.rounds_composed
    }

    /// Adds `curve` entrywise.
    pub fn compose(&mut self, curve: &RdpCurve) -> Result<()> {
        if curve.0.len() != self.gamma.len() {
            return Err(Error::GridMismatch {
                expected: self.gamma.len(),
                found: curve.0.len(),
            });
        }
        if curve.0.iter().any(|g| g.is_nan() || *g < 0.0) {
            return Err(invalid("curve", "divergences must be non-negative"));
        }
        for (g, c) in self.gamma.iter_mut().zip(&curve.0) {
            *g += c;
        }
        self.rounds_composed += 1;
        Ok(())
    }

    /// Composes `curve` `times` times by repeated addition, matching what
    /// the same number of [`compose`](Self::compose) calls would produce.
    pub fn compose_n(&mut self, curve: &RdpCurve, times: usize) -> Result<()> {
        for _ in 0..times {
            self.compose(curve)?;
        }
        Ok(())
    }

    /// `(ε, α*)`; ties go to the smallest order.
    pub fn to_dp(&self, delta: f64) -> Result<(f64, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        let log_inv_delta = (1.0 / delta).ln();
        let mut best = (f64::INFINITY, f64::NAN);
        for (&a, &g) in self.grid.as_slice().iter().zip(&self.gamma) {
            let eps = g + log_inv_delta / (a - 1.0);
            if eps < best.0 || best.1.is_nan() {
                best = (eps, a);
            }
        }
        Ok(best)
    }

    /// Tentatively composes `curve`; commits only if the converted ε stays
    /// within `budget.epsilon`.
    pub fn spend(&mut self, curve: &RdpCurve, budget: &PrivacyBudget) -> Result<SpendOutcome> {
        self.spend_n(curve, 1, budget)
    }

    /// [`spend`](Self::spend) for `times` consecutive applications, all or
    /// nothing.
    pub fn spend_n(
        &mut self,
        curve: &RdpCurve,
        times: usize,
        budget: &PrivacyBudget,
    ) -> Result<SpendOutcome> {
        let mut trial = self.clone();
        trial.compose_n(curve, times)?;
        let (eps, _) = trial.to_dp(budget.delta)?;
        if eps > budget.epsilon {
            return Ok(SpendOutcome::Halt);
        }
        *self = trial;
        Ok(SpendOutcome::Continue {
            remaining: budget.epsilon - eps,
        })
    }
}

/// Output of [`calibrate_noise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mechanism: MechanismParams,
    pub achieved_epsilon: f64,
    pub minimizing_alpha: f64,
    pub iterations: usize,
    pub target_epsilon: f64,
    pub delta: f64,
    pub horizon: usize,
}

/// Privacy knob along which composed ε is strictly decreasing.
pub fn knob_to_params(kind: MechanismKind, sensitivity: f64, knob: f64) -> Result<MechanismParams> {
    match kind {
        MechanismKind::Gaussian => MechanismParams::gaussian(sensitivity, knob),
        MechanismKind::Laplace => MechanismParams::laplace(sensitivity, knob),
        MechanismKind::Staircase => MechanismParams::staircase_optimal(sensitivity, 1.0 / knob),
    }
}

pub fn params_to_knob(params: &MechanismParams) -> f64 {
    match params.kind {
        MechanismKind::Staircase => 1.0 / params.scale,
        _ => params.scale,
    }
}

/// Per-application curve used for accounting a mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AccountingMode {
    /// Plain per-application Rényi curve.
    #[default]
    Direct,
    /// Shuffle-model bound: `steps_per_report` applications are basic-composed
    /// into one pure-DP report, then amplified over `n_clients`. One curve
    /// then covers a whole report, not a single application.
    Shuffled {
        n_clients: u64,
        steps_per_report: usize,
    },
}

pub fn accounting_curve(
    params: &MechanismParams,
    grid: &AlphaGrid,
    mode: AccountingMode,
) -> Result<RdpCurve> {
    match mode {
        AccountingMode::Direct => RdpCurve::of(params, grid),
        AccountingMode::Shuffled {
            n_clients,
            steps_per_report,
        } => {
            let eps0 = mechanisms::pure_dp_epsilon(params).ok_or_else(|| {
                invalid(
                    "shuffle",
                    "shuffle amplification needs a pure-DP mechanism (laplace or staircase)",
                )
            })?;
            RdpCurve::shuffled(eps0 * steps_per_report as f64, n_clients, grid)
        }
    }
}

/// Composed-and-converted ε of `horizon` applications of `params`.
pub fn composed_epsilon(
    params: &MechanismParams,
    grid: &AlphaGrid,
    horizon: usize,
    delta: f64,
    mode: AccountingMode,
) -> Result<(f64, f64)> {
    let curve = accounting_curve(params, grid, mode)?;
    let mut ledger = RdpLedger::new(grid.clone());
    ledger.compose_n(&curve, horizon)?;
    ledger.to_dp(delta)
}

/// Least-noise scale whose `budget.horizon`-fold composition converts to
/// ε ≤ `budget.epsilon`. Stepping the knob by a factor `1 + tolerance`
/// toward less noise violates the budget.
pub fn calibrate_noise(
    kind: MechanismKind,
    sensitivity: f64,
    budget: &PrivacyBudget,
    grid: &AlphaGrid,
    tolerance: f64,
) -> Result<CalibrationResult> {
    calibrate_noise_with(
        kind,
        sensitivity,
        budget,
        grid,
        tolerance,
        AccountingMode::Direct,
    )
}

pub fn calibrate_noise_with(
    kind: MechanismKind,
    sensitivity: f64,
    budget: &PrivacyBudget,
    grid: &AlphaGrid,
    tolerance: f64,
    mode: AccountingMode,
) -> Result<CalibrationResult> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(invalid(
            "tolerance",
            format!("must lie in (0, 1), got {tolerance}"),
        ));
    }
    PrivacyBudget::new(budget.epsilon, budget.delta, budget.horizon)?;
    let eval = |knob: f64| -> Result<(f64, f64)> {
        let params = knob_to_params(kind, sensitivity, knob)?;
        composed_epsilon(&params, grid, budget.horizon, budget.delta, mode)
    };
    let finish = |knob: f64, (eps, alpha): (f64, f64), iterations| -> Result<CalibrationResult> {
        Ok(CalibrationResult {
            mechanism: knob_to_params(kind, sensitivity, knob)?,
            achieved_epsilon: eps,
            minimizing_alpha: alpha,
            iterations,
            target_epsilon: budget.epsilon,
            delta: budget.delta,
            horizon: budget.horizon,
        })
    };

    let at_upper = eval(KNOB_UPPER)?;
    if !(at_upper.0 <= budget.epsilon) {
        return Err(Error::Infeasible {
            kind: kind.name().to_string(),
            target: budget.epsilon,
            best: at_upper.0,
            lower: KNOB_LOWER,
            upper: KNOB_UPPER,
        });
    }
    let at_lower = eval(KNOB_LOWER)?;
    if at_lower.0 <= budget.epsilon {
        return finish(KNOB_LOWER, at_lower, 0);
    }

    // invariant: lo violates, hi satisfies
    let (mut lo, mut hi, mut hi_eval) = (KNOB_LOWER, KNOB_UPPER, at_upper);
    let mut iterations = 0;
    while hi / lo > 1.0 + tolerance {
        let mid = (lo * hi).sqrt();
        let e = eval(mid)?;
        if e.0 <= budget.epsilon {
            hi = mid;
            hi_eval = e;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    finish(hi, hi_eval, iterations)
}

fn shuffle_args(gamma: f64, alpha: f64, n_clients: u64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(alpha >= 2.0 && alpha.fract() == 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "shuffle bounds need an integer order >= 2, got {alpha}"
        )));
    }
    if n_clients == 0 {
        return Err(Error::Domain("n_clients must be >= 1".into()));
    }
    Ok(())
}

/// `ln(e^γ - 1)` for `γ > 0` without overflow.
fn ln_exp_m1(gamma: f64) -> f64 {
    if gamma < 30.0 {
        gamma.exp_m1().ln()
    } else {
        gamma + (-(-gamma).exp()).ln_1p()
    }
}

/// `(1/(α-1)) ln(1 + exp(ln_excess))` without overflow.
fn log1p_exp_over(ln_excess: f64, alpha: f64) -> f64 {
    let v = if ln_excess < 30.0 {
        ln_excess.exp().ln_1p()
    } else {
        ln_excess + (-ln_excess).exp().ln_1p()
    };
    v / (alpha - 1.0)
}

/// Upper bound on the shuffle-model Rényi divergence:
/// `(1/(α-1)) ln(1 + C(α,2)·4(e^γ-1)²/N)`.
pub fn shuffle_amplify_upper(gamma: f64, alpha: f64, n_clients: u64) -> Result<f64> {
    shuffle_args(gamma, alpha, n_clients)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let ln_pairs = (alpha * (alpha - 1.0) / 2.0).ln();
    let ln_excess = ln_pairs + 4f64.ln() + 2.0 * ln_exp_m1(gamma) - (n_clients as f64).ln();
    Ok(log1p_exp_over(ln_excess, alpha))
}

/// Lower bound on the shuffle-model Rényi divergence:
/// `(1/(α-1)) ln(1 + C(α,2)·(e^γ-1)²/(N e^γ))`.
pub fn shuffle_amplify_lower(gamma: f64, alpha: f64, n_clients: u64) -> Result<f64> {
    shuffle_args(gamma, alpha, n_clients)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let ln_pairs = (alpha * (alpha - 1.0) / 2.0).ln();
    let ln_excess = ln_pairs + 2.0 * ln_exp_m1(gamma) - (n_clients as f64).ln() - gamma;
    Ok(log1p_exp_over(ln_excess, alpha))
}

/// System-level ε across per-client ledgers: the maximum.
pub fn system_epsilon<'a>(
    ledgers: impl IntoIterator<Item = &'a RdpLedger>,
    delta: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut any = false;
    for l in ledgers {
        worst = worst.max(l.to_dp(delta)?.0);
        any = true;
    }
    Ok(if any { worst } else { 0.0 })
}
