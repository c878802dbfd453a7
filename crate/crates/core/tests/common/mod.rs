//! Independent numeric oracles shared by the integration tests.
//!
//! Nothing here calls into the library's density, normalizer or RDP code:
//! densities are re-derived from their textbook definitions and integrated
//! numerically.

#![allow(dead_code)]

use udpfl_core::{MechanismKind, MechanismParams};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln ∫ exp(g)` over consecutive breakpoints with `nodes`-point
/// Gauss–Legendre on every sub-interval.
pub fn ln_integral(g: impl Fn(f64) -> f64, breaks: &[f64], nodes: usize) -> f64 {
    let gl = gauss_legendre(nodes);
    let mut terms = Vec::with_capacity(breaks.len() * nodes);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        for &(x, wt) in &gl {
            terms.push((wt * half).ln() + g(0.5 * (a + b) + half * x));
        }
    }
    log_sum_exp(&terms)
}

fn uniform_breaks(lo: f64, hi: f64, h: f64, extra: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / h).ceil() as usize;
    let mut v: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    v.extend(extra.iter().copied().filter(|x| *x > lo && *x < hi));
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Staircase normalizer from its definition.
pub fn staircase_y(delta: f64, lambda: f64, nu: f64) -> f64 {
    let r = (-lambda).exp();
    (1.0 - r) / (2.0 * delta * (nu + r * (1.0 - nu)))
}

/// Log-density from the textbook definitions.
pub fn ln_density(p: &MechanismParams, x: f64) -> f64 {
    let d = p.sensitivity;
    match p.kind {
        MechanismKind::Gaussian => {
            let s = p.scale;
            -x * x / (2.0 * s * s) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln()
        }
        MechanismKind::Laplace => -x.abs() / p.scale - (2.0 * p.scale).ln(),
        MechanismKind::Staircase => {
            let (lam, nu) = (p.scale, p.nu.unwrap());
            let t = x.abs() / d;
            let k = t.floor();
            let steps = if t - k < nu { k } else { k + 1.0 };
            staircase_y(d, lam, nu).ln() - steps * lam
        }
    }
}

/// Points where the density or its shift by Δ changes form, plus a window
/// that holds all but a negligible fraction of the integrand.
fn window(p: &MechanismParams, alpha: f64) -> Vec<f64> {
    let d = p.sensitivity;
    match p.kind {
        MechanismKind::Gaussian => {
            let s = p.scale;
            let c = (1.0 - alpha) * d;
            uniform_breaks(c - 40.0 * s, c + 40.0 * s, s / 4.0, &[0.0, d])
        }
        MechanismKind::Laplace => {
            let b = p.scale;
            uniform_breaks(-60.0 * b, d + 60.0 * b, b / 2.0, &[0.0, d])
        }
        MechanismKind::Staircase => {
            let (lam, nu) = (p.scale, p.nu.unwrap());
            let k = (60.0 / lam).ceil() as i64 + 2;
            let mut v = Vec::new();
            for j in -k..=k + 1 {
                let j = j as f64;
                v.extend([j * d, (j + nu) * d, (j - nu) * d]);
            }
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    }
}

/// `D_α(P ‖ P(· - Δ))` by quadrature.
pub fn rdp_quadrature(p: &MechanismParams, alpha: f64) -> f64 {
    let d = p.sensitivity;
    let g = |x: f64| alpha * ln_density(p, x) + (1.0 - alpha) * ln_density(p, x - d);
    let nodes = if p.kind == MechanismKind::Staircase {
        2
    } else {
        16
    };
    ln_integral(g, &window(p, alpha), nodes) / (alpha - 1.0)
}

/// `∫ density` over the integration window.
pub fn total_mass(p: &MechanismParams) -> f64 {
    let nodes = if p.kind == MechanismKind::Staircase {
        2
    } else {
        16
    };
    ln_integral(|x| ln_density(p, x), &window(p, 1.0), nodes).exp()
}

/// Staircase CDF by analytic integration of the band density.
pub fn staircase_cdf(delta: f64, lambda: f64, nu: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - staircase_cdf(delta, lambda, nu, -x);
    }
    let y = staircase_y(delta, lambda, nu);
    let r = (-lambda).exp();
    let t = x / delta;
    let k = t.floor();
    let rk = (-k * lambda).exp();
    let full = y * delta * (nu + (1.0 - nu) * r) * (1.0 - rk) / (1.0 - r);
    let frac = t - k;
    let partial = if frac < nu {
        y * rk * frac * delta
    } else {
        y * rk * delta * (nu + r * (frac - nu))
    };
    0.5 + full + partial
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mean_abs(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64
}

/// `min_α γ_α + ln(1/δ)/(α-1)` with ties to the smallest α.
pub fn convert(gamma: &[f64], alphas: &[f64], delta: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, alphas[0]);
    for (g, a) in gamma.iter().zip(alphas) {
        let e = g + (1.0 / delta).ln() / (a - 1.0);
        if e < best.0 {
            best = (e, *a);
        }
    }
    best
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs `cfg.rounds` rounds with every client using `mechanism` at a fixed
/// scale and no accounting.
pub fn run_fixed_noise(
    cfg: &udpfl_core::experiment::ExperimentConfig,
    mechanism: Option<MechanismParams>,
) -> Vec<udpfl_core::fl::RoundMetrics> {
    use udpfl_core::fl::{run_round, RoundEnv};
    let mut cfg = cfg.clone();
    cfg.epsilon = f64::INFINITY;
    let mut p = udpfl_core::experiment::prepare(&cfg).unwrap();
    for c in &mut p.clients {
        c.mechanism = mechanism;
    }
    let env = RoundEnv {
        seed: cfg.seed,
        train: &p.train,
        test: &p.data.test,
        public_eval: p.data.public_eval.as_ref(),
    };
    (0..cfg.rounds)
        .map(|_| run_round(&mut p.server, &p.clients, &p.model, &mut p.accounts, &env).unwrap())
        .collect()
}
