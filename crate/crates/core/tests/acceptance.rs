//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p udpfl-core --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udpfl_core::accountant::{
    self, calibrate_noise, knob_to_params, params_to_knob, shuffle_amplify_lower,
    shuffle_amplify_upper, AlphaGrid, PrivacyBudget, RdpLedger, DEFAULT_TOLERANCE,
};
use udpfl_core::bounds::{self, BoundMode, BoundQuery};
use udpfl_core::experiment::{run_experiment, Completion, ExperimentConfig, ExperimentOutcome};
use udpfl_core::fl::ModelVector;
use udpfl_core::mechanisms::{self, MechanismKind, MechanismParams};
use udpfl_core::mode_connectivity::{self, CurveKind, CurveSpec, CurveTrainConfig};
use udpfl_core::par::{self, Execution};
use udpfl_core::{NoiseStream, Purpose, StreamKey};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = v.pass && in_time;
    println!(
        "[{}] criterion {id:>2} {name}: {} ({:.1}s, limit {}s{})",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    pass
}

fn random_params(kind: MechanismKind, rng: &mut ChaCha8Rng) -> MechanismParams {
    let delta = rng.random_range(0.5..2.0);
    match kind {
        MechanismKind::Gaussian => {
            MechanismParams::gaussian(delta, delta * rng.random_range(0.5..5.0)).unwrap()
        }
        MechanismKind::Laplace => {
            MechanismParams::laplace(delta, delta * rng.random_range(0.5..5.0)).unwrap()
        }
        MechanismKind::Staircase => MechanismParams::staircase(
            delta,
            rng.random_range(0.1..3.0),
            rng.random_range(0.05..0.95),
        )
        .unwrap(),
    }
}

fn rdp_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphas = [1.5, 2.0, 4.0, 8.0, 16.0, 32.0];
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for kind in MechanismKind::ALL {
        for _ in 0..20 {
            let p = random_params(kind, &mut rng);
            for &a in &alphas {
                let got = mechanisms::rdp(&p, a).unwrap();
                let want = common::rdp_quadrature(&p, a);
                let rel = (got - want).abs() / want.abs();
                if rel > worst || rel.is_nan() {
                    worst = rel;
                    worst_at = format!("{kind} scale={:.3} alpha={a}", p.scale);
                }
            }
        }
    }
    verdict(
        worst <= 1e-3,
        format!("max relative error {worst:.2e} at {worst_at} (tol 1e-3)"),
    )
}

fn staircase_density_suite() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let settings = [
        (1.0, 1.0, 0.5),
        (1.0, 2.0, mechanisms::staircase_optimal_nu(2.0)),
        (0.7, 0.4, 0.3),
    ];
    for (i, &(d, lam, nu)) in settings.iter().enumerate() {
        let p = MechanismParams::staircase(d, lam, nu).unwrap();

        // normalization by exact piecewise integration of the library density
        let k = (40.0 / lam).ceil() as i64;
        let mut mass = 0.0;
        let mut breaks: Vec<f64> = (-k..=k)
            .flat_map(|j| [j as f64 * d, (j as f64 + nu) * d, (j as f64 - nu) * d])
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        for w in breaks.windows(2) {
            mass += (w[1] - w[0]) * mechanisms::density(&p, 0.5 * (w[0] + w[1])).unwrap();
        }
        let norm_ok = (mass - 1.0).abs() <= 1e-6;

        // analytic band decay and likelihood ratio on a dense grid
        let mut decay_err = 0.0f64;
        let mut max_ratio = 0.0f64;
        // cell midpoints keep x, x ± Δ off the band breakpoints, where
        // rounding in floor(|x|/Δ) could pick either side
        for s in 0..20_000 {
            let x = -10.0 * d + (s as f64 + 0.5) * (20.0 * d / 20_000.0);
            let f0 = mechanisms::density(&p, x).unwrap();
            let f1 = mechanisms::density(&p, x - d).unwrap();
            max_ratio = max_ratio.max(f0 / f1).max(f1 / f0);
            if x >= 0.0 {
                let fd = mechanisms::density(&p, x + d).unwrap();
                decay_err = decay_err.max((fd / f0 - (-lam).exp()).abs());
            }
        }
        let decay_ok = decay_err < 1e-12;
        let ratio_ok = max_ratio <= lam.exp() + 1e-9;

        // sampled band ratios and KS distance
        let key = StreamKey::new(100 + i as u64, 0, 0, Purpose::Test);
        let mut xs = mechanisms::sample_many(&p, key, 1_000_000, Execution::Parallel).unwrap();
        let mut counts = [0usize; 6];
        for x in &xs {
            let band = (x.abs() / d).floor() as usize;
            if band < counts.len() {
                counts[band] += 1;
            }
        }
        let mut band_err = 0.0f64;
        for b in 0..3 {
            let ratio = counts[b] as f64 / counts[b + 1] as f64;
            band_err = band_err.max((ratio / lam.exp() - 1.0).abs());
        }
        let band_ok = band_err <= 0.05;
        let ks = common::ks_statistic(&mut xs, |x| common::staircase_cdf(d, lam, nu, x));
        let ks_ok = ks < 0.002;

        ok &= norm_ok && decay_ok && ratio_ok && band_ok && ks_ok;
        notes.push(format!(
            "λ={lam}: mass-1={:.1e} decay={decay_err:.0e} LR={max_ratio:.4}≤{:.4} band={:.3} KS={ks:.5}",
            mass - 1.0,
            lam.exp(),
            band_err
        ));
    }
    verdict(ok, notes.join("; "))
}

fn calibration_round_trip() -> Verdict {
    let grid = AlphaGrid::default();
    let delta = 1e-5;
    let mut failures = Vec::new();
    let mut cases = 0;
    for kind in MechanismKind::ALL {
        for eps in [2.0, 4.0, 6.0, 8.0] {
            for t in [1usize, 50, 150] {
                cases += 1;
                let budget = PrivacyBudget::new(eps, delta, t).unwrap();
                let cal = match calibrate_noise(kind, 1.0, &budget, &grid, DEFAULT_TOLERANCE) {
                    Ok(c) => c,
                    Err(e) => {
                        failures.push(format!("{kind} ε={eps} T={t}: {e}"));
                        continue;
                    }
                };
                let forward = |p: &MechanismParams| {
                    let gamma: Vec<f64> = grid
                        .as_slice()
                        .iter()
                        .map(|&a| {
                            let g = mechanisms::rdp(p, a).unwrap();
                            (0..t).fold(0.0, |acc, _| acc + g)
                        })
                        .collect();
                    common::convert(&gamma, grid.as_slice(), delta).0
                };
                let achieved = forward(&cal.mechanism);
                let less_noise = knob_to_params(
                    kind,
                    1.0,
                    params_to_knob(&cal.mechanism) / (1.0 + DEFAULT_TOLERANCE),
                )
                .unwrap();
                let stepped = forward(&less_noise);
                // written positively so that NaN fails too
                let ok = achieved <= eps && stepped > eps;
                if !ok {
                    failures.push(format!(
                        "{kind} ε={eps} T={t}: achieved {achieved}, stepped {stepped}"
                    ));
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} cases: achieved ≤ target and one step less noise violates")
        } else {
            failures.join("; ")
        },
    )
}

fn conversion_spot_value() -> Verdict {
    let grid = AlphaGrid::integers(2, 64).unwrap();
    let p = MechanismParams::gaussian(1.0, 1.0).unwrap();
    let mut ledger = RdpLedger::new(grid.clone());
    ledger
        .compose(&accountant::RdpCurve::of(&p, &grid).unwrap())
        .unwrap();
    let (eps, alpha) = ledger.to_dp(1e-5).unwrap();
    // independent oracle: α/2 + ln(1e5)/(α-1) minimized over 2..64
    let oracle = (2..=64)
        .map(|a| a as f64 / 2.0 + (1e5f64).ln() / (a as f64 - 1.0))
        .fold(f64::INFINITY, f64::min);
    let ok = (eps - 5.3026).abs() <= 1e-3 && alpha == 6.0 && (eps - oracle).abs() < 1e-12;
    verdict(
        ok,
        format!("ε={eps:.6} at α={alpha} (expected 5.3026 ± 1e-3 at α=6; oracle {oracle:.6})"),
    )
}

fn shuffle_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sandwich_ok = true;
    for _ in 0..100 {
        let g = rng.random_range(0.0..5.0);
        let a = rng.random_range(2..=64) as f64;
        let n = rng.random_range(1..=1_000_000u64);
        let (lo, hi) = (
            shuffle_amplify_lower(g, a, n).unwrap(),
            shuffle_amplify_upper(g, a, n).unwrap(),
        );
        sandwich_ok &= 0.0 <= lo && lo <= hi;
    }
    let u = shuffle_amplify_upper(2f64.ln(), 2.0, 4).unwrap();
    let l = shuffle_amplify_lower(2f64.ln(), 2.0, 4).unwrap();
    let spot_ok = (u - 2f64.ln()).abs() <= 1e-9 && (l - 1.125f64.ln()).abs() <= 1e-9;
    let big_u = shuffle_amplify_upper(1.0, 2.0, 100_000_000).unwrap();
    let big_l = shuffle_amplify_lower(1.0, 2.0, 100_000_000).unwrap();
    let limit_ok = big_u < 1e-6 && big_l < 1e-6;
    verdict(
        sandwich_ok && spot_ok && limit_ok,
        format!(
            "sandwich {} on 100 triples; spot u={u:.12} l={l:.12}; N=1e8: u={big_u:.2e} l={big_l:.2e}",
            if sandwich_ok { "holds" } else { "violated" }
        ),
    )
}

fn utility_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases = [
        MechanismParams::gaussian(1.0, 1.7).unwrap(),
        MechanismParams::laplace(1.0, 0.8).unwrap(),
        MechanismParams::staircase_optimal(1.0, 2.0).unwrap(),
        MechanismParams::staircase(1.5, 0.7, 0.3).unwrap(),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (i, p) in cases.iter().enumerate() {
        let m = rng.random_range(1..50usize);
        let t = rng.random_range(1..200usize);
        let q = BoundQuery::new(*p, m, t).unwrap();
        let bound = bounds::l1_bound(&q).unwrap();
        let key = StreamKey::new(300 + i as u64, 0, 0, Purpose::Test);
        let xs = mechanisms::sample_many(p, key, 1_000_000, Execution::Parallel).unwrap();
        let mc = m as f64 * t as f64 * common::mean_abs(&xs);
        let rel = (bound / mc - 1.0).abs();
        ok &= rel <= 0.01;
        notes.push(format!("{} {rel:.4}", p.kind));
    }
    let mut lemma_err = 0.0f64;
    for lam in [0.1, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let (nu, amp) = bounds::optimal_nu(lam).unwrap();
        let q = BoundQuery::new(MechanismParams::staircase(1.0, lam, nu).unwrap(), 1, 1).unwrap();
        let numeric = bounds::l1_bound_staircase(&q, BoundMode::Numeric).unwrap();
        let closed = lam.exp().sqrt() / lam.exp_m1();
        lemma_err = lemma_err
            .max((numeric - closed).abs())
            .max((amp - closed).abs());
    }
    ok &= lemma_err <= 1e-9;
    verdict(
        ok,
        format!(
            "MC relative gaps [{}] (tol 0.01); optimal-ν closed form error {lemma_err:.1e}",
            notes.join(", ")
        ),
    )
}

struct Bowl;

impl udpfl_core::fl::Objective for Bowl {
    fn value(&self, w: &ModelVector) -> f64 {
        w.iter().map(|x| x * x).sum()
    }
    fn gradient(&self, w: &ModelVector) -> ModelVector {
        ModelVector(w.iter().map(|x| 2.0 * x).collect())
    }
}

fn mode_connectivity_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let rand_vec = |rng: &mut ChaCha8Rng, d: usize| {
        ModelVector((0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
    };
    let mut endpoints_ok = true;
    for kind in [CurveKind::PolygonalChain, CurveKind::QuadraticBezier] {
        for _ in 0..20 {
            let (w1, w2, th) = (
                rand_vec(&mut rng, 7),
                rand_vec(&mut rng, 7),
                rand_vec(&mut rng, 7),
            );
            let spec = CurveSpec::new(kind, w1.clone(), w2.clone(), th).unwrap();
            let cfg = CurveTrainConfig {
                steps: 50,
                learning_rate: 0.01,
            };
            let trained = mode_connectivity::train_curve(
                &spec,
                &cfg,
                &Bowl,
                &mut NoiseStream::derive(1, 0, 0, Purpose::Test),
            )
            .unwrap();
            let after = CurveSpec::new(kind, w1.clone(), w2.clone(), trained).unwrap();
            for s in [&spec, &after] {
                endpoints_ok &= mode_connectivity::curve_point(s, 0.0).unwrap() == w1;
                endpoints_ok &= mode_connectivity::curve_point(s, 1.0).unwrap() == w2;
            }
        }
    }

    let mut residual = 0.0f64;
    for _ in 0..100 {
        let l = rng.random_range(0.1..10.0);
        let (w, v) = (rand_vec(&mut rng, 5), rand_vec(&mut rng, 5));
        let th = mode_connectivity::theta_star(l, &w, &v).unwrap();
        for i in 0..5 {
            residual = residual
                .max((-1.0 / l + 5.0 / 6.0 * th[i] + v[i] / 12.0 - 11.0 / 12.0 * w[i]).abs());
        }
    }

    // endpoints (1,0) and (-1,0) would start at the exact minimizer (the
    // origin), where no strict decrease is possible; (1,0) and (0,1) start
    // away from it
    let mut descent = Vec::new();
    for kind in [CurveKind::PolygonalChain, CurveKind::QuadraticBezier] {
        let spec = CurveSpec::midpoint(
            kind,
            ModelVector(vec![1.0, 0.0]),
            ModelVector(vec![0.0, 1.0]),
        )
        .unwrap();
        let cfg = CurveTrainConfig {
            steps: 500,
            learning_rate: 0.01,
        };
        let theta = mode_connectivity::train_curve(
            &spec,
            &cfg,
            &Bowl,
            &mut NoiseStream::derive(2, 0, 0, Purpose::CurveTraining),
        )
        .unwrap();
        let trained = CurveSpec {
            theta,
            ..spec.clone()
        };
        let mc = |s: &CurveSpec| {
            mode_connectivity::expected_curve_loss(
                s,
                &Bowl,
                10_000,
                &mut NoiseStream::derive(3, 0, 0, Purpose::MonteCarlo),
            )
            .unwrap()
        };
        descent.push((mc(&spec), mc(&trained)));
    }
    let descent_ok = descent.iter().all(|(before, after)| after < before);

    let (v, th, w) = (
        ModelVector(vec![1.0, -2.0]),
        ModelVector(vec![3.0, 5.0]),
        ModelVector(vec![-4.0, 0.5]),
    );
    let b0 = mode_connectivity::bezier_fedavg_update(&v, &th, &w, 0.0).unwrap();
    let b1 = mode_connectivity::bezier_fedavg_update(&v, &th, &w, 1.0).unwrap();
    let bh = mode_connectivity::bezier_fedavg_update(&v, &th, &w, 0.5).unwrap();
    let want_h = ModelVector::combine(&[(0.25, &v), (0.5, &th), (0.25, &w)]).unwrap();
    let bezier_ok = b0 == v && b1 == w && bh.max_abs_diff(&want_h) < 1e-15;

    verdict(
        endpoints_ok && residual < 1e-12 && descent_ok && bezier_ok,
        format!(
            "endpoints {}; θ* residual {residual:.1e}; curve loss chain {:.4}→{:.4}, bezier {:.4}→{:.4}; bezier spots {}",
            if endpoints_ok { "exact" } else { "moved" },
            descent[0].0,
            descent[0].1,
            descent[1].0,
            descent[1].1,
            if bezier_ok { "ok" } else { "wrong" }
        ),
    )
}

/// Runs every config, keeping CSV text alongside the outcome.
fn run_all(configs: &[ExperimentConfig]) -> Vec<(ExperimentConfig, String, ExperimentOutcome)> {
    par::map(Execution::Parallel, configs, |cfg| {
        let mut buf = Vec::new();
        let out = run_experiment(cfg, &mut buf).expect("experiment runs");
        (cfg.clone(), String::from_utf8(buf).unwrap(), out)
    })
}

fn reference(mechanism: MechanismKind, epsilon: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        mechanism,
        epsilon,
        seed,
        rounds: 150,
        clients: 10,
        delta: 1e-5,
        ..Default::default()
    }
}

const SEEDS: std::ops::Range<u64> = 0..10;

fn trend_reproduction(log: &mut Vec<(ExperimentConfig, String, ExperimentOutcome)>) -> Verdict {
    let mut configs = Vec::new();
    for seed in SEEDS {
        for m in MechanismKind::ALL {
            configs.push(reference(m, 8.0, seed));
            configs.push(reference(m, f64::INFINITY, seed));
        }
    }
    let runs = run_all(&configs);
    let acc = |m: MechanismKind, eps: f64, seed: u64| {
        runs.iter()
            .find(|(c, _, _)| c.mechanism == m && c.seed == seed && c.epsilon == eps)
            .map(|(_, _, o)| o.summary.final_accuracy)
            .unwrap()
    };
    let mut wins = 0;
    let mut pairs = Vec::new();
    let mut spread = 0.0f64;
    for seed in SEEDS {
        let (s, l) = (
            acc(MechanismKind::Staircase, 8.0, seed),
            acc(MechanismKind::Laplace, 8.0, seed),
        );
        if s >= l {
            wins += 1;
        }
        pairs.push(format!("{s:.3}/{l:.3}"));
        let free: Vec<f64> = MechanismKind::ALL
            .iter()
            .map(|m| acc(*m, f64::INFINITY, seed))
            .collect();
        let hi = free.iter().copied().fold(f64::MIN, f64::max);
        let lo = free.iter().copied().fold(f64::MAX, f64::min);
        spread = spread.max(hi - lo);
    }
    log.extend(runs);
    verdict(
        wins >= 7 && spread <= 0.02,
        format!(
            "staircase ≥ laplace at ε=8 in {wins}/10 seeds (need ≥7) [staircase/laplace: {}]; noise-free spread {spread:.3} (tol 0.02)",
            pairs.join(" ")
        ),
    )
}

fn convergence_trend(log: &mut Vec<(ExperimentConfig, String, ExperimentOutcome)>) -> Verdict {
    let epsilons = [2.0, 4.0, 8.0];
    let mut configs: Vec<ExperimentConfig> = SEEDS
        .map(|s| reference(MechanismKind::Gaussian, f64::INFINITY, s))
        .collect();
    for m in MechanismKind::ALL {
        for &e in &epsilons {
            for seed in SEEDS {
                configs.push(reference(m, e, seed));
            }
        }
    }
    let runs = run_all(&configs);
    let noiseless = |seed: u64| {
        runs.iter()
            .find(|(c, _, _)| c.epsilon.is_infinite() && c.seed == seed)
            .map(|(_, _, o)| o.summary.final_accuracy)
            .unwrap()
    };
    let mut ok = true;
    let mut reached_any = false;
    let mut notes = Vec::new();
    for m in MechanismKind::ALL {
        let mut medians = Vec::new();
        for &e in &epsilons {
            let rounds: Vec<f64> = SEEDS
                .map(|seed| {
                    let (c, _, o) = runs
                        .iter()
                        .find(|(c, _, _)| c.mechanism == m && c.epsilon == e && c.seed == seed)
                        .unwrap();
                    let target = 0.9 * noiseless(seed);
                    o.metrics
                        .iter()
                        .find(|r| r.eval_accuracy >= target)
                        .map(|r| r.round as f64)
                        .unwrap_or((c.rounds + 1) as f64)
                })
                .collect();
            reached_any |= rounds.iter().any(|r| *r <= 150.0);
            medians.push(common::median(rounds));
        }
        ok &= medians.windows(2).all(|w| w[1] <= w[0]);
        notes.push(format!("{m} {:?}", medians));
    }
    log.extend(runs);
    let mut detail = format!(
        "median rounds-to-90% at ε=2,4,8 (151 = never): {}",
        notes.join("; ")
    );
    if !reached_any {
        detail.push_str("; vacuous: no noisy run reached the threshold");
    }
    verdict(ok, detail)
}

fn privacy_ceiling(log: &[(ExperimentConfig, String, ExperimentOutcome)]) -> Verdict {
    let mut rows = 0usize;
    let mut violations = Vec::new();
    for (cfg, csv, out) in log {
        let mut prev = 0.0f64;
        for line in csv.lines().skip(1) {
            rows += 1;
            let eps: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            if (cfg.epsilon.is_finite() && eps > cfg.epsilon) || eps < prev {
                violations.push(format!(
                    "{} ε={} seed={}: row {line}",
                    cfg.mechanism, cfg.epsilon, cfg.seed
                ));
            }
            prev = eps;
        }
        if !out.completed() || out.metrics.len() != cfg.rounds {
            violations.push(format!(
                "{} ε={} seed={} did not complete",
                cfg.mechanism, cfg.epsilon, cfg.seed
            ));
        }
    }

    // a run calibrated for 40 rounds but asked for 150 must halt
    let mut halted = Vec::new();
    for m in MechanismKind::ALL {
        let cfg = ExperimentConfig {
            calibration_rounds: Some(40),
            ..reference(m, 4.0, 0)
        };
        let mut buf = Vec::new();
        let out = run_experiment(&cfg, &mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        let max_eps = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .fold(0.0, f64::max);
        let signalled = matches!(
            out.completion,
            Completion::BudgetExhausted { round: 40, .. }
        );
        if !signalled || out.summary.rounds_run != 40 || max_eps > 4.0 {
            violations.push(format!(
                "{m}: halt {:?} after {} rounds, max ε {max_eps}",
                out.completion, out.summary.rounds_run
            ));
        }
        halted.push(format!("{m} halted at round {}", out.summary.rounds_run));
    }
    verdict(
        violations.is_empty(),
        if violations.is_empty() {
            format!(
                "{rows} rows from {} runs within budget; {}",
                log.len(),
                halted.join(", ")
            )
        } else {
            violations.join("; ")
        },
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` style probes: nothing to enumerate
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut results = vec![
        run(1, "rdp matches quadrature", secs(60), rdp_oracle),
        run(
            2,
            "staircase density suite",
            secs(60),
            staircase_density_suite,
        ),
        run(
            3,
            "calibration round-trip",
            secs(30),
            calibration_round_trip,
        ),
        run(4, "conversion spot value", secs(5), conversion_spot_value),
        run(5, "shuffle bounds", secs(5), shuffle_bounds),
        run(6, "utility bounds vs Monte-Carlo", secs(60), utility_bounds),
        run(7, "mode connectivity", secs(60), mode_connectivity_suite),
    ];
    let mut log = Vec::new();
    results.push(run(8, "staircase vs laplace trend", secs(600), || {
        trend_reproduction(&mut log)
    }));
    results.push(run(9, "convergence trend in ε", secs(600), || {
        convergence_trend(&mut log)
    }));
    results.push(run(10, "privacy ceiling end-to-end", secs(120), || {
        privacy_ceiling(&log)
    }));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
