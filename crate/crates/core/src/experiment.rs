//! Experiment configuration, end-to-end runs and sweeps.
//!
//! A config is a list of `key = value` lines with `#` comments. Values are
//! layered: defaults, then the `UDPFL_SEED` environment variable (seed only),
//! then the file, then explicit overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;

use crate::accountant::{
    self, AccountingMode, AlphaGrid, CalibrationResult, PrivacyBudget, DEFAULT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::fl::{
    split_iid, Aggregator, ClientAccount, ClientConfig, DatasetShard, FederatedData,
    LogisticRegression, LossModel, ModeConnectSettings, ModelVector, RoundEnv, RoundMetrics,
    ServerState, SyntheticBlobs,
};
use crate::mechanisms::MechanismKind;
use crate::mode_connectivity::{CurveKind, CurveTrainConfig};
use crate::par::{self, Execution};

/// Frozen metrics header.
pub const CSV_HEADER: &str =
    "round,cumulative_epsilon,train_loss,eval_accuracy,mechanism,noise_scale,seed";

pub const SEED_ENV: &str = "UDPFL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorChoice {
    #[default]
    FedAvg,
    ModeConnect,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    #[default]
    Synthetic,
    Csv(PathBuf),
}

/// How per-client privacy loss is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountingChoice {
    /// Every noisy step is charged its own Rényi curve.
    #[default]
    Direct,
    /// One shuffle-amplified report per round (requires `shuffle = true` and
    /// a pure-DP mechanism).
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mechanism: MechanismKind,
    /// Target ε; `inf` disables noise and accounting.
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: usize,
    /// Rounds the noise is calibrated for; defaults to `rounds`. Setting it
    /// lower makes the run exhaust its budget early.
    pub calibration_rounds: Option<usize>,
    pub clients: usize,
    pub selection_fraction: f64,
    pub sample_rate: f64,
    pub clip: f64,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub aggregator: AggregatorChoice,
    pub curve: CurveKind,
    pub curve_steps: usize,
    pub curve_learning_rate: f64,
    pub lipschitz: Option<f64>,
    pub shuffle: bool,
    pub accounting: AccountingChoice,
    pub heterogeneous_epsilon: Option<Vec<f64>>,
    pub dataset: DatasetSource,
    /// Class-center spread of the synthetic task.
    pub separation: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mechanism: MechanismKind::Staircase,
            epsilon: 8.0,
            delta: 1e-5,
            rounds: 150,
            calibration_rounds: None,
            clients: 10,
            selection_fraction: 1.0,
            sample_rate: 0.05,
            clip: 1.0,
            local_epochs: 2,
            learning_rate: 0.01,
            aggregator: AggregatorChoice::FedAvg,
            curve: CurveKind::PolygonalChain,
            curve_steps: 100,
            curve_learning_rate: 0.01,
            lipschitz: None,
            shuffle: false,
            accounting: AccountingChoice::Direct,
            heterogeneous_epsilon: None,
            dataset: DatasetSource::Synthetic,
            separation: 1.0,
            seed: 0,
            output: None,
            execution: Execution::Parallel,
        }
    }
}

/// Every accepted key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "mechanism",
    "epsilon",
    "delta",
    "rounds",
    "calibration_rounds",
    "clients",
    "selection_fraction",
    "sample_rate",
    "clip",
    "local_epochs",
    "learning_rate",
    "aggregator",
    "curve",
    "curve_steps",
    "curve_learning_rate",
    "lipschitz",
    "shuffle",
    "accounting",
    "heterogeneous_epsilon",
    "dataset",
    "separation",
    "seed",
    "output",
    "execution",
];

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        _ => {
            let v: f64 = parse_num(key, value)?;
            if v.is_nan() {
                return Err(config_err(key, "NaN is not allowed"));
            }
            Ok(v)
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(
            key,
            format!("expected a boolean, got `{value}`"),
        )),
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let lower = value.to_ascii_lowercase();
        match key {
            "mechanism" => {
                self.mechanism = value
                    .parse()
                    .map_err(|_| config_err(key, format!("unknown mechanism `{value}`")))?
            }
            "epsilon" => self.epsilon = parse_f64(key, value)?,
            "delta" => self.delta = parse_f64(key, value)?,
            "rounds" => self.rounds = parse_num(key, value)?,
            "calibration_rounds" => self.calibration_rounds = Some(parse_num(key, value)?),
            "clients" => self.clients = parse_num(key, value)?,
            "selection_fraction" => self.selection_fraction = parse_f64(key, value)?,
            "sample_rate" => self.sample_rate = parse_f64(key, value)?,
            "clip" => self.clip = parse_f64(key, value)?,
            "local_epochs" => self.local_epochs = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "aggregator" => {
                self.aggregator = match lower.as_str() {
                    "fedavg" => AggregatorChoice::FedAvg,
                    "modeconnect" | "mode_connect" | "mode-connect" => {
                        AggregatorChoice::ModeConnect
                    }
                    _ => {
                        return Err(config_err(
                            key,
                            format!("expected fedavg or modeconnect, got `{value}`"),
                        ))
                    }
                }
            }
            "curve" => {
                self.curve = match lower.as_str() {
                    "chain" | "polygonal" | "polygonal_chain" => CurveKind::PolygonalChain,
                    "bezier" | "quadratic_bezier" => CurveKind::QuadraticBezier,
                    _ => {
                        return Err(config_err(
                            key,
                            format!("expected chain or bezier, got `{value}`"),
                        ))
                    }
                }
            }
            "curve_steps" => self.curve_steps = parse_num(key, value)?,
            "curve_learning_rate" => self.curve_learning_rate = parse_f64(key, value)?,
            "lipschitz" => {
                self.lipschitz = match lower.as_str() {
                    "none" | "" => None,
                    _ => Some(parse_f64(key, value)?),
                }
            }
            "shuffle" => self.shuffle = parse_bool(key, value)?,
            "accounting" => {
                self.accounting = match lower.as_str() {
                    "direct" => AccountingChoice::Direct,
                    "shuffled" => AccountingChoice::Shuffled,
                    _ => {
                        return Err(config_err(
                            key,
                            format!("expected direct or shuffled, got `{value}`"),
                        ))
                    }
                }
            }
            "heterogeneous_epsilon" => {
                self.heterogeneous_epsilon = match lower.as_str() {
                    "" | "none" => None,
                    _ => Some(
                        value
                            .split(',')
                            .map(|v| parse_f64(key, v.trim()))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                }
            }
            "dataset" => {
                self.dataset = match lower.as_str() {
                    "synthetic" => DatasetSource::Synthetic,
                    "" => return Err(config_err(key, "empty dataset path")),
                    _ => DatasetSource::Csv(PathBuf::from(value)),
                }
            }
            "separation" => self.separation = parse_f64(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output" => {
                self.output = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "execution" => {
                self.execution = match lower.as_str() {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => {
                        return Err(config_err(
                            key,
                            format!("expected parallel or sequential, got `{value}`"),
                        ))
                    }
                }
            }
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(key, format!("must be finite and > 0, got {v}")))
            }
        };
        if !(self.epsilon > 0.0) {
            return Err(config_err(
                "epsilon",
                format!("must be > 0 (or inf), got {}", self.epsilon),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(
                "delta",
                format!("must lie in (0, 1), got {}", self.delta),
            ));
        }
        if self.rounds == 0 {
            return Err(config_err("rounds", "must be >= 1"));
        }
        if self.calibration_rounds == Some(0) {
            return Err(config_err("calibration_rounds", "must be >= 1"));
        }
        if self.clients == 0 {
            return Err(config_err("clients", "must be >= 1"));
        }
        if !(self.selection_fraction > 0.0 && self.selection_fraction <= 1.0) {
            return Err(config_err("selection_fraction", "must lie in (0, 1]"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(config_err("sample_rate", "must lie in (0, 1]"));
        }
        positive("clip", self.clip)?;
        if self.local_epochs == 0 {
            return Err(config_err("local_epochs", "must be >= 1"));
        }
        positive("learning_rate", self.learning_rate)?;
        if !(self.curve_learning_rate >= 0.0 && self.curve_learning_rate.is_finite()) {
            return Err(config_err("curve_learning_rate", "must be finite and >= 0"));
        }
        if let Some(l) = self.lipschitz {
            positive("lipschitz", l)?;
        }
        positive("separation", self.separation)?;
        if let Some(list) = &self.heterogeneous_epsilon {
            if list.len() != self.clients {
                return Err(config_err(
                    "heterogeneous_epsilon",
                    format!(
                        "needs one value per client ({}), got {}",
                        self.clients,
                        list.len()
                    ),
                ));
            }
            if list.iter().any(|e| !(*e > 0.0)) {
                return Err(config_err(
                    "heterogeneous_epsilon",
                    "every value must be > 0",
                ));
            }
        }
        if self.accounting == AccountingChoice::Shuffled {
            if !self.shuffle {
                return Err(config_err(
                    "accounting",
                    "shuffled accounting requires shuffle = true",
                ));
            }
            if self.mechanism == MechanismKind::Gaussian {
                return Err(config_err(
                    "accounting",
                    "shuffled accounting needs a pure-DP mechanism",
                ));
            }
        }
        Ok(())
    }

    /// Writes the config back as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                v.to_string()
            }
        };
        let _ = writeln!(s, "mechanism = {}", self.mechanism);
        let _ = writeln!(s, "epsilon = {}", f(self.epsilon));
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        if let Some(c) = self.calibration_rounds {
            let _ = writeln!(s, "calibration_rounds = {c}");
        }
        let _ = writeln!(s, "clients = {}", self.clients);
        let _ = writeln!(s, "selection_fraction = {}", self.selection_fraction);
        let _ = writeln!(s, "sample_rate = {}", self.sample_rate);
        let _ = writeln!(s, "clip = {}", self.clip);
        let _ = writeln!(s, "local_epochs = {}", self.local_epochs);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let agg = match self.aggregator {
            AggregatorChoice::FedAvg => "fedavg",
            AggregatorChoice::ModeConnect => "modeconnect",
        };
        let _ = writeln!(s, "aggregator = {agg}");
        let curve = match self.curve {
            CurveKind::PolygonalChain => "chain",
            CurveKind::QuadraticBezier => "bezier",
        };
        let _ = writeln!(s, "curve = {curve}");
        let _ = writeln!(s, "curve_steps = {}", self.curve_steps);
        let _ = writeln!(s, "curve_learning_rate = {}", self.curve_learning_rate);
        if let Some(l) = self.lipschitz {
            let _ = writeln!(s, "lipschitz = {l}");
        }
        let _ = writeln!(s, "shuffle = {}", self.shuffle);
        let acc = match self.accounting {
            AccountingChoice::Direct => "direct",
            AccountingChoice::Shuffled => "shuffled",
        };
        let _ = writeln!(s, "accounting = {acc}");
        if let Some(list) = &self.heterogeneous_epsilon {
            let joined: Vec<String> = list.iter().map(|e| f(*e)).collect();
            let _ = writeln!(s, "heterogeneous_epsilon = {}", joined.join(","));
        }
        match &self.dataset {
            DatasetSource::Synthetic => {
                let _ = writeln!(s, "dataset = synthetic");
            }
            DatasetSource::Csv(p) => {
                let _ = writeln!(s, "dataset = {}", p.display());
            }
        }
        let _ = writeln!(s, "separation = {}", self.separation);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output = {}", o.display());
        }
        let exec = match self.execution {
            Execution::Parallel => "parallel",
            Execution::Sequential => "sequential",
        };
        let _ = writeln!(s, "execution = {exec}");
        s
    }
}

/// Splits config text into `(line number, key, value)` triples.
fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            config_err(
                &format!("line {}", i + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Layers defaults, an optional environment seed, file text and overrides.
/// Override keys use the same snake_case names as the file.
pub fn parse_config_layers(
    env_seed: Option<&str>,
    text: &str,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(seed) = env_seed {
        cfg.set("seed", seed).map_err(|e| match e {
            Error::Config { reason, .. } => {
                config_err("seed", format!("from {SEED_ENV}: {reason}"))
            }
            other => other,
        })?;
    }
    for (_, k, v) in parse_lines(text)? {
        cfg.set(&k, &v)?;
    }
    for (k, v) in overrides {
        cfg.set(&k.replace('-', "_"), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// [`parse_config_layers`] with the seed fallback read from `UDPFL_SEED`.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let env = std::env::var(SEED_ENV).ok();
    parse_config_layers(env.as_deref(), text, overrides)
}

/// C `%.6g`.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    const P: i32 = 6;
    // rounding to P significant digits decides the exponent
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_row(m: &RoundMetrics, mechanism: MechanismKind) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        m.round,
        format_g6(m.cumulative_epsilon),
        format_g6(m.train_loss),
        format_g6(m.eval_accuracy),
        mechanism.name(),
        format_g6(m.noise_scale),
        m.seed
    )
}

/// Single-line JSON summary printed after the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub final_accuracy: f64,
    /// `null` when noise is disabled.
    pub final_epsilon: Option<f64>,
    pub rounds_run: usize,
    pub calibrated_scale: Option<f64>,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Completed,
    BudgetExhausted { round: usize, client: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub completion: Completion,
    pub metrics: Vec<RoundMetrics>,
    /// Calibration per distinct target ε.
    pub calibrations: Vec<CalibrationResult>,
}

impl ExperimentOutcome {
    pub fn completed(&self) -> bool {
        self.completion == Completion::Completed
    }
}

/// Everything a run needs, built from a config.
pub struct Prepared {
    pub data: FederatedData,
    pub train: DatasetShard,
    pub model: LogisticRegression,
    pub clients: Vec<ClientConfig>,
    pub accounts: Vec<Option<ClientAccount>>,
    pub server: ServerState,
    pub calibrations: Vec<CalibrationResult>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<FederatedData> {
    match &cfg.dataset {
        DatasetSource::Synthetic => SyntheticBlobs {
            n_clients: cfg.clients,
            separation: cfg.separation,
            ..Default::default()
        }
        .generate(cfg.seed),
        DatasetSource::Csv(path) => {
            let pool = DatasetShard::from_csv_path(path)?;
            split_iid(&pool, cfg.clients, 0.2, 0.05, cfg.seed)
        }
    }
}

/// Accounting mode and noisy-step horizon the config calibrates for.
pub fn calibration_plan(cfg: &ExperimentConfig) -> (AccountingMode, usize) {
    let mode = match cfg.accounting {
        AccountingChoice::Direct => AccountingMode::Direct,
        AccountingChoice::Shuffled => {
            let selected = ((cfg.selection_fraction * cfg.clients as f64 - 1e-9).ceil() as usize)
                .clamp(1, cfg.clients.max(1));
            AccountingMode::Shuffled {
                n_clients: selected as u64,
                steps_per_report: cfg.local_epochs,
            }
        }
    };
    let per_round = match mode {
        AccountingMode::Direct => cfg.local_epochs,
        AccountingMode::Shuffled { .. } => 1,
    };
    (
        mode,
        cfg.calibration_rounds.unwrap_or(cfg.rounds) * per_round,
    )
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let train = DatasetShard::concat(&data.clients)?;
    let model = LogisticRegression::new(train.n_features, train.n_classes);

    let eps: Vec<f64> = cfg
        .heterogeneous_epsilon
        .clone()
        .unwrap_or_else(|| vec![cfg.epsilon; cfg.clients]);
    let aggregator = match cfg.aggregator {
        AggregatorChoice::FedAvg => Aggregator::FedAvg,
        AggregatorChoice::ModeConnect => Aggregator::ModeConnect(ModeConnectSettings {
            curve: cfg.curve,
            train: CurveTrainConfig {
                steps: cfg.curve_steps,
                learning_rate: cfg.curve_learning_rate,
            },
            lipschitz: cfg.lipschitz,
        }),
    };
    let weights: Vec<f64> = data.clients.iter().map(|c| c.len() as f64).collect();
    let mut server = ServerState::new(
        ModelVector::zeros(model.dim()),
        weights,
        aggregator,
        cfg.selection_fraction,
    )?;
    server.shuffle = cfg.shuffle;
    server.exec = cfg.execution;
    server.heterogeneous = eps.iter().any(|e| *e != eps[0]);

    let (mode, horizon) = calibration_plan(cfg);
    debug_assert!(match mode {
        AccountingMode::Shuffled { n_clients, .. } => n_clients == server.selection_size() as u64,
        AccountingMode::Direct => true,
    });
    let grid = AlphaGrid::default();

    // calibrate once per distinct finite target
    let mut by_target: BTreeMap<u64, CalibrationResult> = BTreeMap::new();
    for e in eps.iter().filter(|e| e.is_finite()) {
        if by_target.contains_key(&e.to_bits()) {
            continue;
        }
        let budget = PrivacyBudget::new(*e, cfg.delta, horizon)?;
        let cal = accountant::calibrate_noise_with(
            cfg.mechanism,
            cfg.clip,
            &budget,
            &grid,
            DEFAULT_TOLERANCE,
            mode,
        )?;
        by_target.insert(e.to_bits(), cal);
    }

    let mut clients = Vec::with_capacity(cfg.clients);
    let mut accounts = Vec::with_capacity(cfg.clients);
    for (k, shard) in data.clients.iter().enumerate() {
        let cal = by_target.get(&eps[k].to_bits());
        clients.push(ClientConfig {
            id: k,
            shard: Arc::new(shard.clone()),
            epsilon: eps[k],
            mechanism: cal.map(|c| c.mechanism),
            clip: cfg.clip,
            sample_rate: cfg.sample_rate,
            local_epochs: cfg.local_epochs,
            learning_rate: cfg.learning_rate,
        });
        accounts.push(match cal {
            Some(c) => Some(ClientAccount::new(
                c.mechanism,
                PrivacyBudget::new(eps[k], cfg.delta, horizon)?,
                &grid,
                mode,
            )?),
            None => None,
        });
    }
    let mut calibrations: Vec<CalibrationResult> = Vec::new();
    for e in &eps {
        if let Some(c) = by_target.get(&e.to_bits()) {
            if !calibrations.contains(c) {
                calibrations.push(c.clone());
            }
        }
    }
    Ok(Prepared {
        data,
        train,
        model,
        clients,
        accounts,
        server,
        calibrations,
    })
}

/// Runs one experiment, streaming CSV rows (header first) into `csv`.
/// A budget halt is a normal outcome reported through
/// [`ExperimentOutcome::completion`]; other failures are errors.
pub fn run_experiment(cfg: &ExperimentConfig, csv: &mut dyn Write) -> Result<ExperimentOutcome> {
    let Prepared {
        data,
        train,
        model,
        clients,
        mut accounts,
        mut server,
        calibrations,
    } = prepare(cfg)?;
    writeln!(csv, "{CSV_HEADER}")?;
    let env = RoundEnv {
        seed: cfg.seed,
        train: &train,
        test: &data.test,
        public_eval: data.public_eval.as_ref(),
    };
    let mut metrics = Vec::with_capacity(cfg.rounds);
    let mut completion = Completion::Completed;
    for _ in 0..cfg.rounds {
        match crate::fl::run_round(&mut server, &clients, &model, &mut accounts, &env) {
            Ok(m) => {
                writeln!(csv, "{}", csv_row(&m, cfg.mechanism))?;
                metrics.push(m);
            }
            Err(Error::BudgetExhausted { round, client }) => {
                completion = Completion::BudgetExhausted { round, client };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    csv.flush()?;
    let final_accuracy = metrics
        .last()
        .map(|m| m.eval_accuracy)
        .unwrap_or_else(|| model.accuracy(&server.global, &data.test));
    let final_epsilon = crate::fl::server::system_epsilon(&accounts)?;
    Ok(ExperimentOutcome {
        summary: ExperimentSummary {
            final_accuracy,
            final_epsilon: final_epsilon.is_finite().then_some(final_epsilon),
            rounds_run: metrics.len(),
            calibrated_scale: calibrations.first().map(|c| c.mechanism.scale),
        },
        completion,
        metrics,
        calibrations,
    })
}

/// Summary of one sweep entry.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub experiment_id: usize,
    pub outcome: ExperimentOutcome,
}

/// Runs every config (concurrently under `exec`) and writes one CSV with a
/// leading `experiment_id` column. Each experiment's rows are buffered and
/// emitted together, in id order.
pub fn sweep(
    configs: &[ExperimentConfig],
    exec: Execution,
    csv: &mut dyn Write,
) -> Result<Vec<SweepEntry>> {
    writeln!(csv, "experiment_id,{CSV_HEADER}")?;
    let runs = par::map_range(
        exec,
        configs.len(),
        |i| -> Result<(Vec<u8>, ExperimentOutcome)> {
            let mut buf = Vec::new();
            let outcome = run_experiment(&configs[i], &mut buf)?;
            Ok((buf, outcome))
        },
    );
    let mut entries = Vec::with_capacity(configs.len());
    for (id, run) in runs.into_iter().enumerate() {
        let (buf, outcome) = run?;
        let text = String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            other => {
                return Err(Error::Config {
                    key: format!("experiment {id}"),
                    reason: format!("schema drift: header `{}`", other.unwrap_or("")),
                })
            }
        }
        for line in lines {
            writeln!(csv, "{id},{line}")?;
        }
        entries.push(SweepEntry {
            experiment_id: id,
            outcome,
        });
    }
    csv.flush()?;
    Ok(entries)
}

/// Cartesian expansion `mechanisms × epsilons × seeds` of a base config, in
/// that nesting order.
pub fn expand_grid(
    base: &ExperimentConfig,
    mechanisms: &[MechanismKind],
    epsilons: &[f64],
    seeds: &[u64],
) -> Vec<ExperimentConfig> {
    let mechanisms = if mechanisms.is_empty() {
        std::slice::from_ref(&base.mechanism)
    } else {
        mechanisms
    };
    let epsilons = if epsilons.is_empty() {
        std::slice::from_ref(&base.epsilon)
    } else {
        epsilons
    };
    let seeds = if seeds.is_empty() {
        std::slice::from_ref(&base.seed)
    } else {
        seeds
    };
    let mut out = Vec::with_capacity(mechanisms.len() * epsilons.len() * seeds.len());
    for &m in mechanisms {
        for &e in epsilons {
            for &s in seeds {
                out.push(ExperimentConfig {
                    mechanism: m,
                    epsilon: e,
                    seed: s,
                    ..base.clone()
                });
            }
        }
    }
    out
}
