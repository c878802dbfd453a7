//! Server side of a round: selection, broadcast, collection, optional
//! shuffling, aggregation and privacy spend.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::client::{local_update, ClientConfig, Penalty};
use super::data::DatasetShard;
use super::model::{LossModel, ModelVector, ShardObjective};
use crate::accountant::{self, AccountingMode, PrivacyBudget, RdpCurve, RdpLedger, SpendOutcome};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{self, MechanismParams};
use crate::mode_connectivity::{self, CurveKind, CurveTrainConfig};
use crate::par::{self, Execution};
use crate::rng::{NoiseStream, Purpose, StreamKey, SERVER};

/// Server-side merge of the collected client models.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator {
    FedAvg,
    ModeConnect(ModeConnectSettings),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConnectSettings {
    pub curve: CurveKind,
    pub train: CurveTrainConfig,
    /// Smoothness constant for the closed-form bend, used when no public
    /// evaluation shard is available.
    pub lipschitz: Option<f64>,
}

impl Default for ModeConnectSettings {
    fn default() -> Self {
        Self {
            curve: CurveKind::PolygonalChain,
            train: CurveTrainConfig::default(),
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelVector,
    pub round: usize,
    /// Aggregation weight per client id; sums to 1.
    pub weights: Vec<f64>,
    pub aggregator: Aggregator,
    pub selection_fraction: f64,
    pub shuffle: bool,
    /// Apply the heterogeneous-ε penalty during local training.
    pub heterogeneous: bool,
    pub exec: Execution,
    /// Most recent model returned by each client.
    pub last_models: BTreeMap<usize, ModelVector>,
}

impl ServerState {
    pub fn new(
        global: ModelVector,
        weights: Vec<f64>,
        aggregator: Aggregator,
        selection_fraction: f64,
    ) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid(
                "weights",
                "need one non-negative weight per client",
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("weights", "weights must not all be zero"));
        }
        if !(selection_fraction > 0.0 && selection_fraction <= 1.0) {
            return Err(invalid("selection_fraction", "must lie in (0, 1]"));
        }
        Ok(Self {
            global,
            round: 0,
            weights: weights.iter().map(|w| w / total).collect(),
            aggregator,
            selection_fraction,
            shuffle: false,
            heterogeneous: false,
            exec: Execution::default(),
            last_models: BTreeMap::new(),
        })
    }

    /// Weights proportional to shard sizes.
    pub fn data_weights(clients: &[ClientConfig]) -> Vec<f64> {
        clients.iter().map(|c| c.shard.len() as f64).collect()
    }

    pub fn selection_size(&self) -> usize {
        let n = self.weights.len();
        // tolerate representation error, e.g. 0.3 * 10
        ((self.selection_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
    }
}

/// Per-client privacy ledger and the curve charged for its noise.
#[derive(Debug, Clone)]
pub struct ClientAccount {
    pub ledger: RdpLedger,
    pub curve: RdpCurve,
    pub budget: PrivacyBudget,
    pub mode: AccountingMode,
    pub mechanism: MechanismParams,
    /// Post-hoc shuffle-amplified ledger, tracked when shuffling with direct
    /// accounting and a pure-DP mechanism.
    pub shuffled: Option<RdpLedger>,
}

impl ClientAccount {
    pub fn new(
        mechanism: MechanismParams,
        budget: PrivacyBudget,
        grid: &accountant::AlphaGrid,
        mode: AccountingMode,
    ) -> Result<Self> {
        Ok(Self {
            ledger: RdpLedger::new(grid.clone()),
            curve: accountant::accounting_curve(&mechanism, grid, mode)?,
            budget,
            mode,
            mechanism,
            shuffled: None,
        })
    }

    /// Charges for `noisy_steps` mechanism applications in one round.
    fn charges(&self, noisy_steps: usize) -> usize {
        match self.mode {
            AccountingMode::Direct => noisy_steps,
            AccountingMode::Shuffled { .. } => usize::from(noisy_steps > 0),
        }
    }

    pub fn epsilon(&self) -> Result<f64> {
        Ok(self.ledger.to_dp(self.budget.delta)?.0)
    }
}

/// Data shared by every round of one simulation.
pub struct RoundEnv<'a> {
    pub seed: u64,
    /// Union of client training data (for the reported training loss).
    pub train: &'a DatasetShard,
    pub test: &'a DatasetShard,
    pub public_eval: Option<&'a DatasetShard>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub cumulative_epsilon: f64,
    pub train_loss: f64,
    pub eval_accuracy: f64,
    pub mechanism: String,
    pub noise_scale: f64,
    pub seed: u64,
    pub selected: Vec<usize>,
    /// Post-hoc shuffle-amplified ε, when tracked.
    pub shuffled_epsilon: Option<f64>,
}

/// Weighted average with weights renormalized over the given models.
pub fn fedavg_aggregate(models: &[ModelVector], weights: &[f64]) -> Result<ModelVector> {
    let first = models
        .first()
        .ok_or_else(|| invalid("models", "need at least one model"))?;
    if weights.len() != models.len() {
        return Err(invalid("weights", "one weight per model"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid(
            "weights",
            "weights must be finite and non-negative",
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("weights", "weights must not all be zero"));
    }
    let mut out = ModelVector::zeros(first.dim());
    for (m, w) in models.iter().zip(weights) {
        m.check_dim(first.dim())?;
        if *w > 0.0 {
            out.axpy(w / total, m);
        }
    }
    Ok(out)
}

/// Uniformly permutes `(client id, model)` pairs jointly.
pub fn shuffle_updates(
    mut updates: Vec<(usize, ModelVector)>,
    stream: &mut NoiseStream,
) -> Vec<(usize, ModelVector)> {
    updates.shuffle(stream);
    updates
}

/// `accounts[i]` belongs to `clients[i]`; `None` means that client trains
/// without noise and reports ε = ∞.
pub fn run_round<M: LossModel>(
    server: &mut ServerState,
    clients: &[ClientConfig],
    model: &M,
    accounts: &mut [Option<ClientAccount>],
    env: &RoundEnv<'_>,
) -> Result<RoundMetrics> {
    if clients.len() != server.weights.len() || accounts.len() != clients.len() {
        return Err(invalid(
            "clients",
            "clients, weights and accounts must align",
        ));
    }
    let round = server.round;
    let seed = env.seed;

    // polling
    let n_sel = server.selection_size();
    let mut sel_stream = NoiseStream::derive(seed, round as u64, SERVER, Purpose::Selection);
    let mut selected: Vec<usize> =
        rand::seq::index::sample(&mut sel_stream, clients.len(), n_sel).into_vec();
    selected.sort_unstable();

    // budget check before any client releases anything
    for &k in &selected {
        if let Some(acct) = &accounts[k] {
            let mut trial = acct.ledger.clone();
            let worst = acct.charges(clients[k].local_epochs);
            if trial.spend_n(&acct.curve, worst, &acct.budget)? == SpendOutcome::Halt {
                return Err(Error::BudgetExhausted { round, client: k });
            }
        }
    }

    let penalty = if server.heterogeneous {
        let top = selected
            .iter()
            .copied()
            .fold(None::<usize>, |best, k| match best {
                Some(b) if clients[b].epsilon >= clients[k].epsilon => Some(b),
                _ => Some(k),
            })
            .expect("selection is non-empty");
        Some(Penalty {
            w_max: server
                .last_models
                .get(&top)
                .cloned()
                .unwrap_or_else(|| server.global.clone()),
            eps_max: clients[top].epsilon,
        })
    } else {
        None
    };

    // client training
    let global = server.global.clone();
    let outcomes = par::map(server.exec, &selected, |&k| {
        local_update(
            &clients[k],
            &global,
            model,
            seed,
            round as u64,
            penalty.as_ref(),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // serial barrier: spend
    let n_shuffled = selected.len() as u64;
    for (&k, out) in selected.iter().zip(&outcomes) {
        if let Some(acct) = accounts[k].as_mut() {
            let times = acct.charges(out.noisy_steps);
            if acct.ledger.spend_n(&acct.curve, times, &acct.budget)? == SpendOutcome::Halt {
                return Err(Error::BudgetExhausted { round, client: k });
            }
            if server.shuffle && acct.mode == AccountingMode::Direct && out.noisy_steps > 0 {
                if let Some(eps0) = mechanisms::pure_dp_epsilon(&acct.mechanism) {
                    let curve = RdpCurve::shuffled(
                        eps0 * out.noisy_steps as f64,
                        n_shuffled,
                        acct.ledger.grid(),
                    )?;
                    acct.shuffled
                        .get_or_insert_with(|| RdpLedger::new(acct.ledger.grid().clone()))
                        .compose(&curve)?;
                }
            }
        }
    }

    let mut updates: Vec<(usize, ModelVector)> = selected
        .iter()
        .copied()
        .zip(outcomes.into_iter().map(|o| o.model))
        .collect();
    if server.shuffle {
        let mut s = NoiseStream::derive(seed, round as u64, SERVER, Purpose::Shuffle);
        updates = shuffle_updates(updates, &mut s);
    }

    let models: Vec<ModelVector> = updates.iter().map(|(_, m)| m.clone()).collect();
    let new_global = match &server.aggregator {
        Aggregator::FedAvg => {
            let w: Vec<f64> = updates.iter().map(|(k, _)| server.weights[*k]).collect();
            fedavg_aggregate(&models, &w)?
        }
        Aggregator::ModeConnect(settings) => {
            let key = StreamKey::new(seed, round as u64, SERVER, Purpose::CurveTraining);
            match (env.public_eval, settings.lipschitz) {
                (Some(eval), _) => {
                    let objective = ShardObjective::new(model, eval);
                    mode_connectivity::mode_connect_aggregate(
                        &models,
                        settings.curve,
                        &settings.train,
                        &objective,
                        key,
                        server.exec,
                    )?
                }
                (None, Some(l)) => {
                    let w: Vec<f64> = updates.iter().map(|(k, _)| server.weights[*k]).collect();
                    let v_bar = fedavg_aggregate(&models, &w)?;
                    let theta = mode_connectivity::theta_star(l, &global, &v_bar)?;
                    let r: f64 =
                        NoiseStream::derive(seed, round as u64, SERVER, Purpose::Bezier).random();
                    mode_connectivity::bezier_fedavg_update(&v_bar, &theta, &global, r)?
                }
                (None, None) => {
                    let no_training = CurveTrainConfig {
                        steps: 0,
                        ..settings.train
                    };
                    let objective = NullObjective(global.dim());
                    mode_connectivity::mode_connect_aggregate(
                        &models,
                        settings.curve,
                        &no_training,
                        &objective,
                        key,
                        server.exec,
                    )?
                }
            }
        }
    };

    for (k, m) in updates {
        server.last_models.insert(k, m);
    }
    server.global = new_global;
    server.round += 1;

    let cumulative_epsilon = system_epsilon(accounts)?;
    let shuffled_epsilon = shuffled_system_epsilon(accounts)?;
    let (mechanism, noise_scale) = describe_noise(accounts);
    Ok(RoundMetrics {
        round: server.round,
        cumulative_epsilon,
        train_loss: model.loss(&server.global, env.train),
        eval_accuracy: model.accuracy(&server.global, env.test),
        mechanism,
        noise_scale,
        seed,
        selected,
        shuffled_epsilon,
    })
}

/// Maximum ε over all clients; ∞ if any client is unaccounted.
pub fn system_epsilon(accounts: &[Option<ClientAccount>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for a in accounts {
        match a {
            Some(a) => worst = worst.max(a.epsilon()?),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}

fn shuffled_system_epsilon(accounts: &[Option<ClientAccount>]) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for a in accounts.iter().flatten() {
        if let Some(l) = &a.shuffled {
            let e = l.to_dp(a.budget.delta)?.0;
            worst = Some(worst.map_or(e, |w| w.max(e)));
        }
    }
    Ok(worst)
}

fn describe_noise(accounts: &[Option<ClientAccount>]) -> (String, f64) {
    match accounts.first() {
        Some(Some(a)) => (a.mechanism.kind.name().to_string(), a.mechanism.scale),
        _ => ("none".to_string(), 0.0),
    }
}

struct NullObjective(usize);

impl crate::fl::model::Objective for NullObjective {
    fn value(&self, _: &ModelVector) -> f64 {
        0.0
    }
    fn gradient(&self, _: &ModelVector) -> ModelVector {
        ModelVector::zeros(self.0)
    }
}
