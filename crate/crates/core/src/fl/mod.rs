//! Deterministic federated-learning simulator.

pub mod client;
pub mod data;
pub mod model;
pub mod server;

pub use client::{
    clip_gradient, heterogeneous_update, local_update, ClientConfig, LocalOutcome, Penalty,
};
pub use data::{split_iid, DatasetShard, FederatedData, SyntheticBlobs};
pub use model::{LogisticRegression, LossModel, ModelVector, Objective, ShardObjective};
pub use server::{
    fedavg_aggregate, run_round, shuffle_updates, Aggregator, ClientAccount, ModeConnectSettings,
    RoundEnv, RoundMetrics, ServerState,
};
