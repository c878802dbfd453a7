//! Differentially private federated learning with interchangeable noise
//! mechanisms.
//!
//! * [`mechanisms`]: Gaussian, Laplace and Staircase noise with exact Rényi
//!   curves.
//! * [`accountant`]: Rényi ledgers, (ε, δ) conversion, noise calibration and
//!   shuffle amplification.
//! * [`fl`]: a deterministic FedAvg-style simulator with per-example clipping.
//! * [`mode_connectivity`]: curve-based model merging.
//! * [`bounds`]: expected ℓ1 perturbation of the trained model.
//! * [`experiment`]: config parsing, end-to-end runs and sweeps.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod mechanisms;
pub mod mode_connectivity;
pub mod par;
pub mod rng;

pub use accountant::{
    calibrate_noise, AccountingMode, AlphaGrid, CalibrationResult, PrivacyBudget, RdpCurve,
    RdpLedger, SpendOutcome,
};
pub use error::{Error, Result};
pub use mechanisms::{MechanismKind, MechanismParams};
pub use par::Execution;
pub use rng::{NoiseStream, Purpose, StreamKey};
