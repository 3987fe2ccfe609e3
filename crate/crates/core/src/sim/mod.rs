//! Continuous-time simulation of the mobile-server network and the
//! estimators built on top of it.

mod config;
mod engine;
mod estimators;
mod export;
mod mixing;
mod state;
mod trajectory;

use thiserror::Error;

pub use config::{ArrivalLaw, Horizon, SimConfig, SwapNormalization};
pub use engine::{Event, EventCounts, EventKind, Simulator};
pub use estimators::{
    default_block_events, estimate_drift, exit_probability_estimate, jump_target_uniformity,
    DriftEstimate, DriftOptions, JumpUniformity, ProportionEstimate,
};
pub use export::{write_event_log_csv, write_trajectory_csv};
pub use mixing::{
    exact_permutation_mixing, exact_placement_mixing, permutation_mixing, ExactMixing, MixingEstimate,
    MAX_PLACEMENT_VERTICES, MIN_MIXING_TRIALS,
};
pub use state::{CustomerRecord, NetworkState, QueueState};
pub use trajectory::{embedded_chain_samples, simulate, CompletedCustomer, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon must be positive")]
    NonPositiveHorizon,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid arrival law: {0}")]
    InvalidArrivalLaw(String),
    #[error("inconsistent initial state: {0}")]
    InconsistentState(String),
    #[error("trajectory was recorded without the event log")]
    NoEventLog,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("at least {min} trials required (got {got})")]
    TooFewTrials { got: usize, min: usize },
}
