//! Synthetic data and Monte Carlo experiments.

pub mod dgp;
pub mod experiments;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::DataError;
use crate::inference::InferenceError;
use crate::spectests::{BalanceError, McCraryError};
use crate::windowing::WindowingError;

pub use dgp::{generate, CovariateDgp, DgpSpec, EffectSpec, Hinge, Manipulation, RunningDist};
pub use experiments::{
    run_balance_size_experiment, run_coverage_experiment, run_experiment, run_fwer_experiment, run_mccrary_experiment,
    run_prop1_check, run_prop2_check, run_size_experiment, ExperimentConfig, ExperimentFile, ExperimentReport,
    InferenceConfig, McCraryExpectation, Metric, SweepConfig, WindowChoice,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Windowing(#[from] WindowingError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    McCrary(#[from] McCraryError),
}

/// Seed for item `index` of a family keyed by `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ 0x5eed_5eed_5eed_5eed);
    rng.set_stream(index);
    rng.next_u64()
}
