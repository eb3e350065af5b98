//! Ground-truth data from single-machine-infinite-bus generator models.

mod dataset;
mod models;
mod rk4;
mod simulate;

use std::path::Path;

use thiserror::Error;

pub use dataset::{differentiate, make_dataset, DatasetMeta, TrajectoryDataset};
pub use models::{BenchmarkModel, Inputs, MachineParams, ModelId, Signals};
pub use rk4::Rk4;
pub use simulate::{
    equilibrium, simulate, simulate_from, Disturbance, DisturbanceKind, FullRecord, NoiseAmplitude, ScenarioConfig,
    ScenarioSet,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("no equilibrium after {iterations} Newton iterations (residual {residual:e})")]
    EquilibriumNotFound { iterations: usize, residual: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("invalid scenario {0}")]
    InvalidScenario(String),
    #[error("io: {0}")]
    Io(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

impl BenchError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> BenchError {
        BenchError::Io(format!("{}: {e}", path.display()))
    }
}

/// Column holding the numerical derivative of `state`.
pub fn derivative_name(state: &str) -> String {
    format!("d{state}_dt")
}

/// Simulates `scen` and builds its dataset.
pub fn generate(model: &BenchmarkModel, scen: &ScenarioConfig) -> Result<TrajectoryDataset, BenchError> {
    let record = simulate(model, scen)?;
    Ok(make_dataset(model, record, scen))
}
