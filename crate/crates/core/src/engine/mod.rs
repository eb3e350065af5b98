//! The discovery loops: generate, filter, fit, archive, extend, terminate.

mod config;
mod library;
mod loops;
mod trigger;

use thiserror::Error;

pub use config::{GeneratorConfig, RunConfig};
pub use library::{SignalCatalog, VarKind, VariableInfo, VariableLibrary};
pub use loops::{
    ae_targets, discover, extend_variables, run_ae_loop, run_de_loop, DiscoveryOutcome, IterationRecord, LoopOutcome,
    LoopState, LoopStatus, Observer,
};
pub use trigger::{check_trigger, Trigger, TriggerConfig};

use crate::bench::BenchError;
use crate::dsl::{ParseError, TargetKind};
use crate::eval::EvalError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{loop_kind} loop: generator produced nothing ({failures} consecutive failures)")]
    GenerationExhausted { loop_kind: TargetKind, failures: usize },
    #[error("time budget exceeded after {elapsed_secs:.1} s")]
    BudgetExceeded { elapsed_secs: f64 },
    #[error("best DE skeleton references no algebraic variable")]
    NoAlgebraicTargets,
    #[error("signal catalog exhausted")]
    CatalogExhausted,
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dsl(ParseError),
}
