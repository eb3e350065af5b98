//! Equation discovery for power-system dynamic models.
//!
//! Candidate equation skeletons are proposed by a text generator, checked
//! against a small expression language, fitted to trajectory data and kept
//! in an island archive whose best members seed later prompts.

pub mod archive;
pub mod bench;
pub mod commands;
pub mod dsl;
pub mod engine;
pub mod eval;
pub mod fit;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod replay;
pub mod sindy;
