//! Prompt assembly and skeleton generation.

mod backend;
mod completion;
mod prompt;

pub use backend::{
    generate, GenerationRequest, Generator, HttpBackend, HttpConfig, MockBackend, MockScript,
};
pub use completion::{parse_completion, Completion, Requirement, REQUIREMENTS_TAG, SKELETON_TAG};
pub use prompt::{build_prompt, PromptContract};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("mock script: {0}")]
    Script(String),
}
