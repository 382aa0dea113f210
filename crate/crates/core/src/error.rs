//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the codec, accountant, planner, wire format, and simulator.
#[derive(Debug, Error)]
pub enum BqError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Uniform quantization alone (m = 0) carries no differential-privacy
    /// guarantee, so there is no finite epsilon to report.
    #[error("no privacy guarantee: binomial trials m = 0")]
    NoPrivacyGuarantee,

    #[error("corrupt message: {0}")]
    CorruptMessage(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("infeasible bit budget {budget}: at least {min_bits:.3} bits required")]
    InfeasibleBudget { budget: u32, min_bits: f64 },

    #[error("incomplete round: expected {expected} client messages, got {got}")]
    IncompleteRound { expected: usize, got: usize },

    #[error("training diverged at round {round}: loss {loss:.6e} exceeds guard")]
    Diverged { round: u64, loss: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BqError>;
