//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A model callback produced a non-finite value; the offending inputs
    /// are attached for reproduction.
    #[error("model error: {message}; inputs {inputs:?}")]
    Model { message: String, inputs: Vec<f64> },

    /// A simulated state left the finite range. Aborts are preferred to
    /// clamping because clamping silently destroys rate measurements.
    #[error("blow-up in process {process} at step {step}, particle {particle}")]
    BlowUp {
        process: &'static str,
        step: usize,
        particle: usize,
    },

    /// An operation needs derivative callbacks the model does not carry.
    #[error("missing capability: {0}")]
    Capability(String),

    #[error("evaluation error: non-finite value at sample index {index}")]
    NonFinite { index: usize },

    #[error("unsupported dimension {got} (need {need})")]
    Dimension { got: usize, need: usize },

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
