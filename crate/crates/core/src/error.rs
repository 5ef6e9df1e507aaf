use thiserror::Error;

/// Errors raised across the simulator, diagnostics and I/O layers.
#[derive(Debug, Error)]
pub enum ZkError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("synthesis is not real: max imaginary part {imag:.3e} (scale {scale:.3e})")]
    NonRealSynthesis { imag: f64, scale: f64 },

    #[error("exponential overflow: rate {rate:.3e} over time {time:.3e}")]
    Overflow { rate: f64, time: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("slab starting at t = {start:.6} failed to converge after {halvings} halvings; change history {history:?}")]
    SlabFailure {
        start: f64,
        halvings: u32,
        history: Vec<f64>,
    },

    #[error("rejected check configuration: {0}")]
    Rejected(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ZkError>;
