use std::fmt;
use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid k={k} (must be in 1..={max})")]
    InvalidK { k: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("record {0} has no text feature")]
    MissingText(usize),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged {
        step: u64,
        loss: f64,
        /// Checkpoint bytes of the last state with a finite loss.
        last_good: CheckpointBytes,
    },

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serialized checkpoint carried by an error; `Debug` prints only its size.
#[derive(Clone, PartialEq, Eq)]
pub struct CheckpointBytes(pub Vec<u8>);

impl fmt::Debug for CheckpointBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CheckpointBytes({} bytes)", self.0.len())
    }
}
