use thiserror::Error;

use crate::fusion::Modality;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("basis index {index} out of range for dimension {dim}")]
    BasisOutOfRange { index: usize, dim: usize },
    #[error("register size {0} unsupported")]
    InvalidRegister(usize),
    #[error("amplitude vector length {0} is not a power of two >= 2")]
    InvalidDimension(usize),
    #[error("state not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("all weighted sensor components are zero; state cannot be normalized")]
    AllZeroInput,
    #[error("{needed} sensor components exceed the {capacity} amplitudes of the register")]
    CapacityExceeded { needed: usize, capacity: usize },
    #[error("circuit has {circuit} qubits but the state has {state}")]
    QubitMismatch { circuit: usize, state: usize },
    #[error("invalid {modality:?} frame: {reason}")]
    InvalidFrame { modality: Modality, reason: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("step called on a finished episode")]
    StepAfterDone,

    #[error("non-finite gradient component")]
    NonFiniteGradient,
    #[error("training batch is empty")]
    EmptyBatch,

    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
