use thiserror::Error;

use crate::gate::GateId;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("circuit label `{0}` already exists")]
    DuplicateLabel(String),
    #[error("circuit label `{0}` not found")]
    UnknownLabel(String),
    #[error("invalid label `{0}`: must be non-empty and free of commas and newlines")]
    InvalidLabel(String),
    #[error("a circuit needs at least one qubit")]
    NoQubits,
    #[error("gate {0} not found")]
    NotFound(GateId),
    #[error("gate {0} is locked by another transaction")]
    LockConflict(GateId),
    #[error("gate {0} is not locked by this transaction")]
    LockNotHeld(GateId),
    #[error("splice pair {from:?} -> {to:?} is not adjacent")]
    NotAdjacent { from: String, to: String },
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: u32, num_qubits: usize },
    #[error("integrity violation at gates {ids:?}: {message}")]
    Integrity { ids: Vec<GateId>, message: String },
    #[error("table changed since the cursor or partition was created")]
    Stale,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub(crate) fn integrity(ids: impl Into<Vec<GateId>>, message: impl Into<String>) -> Self {
        StoreError::Integrity { ids: ids.into(), message: message.into() }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
