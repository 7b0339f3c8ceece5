//! Transactional storage and parallel rewriting of quantum circuits.

pub mod equiv;
pub mod error;
pub mod executor;
pub mod gate;
pub mod partition;
pub mod perf;
pub mod qasm;
pub mod store;
pub mod templates;
pub mod transpile;

#[cfg(test)]
mod testutil;

pub use error::{Result, StoreError};
pub use gate::{GateId, GateOp, GateRecord, GateType, PortRef, Postfix};
pub use store::{CircuitTable, Database};
