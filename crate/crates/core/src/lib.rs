//! Local incremental stationarity scheme (LISS) for rate-independent systems
//! with unidirectional 1-homogeneous dissipation, together with a P1 finite
//! element partial-damage model and verification tooling.

pub mod commands;
pub mod config;
pub mod damage;
pub mod error;
pub mod fem;
pub mod liss;
pub mod mesh;
pub mod output;
pub mod oracle;
pub mod ris;
pub mod sparse;
pub mod ssn;
pub mod verify;

pub use error::{Error, Result};
