//! Simulation of a broadband Raman quantum memory in room-temperature
//! hydrogen gas: rovibrational level structure, multi-J coherence
//! evolution, linearized Maxwell-Bloch write/read stages, and the scan,
//! calibration and fitting harness around them.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod error;
pub mod harness;
pub mod mbsolver;
pub mod spectroscopy;
pub mod units;

pub use error::{Error, Result};
