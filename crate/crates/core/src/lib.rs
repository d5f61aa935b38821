//! Physics engine for stress-tuned lithium donor qubits in silicon.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod levels;
pub mod materials;
pub mod operating;
pub mod oracle;
pub mod phonons;
pub mod pulses;
pub mod quadrature;
pub mod rates;
pub mod schedule;
pub mod units;

pub use error::{Error, Result};
