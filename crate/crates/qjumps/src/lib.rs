//! Simulator for motion-induced quantum jumps of a trapped three-level atom.

pub mod cli;
pub mod cooling;
pub mod error;
pub mod hilbert;
pub mod internal;
pub mod jumps;
pub mod lamb_dicke;
pub mod linalg;
pub mod liouville;
pub mod spectrum;

pub use error::{Error, Result};
