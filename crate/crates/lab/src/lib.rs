//! Experiment drivers, persistence and the command-line interface for the
//! hierarchical Coulomb gas simulator.
//!
//! The heavy mathematics lives in `hcg-core`; this crate adds file
//! formats (CSV reports with JSON metadata sidecars, a binary partition
//! cache), replica-parallel execution with deterministic reductions, and
//! the `hcg` binary.

pub mod cache;
pub mod cli;
pub mod error;
pub mod report;
pub mod run;

pub use error::{exit_code, LabError};
