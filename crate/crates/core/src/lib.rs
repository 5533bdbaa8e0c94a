//! Exact simulator and statistics toolkit for the two-dimensional
//! hierarchical Coulomb gas on `[0,1)^2`.
//!
//! The crate is organized around the dyadic self-similarity of the model:
//!
//! * [`geom`] — dyadic squares, disks, square classification and exact
//!   circle/square overlap areas;
//! * [`energy`] — the configuration Hamiltonian in pairwise and
//!   dyadic-count form;
//! * [`partition`] — exact log-space partition function tables and the
//!   split law of child counts, computed by dynamic programming;
//! * [`sampler`] — exact configuration sampling by recursive application
//!   of the split law down the quadtree;
//! * [`mcmc`] — an independent Metropolis oracle used to validate the
//!   exact sampler at small point counts;
//! * [`stats`] — charge-fluctuation statistics: discrepancies, variance
//!   and tail scans, martingale decomposition, overcrowding;
//! * [`tilt`] — exponentially tilted split laws and likelihood-ratio
//!   estimators for rare discrepancy events.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all IO, file
//! formats and parallel drivers live in the companion `hcg-lab` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod energy;
mod error;
#[cfg(any(test, feature = "exhaustive"))]
pub mod exhaustive;
pub mod geom;
pub mod logreal;
pub(crate) mod math;
pub mod mcmc;
pub mod numeric;
pub mod partition;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod tilt;

pub use error::{Error, Result};
pub use logreal::LogReal;
