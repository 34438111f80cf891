//! Simulation and verification toolkit for the (2+1)-dimensional
//! generalized solid-on-solid model with gradient potential |grad phi|^p,
//! p in [1, inf].
//!
//! The crate is organized along the pipeline: [`lattice`] provides the
//! geometry, [`model`] the Hamiltonian and boundary conditions, [`exact`]
//! small-system oracles (enumeration and transfer), [`contours`] the
//! dual-lattice combinatorics (contours and the cluster decomposition),
//! [`sampler`] Markov-chain Monte Carlo including monotone couplings and
//! multilevel splitting, and [`analysis`] the derived observables: entropic
//! repulsion heights, surface tension, staircase monotonicity checks and
//! large-deviation rate estimates.

pub mod analysis;
pub mod contours;
pub mod error;
pub mod exact;
pub mod lattice;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
