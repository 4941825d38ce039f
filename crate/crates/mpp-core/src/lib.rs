//! Markov persuasion processes with endogenous receiver beliefs.
//!
//! A sender observes a Markov chain over states and recommends actions to a
//! stream of myopic receivers. This crate holds the instance model, the
//! induced slice chains, obedience checks for each information model, a dense
//! simplex solver, the benchmark LPs, a local solver for lagged information,
//! the robust mechanism construction and a trajectory simulator.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod benchmark;
pub mod chain;
pub mod error;
pub mod generate;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod mechanism;
pub mod partial;
pub mod persuasion;
pub mod robust;
pub mod sim;

pub use benchmark::{check_equality_condition, solve_benchmark, EqualityReport, PersuasionSolution};
pub use chain::{
    induced_chain, lag_distance, long_run_reward, sender_preferred_invariant, spectral_quantities,
    stationary_distribution, InvariantDistribution, SpectralQuantities,
};
pub use error::MppError;
pub use instance::{check_unichain, receiver_best_action, validate_instance, IncrementalUtility, MppInstance, Violation};
pub use mechanism::SignalingMechanism;
pub use persuasion::{check_persuasive, InfoModel, PersuasionCheck};

/// Default bound on the slice length of enumerated chains. Overridable by callers.
pub const DEFAULT_SLICE_CAP: usize = 4;

/// Positivity threshold below which a probability is treated as zero.
pub const POSITIVE: f64 = 1e-12;
