//! Policy-gradient representation learning on labelled images.
//!
//! The crate is `no_std` and only needs `alloc`. It carries the numerical
//! core of the testbed:
//!
//! * [`ndmath`]: dense vectors and matrices, activations, a reproducible RNG.
//! * [`dataset`]: IDX decoding from byte slices, epoch permutations, parity relabelling.
//! * [`envsim`]: the reward-issuing classification environment with its label
//!   ledger, and finite-MDP oracles (exact Bellman solve, Monte-Carlo returns).
//! * [`nets`]: the shared-trunk actor-critic network and its analytic gradients.
//! * [`trainer`]: the actor-critic loop, the supervised baseline, tabular TD.
//! * [`probe`]: linear probes fit on frozen trunk features.
//!
//! File IO, checkpoint encoding, configuration files and the command line live
//! in the companion `reward-probe` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod envsim;
mod error;
pub mod ndmath;
pub mod nets;
pub mod probe;
pub mod trainer;

pub use error::{Error, Result};
