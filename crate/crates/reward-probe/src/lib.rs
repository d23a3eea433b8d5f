//! Files, experiment configs and the command-line front end around
//! `reward-probe-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod idx;
pub mod manifest;
pub mod mdp_json;
pub mod metrics;
pub mod plot;
pub mod run;

pub use error::{Error, Result};
