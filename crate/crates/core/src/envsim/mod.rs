//! The reward-issuing environment and finite-MDP oracles.

mod classify;
mod mdp;

pub use classify::{ClassificationEnv, EnvConfig, Environment, RewardSchedule, StepOutcome};
pub use mdp::{
    bellman_residual, bellman_solve, monte_carlo_return, random_mdp, three_state_chain,
    FiniteMdp, Outcome,
};

pub use crate::dataset::LabelLedger;
