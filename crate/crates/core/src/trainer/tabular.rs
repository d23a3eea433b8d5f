//! Tabular TD(0) policy evaluation on a [`FiniteMdp`].

use alloc::vec;
use alloc::vec::Vec;

use super::td_error;
use crate::envsim::FiniteMdp;
use crate::ndmath::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularTdConfig {
    /// Initial step size, in `(0, 1]`.
    pub alpha: f64,
    pub gamma: f64,
    pub sweeps: usize,
    /// Step size at sweep `k` is `alpha / (1 + decay * k)`.
    pub decay: f64,
}

impl TabularTdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::config("decay", "must be non-negative"));
        }
        Ok(())
    }

    pub fn alpha_at(&self, sweep: usize) -> f64 {
        self.alpha / (1.0 + self.decay * sweep as f64)
    }
}

/// `V(s) += alpha [r + gamma V(s') - V(s)]`; a terminal `s'` (`None`)
/// contributes 0.
pub fn tabular_td_update(
    values: &mut [f64],
    s: usize,
    s_next: Option<usize>,
    reward: f64,
    alpha: f64,
    gamma: f64,
) {
    let v_next = s_next.map_or(0.0, |n| values[n]);
    let delta = td_error(reward, v_next, values[s], gamma, s_next.is_none());
    values[s] += alpha * delta;
}

fn successor(mdp: &FiniteMdp, next: usize) -> Option<usize> {
    (!mdp.is_terminal(next)).then_some(next)
}

/// One in-place sweep where each state moves by `alpha` times its
/// policy-and-kernel-weighted mean TD error.
pub fn expected_td_sweep(mdp: &FiniteMdp, values: &mut [f64], alpha: f64) {
    let gamma = mdp.gamma();
    for s in 0..mdp.states() {
        if mdp.is_terminal(s) {
            continue;
        }
        let mut mean_delta = 0.0;
        for a in 0..mdp.actions() {
            let pa = mdp.policy(s, a);
            if pa == 0.0 {
                continue;
            }
            for o in mdp.outcomes(s, a) {
                let next = successor(mdp, o.next);
                let v_next = next.map_or(0.0, |n| values[n]);
                mean_delta += pa * o.prob * td_error(o.reward, v_next, values[s], gamma, next.is_none());
            }
        }
        values[s] += alpha * mean_delta;
    }
}

/// Expected-update TD with a decaying step size, from `V = 0`.
pub fn td_evaluate_swept(mdp: &FiniteMdp, cfg: &TabularTdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut values = vec![0.0; mdp.states()];
    for k in 0..cfg.sweeps {
        expected_td_sweep(mdp, &mut values, cfg.alpha_at(k));
    }
    Ok(values)
}

/// Sample-based TD(0) along trajectories of the MDP's policy. Each sweep
/// starts one trajectory from every nonterminal state and follows it for
/// `horizon` transitions (or until a terminal state). The step size decays
/// per sweep as in [`TabularTdConfig::alpha_at`].
pub fn td_evaluate_sampled(
    mdp: &FiniteMdp,
    cfg: &TabularTdConfig,
    horizon: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut values = vec![0.0; mdp.states()];
    for k in 0..cfg.sweeps {
        let alpha = cfg.alpha_at(k);
        for start in 0..mdp.states() {
            let mut s = start;
            for _ in 0..horizon {
                if mdp.is_terminal(s) {
                    break;
                }
                let (_, next, reward) = mdp.sample(s, rng);
                tabular_td_update(&mut values, s, successor(mdp, next), reward, alpha, cfg.gamma);
                s = next;
            }
        }
    }
    Ok(values)
}
