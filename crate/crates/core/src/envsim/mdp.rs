//! Finite MDPs with an explicit kernel, used as oracles for the learning
//! machinery: exact policy evaluation and sampled returns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ndmath::{solve, Matrix, Rng};
use crate::{Error, Result};

/// One `(s', r)` entry of `p(s', r | s, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub next: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    states: usize,
    actions: usize,
    gamma: f64,
    /// Indexed by `s * actions + a`.
    kernel: Vec<Vec<Outcome>>,
    /// `pi(a | s)` at `s * actions + a`.
    policy: Vec<f64>,
    terminal: Vec<bool>,
}

const PROB_TOL: f64 = 1e-12;

impl FiniteMdp {
    /// `kernel[s][a]` lists outcomes; `policy[s][a]` is `pi(a|s)`. Terminal
    /// states have value 0 and end sampled episodes; their kernel rows are
    /// ignored and may be empty.
    pub fn new(
        gamma: f64,
        kernel: Vec<Vec<Vec<Outcome>>>,
        policy: Vec<Vec<f64>>,
        terminal: Vec<usize>,
    ) -> Result<Self> {
        let states = kernel.len();
        if states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        let actions = kernel[0].len();
        if actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} outside [0, 1)")));
        }
        if policy.len() != states {
            return Err(Error::InvalidMdp(format!(
                "policy has {} rows for {states} states",
                policy.len()
            )));
        }
        let mut is_terminal = vec![false; states];
        for &t in &terminal {
            if t >= states {
                return Err(Error::InvalidMdp(format!("terminal state {t} out of range")));
            }
            is_terminal[t] = true;
        }
        for (s, row) in policy.iter().enumerate() {
            if row.len() != actions {
                return Err(Error::InvalidMdp(format!("policy row {s} has wrong length")));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidMdp(format!("policy row {s} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidMdp(format!("policy row {s} sums to {total}")));
            }
        }
        let mut flat = Vec::with_capacity(states * actions);
        for (s, per_action) in kernel.into_iter().enumerate() {
            if per_action.len() != actions {
                return Err(Error::InvalidMdp(format!("state {s} has wrong action count")));
            }
            for (a, outcomes) in per_action.into_iter().enumerate() {
                if !is_terminal[s] {
                    let mut total = 0.0;
                    for o in &outcomes {
                        if o.next >= states {
                            return Err(Error::InvalidMdp(format!(
                                "({s},{a}) leads to unknown state {}",
                                o.next
                            )));
                        }
                        if !(o.prob.is_finite() && o.prob >= 0.0 && o.reward.is_finite()) {
                            return Err(Error::InvalidMdp(format!("({s},{a}) bad entry")));
                        }
                        total += o.prob;
                    }
                    if (total - 1.0).abs() > PROB_TOL {
                        return Err(Error::InvalidMdp(format!(
                            "({s},{a}) probabilities sum to {total}"
                        )));
                    }
                }
                flat.push(outcomes);
            }
        }
        Ok(FiniteMdp {
            states,
            actions,
            gamma,
            kernel: flat,
            policy: policy.into_iter().flatten().collect(),
            terminal: is_terminal,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.kernel[s * self.actions + a]
    }

    pub fn policy(&self, s: usize, a: usize) -> f64 {
        self.policy[s * self.actions + a]
    }

    /// Policy-averaged expected reward and transition matrix.
    pub fn policy_model(&self) -> (Vec<f64>, Matrix) {
        let n = self.states;
        let mut r = vec![0.0; n];
        let mut p = Matrix::zeros(n, n);
        for s in 0..n {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.actions {
                let pa = self.policy(s, a);
                for o in self.outcomes(s, a) {
                    r[s] += pa * o.prob * o.reward;
                    let cur = p.get(s, o.next);
                    p.set(s, o.next, cur + pa * o.prob);
                }
            }
        }
        (r, p)
    }

    /// Samples one transition from `s`: `(action, next state, reward)`.
    pub fn sample(&self, s: usize, rng: &mut Rng) -> (usize, usize, f64) {
        let a = pick(rng, (0..self.actions).map(|a| self.policy(s, a)));
        let outcomes = self.outcomes(s, a);
        let o = outcomes[pick(rng, outcomes.iter().map(|o| o.prob))];
        (a, o.next, o.reward)
    }

    /// Rewards of one episode from `start`, ending at a terminal state or
    /// after `max_steps` transitions.
    pub fn sample_episode(&self, start: usize, max_steps: usize, rng: &mut Rng) -> Vec<f64> {
        let mut rewards = Vec::new();
        let mut s = start;
        while !self.terminal[s] && rewards.len() < max_steps {
            let (_, next, r) = self.sample(s, rng);
            rewards.push(r);
            s = next;
        }
        rewards
    }
}

fn pick(rng: &mut Rng, weights: impl Iterator<Item = f64>) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `G = sum_i gamma^i R_{i+1}`, accumulated back to front as
/// `G_t = R_{t+1} + gamma G_{t+1}`.
pub fn monte_carlo_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |g, &r| r + gamma * g)
}

/// Exact state values under the MDP's policy: solves
/// `(I - gamma P_pi) V = r_pi` directly.
pub fn bellman_solve(mdp: &FiniteMdp) -> Result<Vec<f64>> {
    let n = mdp.states;
    let (r, p) = mdp.policy_model();
    let mut a = Matrix::identity(n);
    for s in 0..n {
        if mdp.terminal[s] {
            continue;
        }
        for t in 0..n {
            let v = a.get(s, t) - mdp.gamma * p.get(s, t);
            a.set(s, t, v);
        }
    }
    solve(&a, &r)
}

/// Largest per-state violation of `V(s) = E[R + gamma V(s') | s]`.
pub fn bellman_residual(mdp: &FiniteMdp, values: &[f64]) -> f64 {
    let (r, p) = mdp.policy_model();
    (0..mdp.states)
        .map(|s| {
            let backup = if mdp.terminal[s] {
                0.0
            } else {
                r[s] + mdp.gamma * crate::ndmath::dot(p.row(s), values)
            };
            (values[s] - backup).abs()
        })
        .fold(0.0, f64::max)
}

/// A dense random MDP: every `(s, a)` reaches a random subset of states with
/// Dirichlet-like weights and rewards in `[-1, 1]`; the policy is random.
pub fn random_mdp(rng: &mut Rng, states: usize, actions: usize, gamma: f64) -> FiniteMdp {
    let normalised = |rng: &mut Rng, n: usize| {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect::<Vec<f64>>()
    };
    let kernel = (0..states)
        .map(|_| {
            (0..actions)
                .map(|_| {
                    let fan = 1 + rng.below(states as u64) as usize;
                    let probs = normalised(rng, fan);
                    probs
                        .into_iter()
                        .map(|prob| Outcome {
                            prob,
                            next: rng.below(states as u64) as usize,
                            reward: rng.uniform(-1.0, 1.0),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let policy = (0..states).map(|_| normalised(rng, actions)).collect();
    // Renormalisation can leave sums a few ulps off 1, well inside tolerance.
    FiniteMdp::new(gamma, kernel, policy, Vec::new()).expect("random MDP is valid")
}

/// The deterministic chain `A -> B -> C` with rewards 1 then 2 and `C`
/// terminal.
pub fn three_state_chain(gamma: f64) -> FiniteMdp {
    let step = |next, reward| vec![vec![Outcome { prob: 1.0, next, reward }]];
    FiniteMdp::new(
        gamma,
        vec![step(1, 1.0), step(2, 2.0), vec![Vec::new()]],
        vec![vec![1.0]; 3],
        vec![2],
    )
    .expect("chain is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_examples() {
        assert!((monte_carlo_return(&[1.0, 1.0, 10.0], 0.9) - 10.0).abs() < 1e-12);
        assert_eq!(monte_carlo_return(&[3.5, 7.0, -2.0], 0.0), 3.5);
        assert_eq!(monte_carlo_return(&[], 0.9), 0.0);
    }

    #[test]
    fn return_recursion_identity() {
        let mut rng = Rng::new(31);
        for _ in 0..200 {
            let n = 1 + rng.below(40) as usize;
            let rewards: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 10.0)).collect();
            let gamma = rng.next_f64();
            let g0 = monte_carlo_return(&rewards, gamma);
            let g1 = monte_carlo_return(&rewards[1..], gamma);
            assert!((g0 - (rewards[0] + gamma * g1)).abs() < 1e-12);
            let direct: f64 = rewards.iter().enumerate().map(|(i, r)| gamma.powi(i as i32) * r).sum();
            assert!((g0 - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn single_state_self_loop() {
        let mdp = FiniteMdp::new(
            0.9,
            vec![vec![vec![Outcome { prob: 1.0, next: 0, reward: 1.0 }]]],
            vec![vec![1.0]],
            vec![],
        )
        .unwrap();
        let v = bellman_solve(&mdp).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_gives_expected_immediate_reward() {
        let mut rng = Rng::new(3);
        let mdp = random_mdp(&mut rng, 4, 2, 0.0);
        let (r, _) = mdp.policy_model();
        let v = bellman_solve(&mdp).unwrap();
        for (a, b) in v.iter().zip(&r) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn chain_hand_solution() {
        // V(C) = 0, V(B) = 2 + 0.5 * 0 = 2, V(A) = 1 + 0.5 * 2 = 2.
        let v = bellman_solve(&three_state_chain(0.5)).unwrap();
        assert_eq!(v.len(), 3);
        for (got, want) in v.iter().zip([2.0, 2.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn random_mdps_satisfy_bellman_equation() {
        let mut rng = Rng::new(77);
        for _ in 0..100 {
            let s = 1 + rng.below(6) as usize;
            let a = 1 + rng.below(3) as usize;
            let gamma = rng.uniform(0.0, 0.95);
            let mdp = random_mdp(&mut rng, s, a, gamma);
            let v = bellman_solve(&mdp).unwrap();
            assert!(bellman_residual(&mdp, &v) < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_bellman() {
        let mut rng = Rng::new(5150);
        let gamma = 0.8;
        let mdp = random_mdp(&mut rng, 4, 2, gamma);
        let v = bellman_solve(&mdp).unwrap();
        // gamma^200 * max|r| / (1 - gamma) is ~1e-19: horizon bias is negligible.
        let episodes = 10_000;
        for s in 0..mdp.states() {
            let samples: Vec<f64> = (0..episodes)
                .map(|_| monte_carlo_return(&mdp.sample_episode(s, 200, &mut rng), gamma))
                .collect();
            let mean = samples.iter().sum::<f64>() / episodes as f64;
            let var = samples.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64;
            let se = libm::sqrt(var / episodes as f64);
            assert!((mean - v[s]).abs() < 3.0 * se, "state {s}: {mean} vs {} (se {se})", v[s]);
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let bad = FiniteMdp::new(
            0.5,
            vec![vec![vec![Outcome { prob: 0.7, next: 0, reward: 0.0 }]]],
            vec![vec![1.0]],
            vec![],
        );
        assert!(bad.is_err());
        let bad = FiniteMdp::new(
            1.0,
            vec![vec![vec![Outcome { prob: 1.0, next: 0, reward: 0.0 }]]],
            vec![vec![1.0]],
            vec![],
        );
        assert!(bad.is_err());
    }
}
