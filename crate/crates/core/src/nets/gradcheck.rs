//! Central finite-difference check of the analytic gradients.
//!
//! Each objective is evaluated by plain forward passes with one parameter
//! nudged by `±eps`; nothing here shares code with the backward pass beyond
//! [`ActorCriticNet::forward`].

use alloc::vec::Vec;

use super::{ActorCriticNet, GradientSet, ValueOutput};
use crate::ndmath::{log_softmax_at, Rng};
use crate::Result;

/// Partials smaller than `ABS_FLOOR * max(1, |f|)` are compared absolutely.
/// A central difference carries roundoff of roughly `2e-16 * |f| / eps`
/// (about `2e-11 * |f|` at `eps = 1e-5`); dividing that by a vanishing
/// partial would measure float noise, not the gradient.
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `V(x)`.
    Value,
    /// `log pi(a|x)`.
    LogPolicy(usize),
    /// `-log pi(label|x)`.
    CrossEntropy(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub objective: Objective,
    pub coordinates: usize,
    pub worst_relative: f64,
    /// Block index and flat offset of the worst coordinate.
    pub worst_at: (usize, usize),
}

pub fn objective(net: &ActorCriticNet, x: &[f64], obj: Objective) -> Result<f64> {
    let t = net.forward(x)?;
    Ok(match obj {
        Objective::Value => t.value,
        Objective::LogPolicy(a) => log_softmax_at(&t.logits, a),
        Objective::CrossEntropy(y) => -log_softmax_at(&t.logits, y),
    })
}

pub fn analytic(net: &ActorCriticNet, x: &[f64], obj: Objective) -> Result<GradientSet> {
    match obj {
        Objective::Value => Ok(net.grad_value(&net.forward(x)?)),
        Objective::LogPolicy(a) => net.grad_log_policy(&net.forward(x)?, a),
        Objective::CrossEntropy(y) => Ok(net.supervised_forward_backward(x, y)?.1),
    }
}

/// Distance of every pre-activation from a Leaky ReLU kink. Finite
/// differences across a kink are meaningless, so callers resample when this
/// is smaller than the perturbation can move a pre-activation.
pub fn kink_margin(net: &ActorCriticNet, x: &[f64]) -> Result<f64> {
    let t = net.forward(x)?;
    let mut m = t.trunk_pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if net.config().value_output == ValueOutput::LeakyRelu {
        m = m.min(t.value_pre.abs());
    }
    Ok(m)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares analytic and central-difference partials on `per_block`
/// randomly chosen coordinates of each parameter block (all of them for
/// blocks that small).
pub fn check(
    net: &ActorCriticNet,
    x: &[f64],
    obj: Objective,
    eps: f64,
    per_block: usize,
    rng: &mut Rng,
) -> Result<GradCheck> {
    let grads = analytic(net, x, obj)?;
    let floor = ABS_FLOOR * objective(net, x, obj)?.abs().max(1.0);
    let mut probe = net.clone();
    let mut report = GradCheck {
        objective: obj,
        coordinates: 0,
        worst_relative: 0.0,
        worst_at: (0, 0),
    };
    let sizes: Vec<usize> = net.blocks().iter().map(|b| b.len()).collect();
    for (b, &len) in sizes.iter().enumerate() {
        let picks: Vec<usize> = if len <= per_block {
            (0..len).collect()
        } else {
            (0..per_block).map(|_| rng.below(len as u64) as usize).collect()
        };
        for j in picks {
            let original = probe.blocks()[b][j];
            probe.blocks_mut()[b][j] = original + eps;
            let up = objective(&probe, x, obj)?;
            probe.blocks_mut()[b][j] = original - eps;
            let down = objective(&probe, x, obj)?;
            probe.blocks_mut()[b][j] = original;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(grads.blocks()[b][j], numeric, floor);
            report.coordinates += 1;
            if err > report.worst_relative {
                report.worst_relative = err;
                report.worst_at = (b, j);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetConfig;
    use alloc::vec;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, ABS_FLOOR), 0.0);
        assert!((relative_error(1.0, 1.0 + 1e-9, ABS_FLOOR) - 1e-9).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9, 1e-6) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // A check that cannot fail proves nothing: scale one block and
        // confirm the checker notices.
        let cfg = NetConfig {
            input: 3,
            hidden: 4,
            actions: 2,
            leaky_slope: 0.01,
            value_output: ValueOutput::Linear,
        };
        let net = ActorCriticNet::init_with(cfg, 5).unwrap();
        let x = vec![0.3, 0.7, 0.1];
        let mut g = analytic(&net, &x, Objective::Value).unwrap();
        g.value_b *= 1.01;
        let numeric = {
            let mut p = net.clone();
            p.blocks_mut()[5][0] += 1e-5;
            let up = objective(&p, &x, Objective::Value).unwrap();
            p.blocks_mut()[5][0] -= 2e-5;
            let down = objective(&p, &x, Objective::Value).unwrap();
            (up - down) / 2e-5
        };
        assert!(relative_error(g.value_b, numeric, ABS_FLOOR) > 5e-3);
    }
}
