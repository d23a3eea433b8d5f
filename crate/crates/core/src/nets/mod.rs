//! Shared-trunk actor-critic network.
//!
//! ```text
//!   x ──[trunk: leaky]──> r ──[policy head: softmax]──> pi(.|x)
//!                           └─[value head: leaky|linear]──> V(x)
//! ```
//!
//! The trunk weight block is stored input-major (`input x hidden`, i.e. the
//! transpose of the usual `hidden x input` layout) so that the forward pass
//! and the rank-one trunk update only touch rows of nonzero input pixels.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Task, MNIST_DIM};
use crate::ndmath::{
    axpy, dot, leaky_relu_grad_scalar, leaky_relu_scalar, log_softmax_at, softmax_into, Matrix,
    Rng, Shape, Stream, Vector, DEFAULT_LEAKY_SLOPE,
};
use crate::{Error, Result};

pub mod gradcheck;

pub const DEFAULT_HIDDEN: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ValueOutput {
    /// Leaky ReLU on the scalar value output.
    #[default]
    LeakyRelu,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
    pub leaky_slope: f64,
    pub value_output: ValueOutput,
}

impl NetConfig {
    pub fn mnist(task: Task) -> Self {
        NetConfig {
            input: MNIST_DIM,
            hidden: DEFAULT_HIDDEN,
            actions: task.num_actions(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            value_output: ValueOutput::LeakyRelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.actions == 0 {
            return Err(Error::config("net", "layer widths must be positive"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("net.leaky_slope", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Names and order of the parameter blocks, as stored in checkpoints.
pub const BLOCK_NAMES: [&str; 6] = [
    "trunk.weight_t",
    "trunk.bias",
    "policy.weight",
    "policy.bias",
    "value.weight",
    "value.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticNet {
    config: NetConfig,
    seed: u64,
    trunk_w: Matrix,
    trunk_b: Vec<f64>,
    policy_w: Matrix,
    policy_b: Vec<f64>,
    value_w: Vec<f64>,
    value_b: f64,
}

/// Everything the backward passes need from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vector,
    pub trunk_pre: Vector,
    /// The learned representation `r`.
    pub representation: Vector,
    pub logits: Vector,
    pub probs: Vector,
    pub value_pre: f64,
    pub value: f64,
}

/// One gradient block per parameter block, same shapes and order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub trunk_w: Matrix,
    pub trunk_b: Vec<f64>,
    pub policy_w: Matrix,
    pub policy_b: Vec<f64>,
    pub value_w: Vec<f64>,
    pub value_b: f64,
}

impl GradientSet {
    pub fn zeros_like(net: &ActorCriticNet) -> Self {
        let c = &net.config;
        GradientSet {
            trunk_w: Matrix::zeros(c.input, c.hidden),
            trunk_b: vec![0.0; c.hidden],
            policy_w: Matrix::zeros(c.actions, c.hidden),
            policy_b: vec![0.0; c.actions],
            value_w: vec![0.0; c.hidden],
            value_b: 0.0,
        }
    }

    /// Blocks in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.trunk_w.as_slice(),
            &self.trunk_b,
            self.policy_w.as_slice(),
            &self.policy_b,
            &self.value_w,
            core::slice::from_ref(&self.value_b),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl ActorCriticNet {
    /// MNIST-sized network: 784 -> 300 with a 10-way (or 2-way in parity
    /// mode) policy head and a scalar value head.
    pub fn init(seed: u64, parity_mode: bool) -> Self {
        let task = if parity_mode { Task::Parity } else { Task::TenClass };
        Self::init_with(NetConfig::mnist(task), seed).expect("default config is valid")
    }

    /// Weights uniform in `±sqrt(6 / fan_in)` per block, biases zero.
    pub fn init_with(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(seed, Stream::Init, 0);
        let mut fill = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = libm::sqrt(6.0 / fan_in as f64);
            (0..n).map(|_| rng.uniform(-bound, bound)).collect()
        };
        let trunk = fill(config.input * config.hidden, config.input);
        let policy = fill(config.actions * config.hidden, config.hidden);
        let value = fill(config.hidden, config.hidden);
        Ok(ActorCriticNet {
            config,
            seed,
            trunk_w: Matrix::from_vec(config.input, config.hidden, trunk)?,
            trunk_b: vec![0.0; config.hidden],
            policy_w: Matrix::from_vec(config.actions, config.hidden, policy)?,
            policy_b: vec![0.0; config.actions],
            value_w: value,
            value_b: 0.0,
        })
    }

    /// Rebuilds a network from blocks in [`BLOCK_NAMES`] order.
    pub fn from_blocks(config: NetConfig, seed: u64, blocks: [Vec<f64>; 6]) -> Result<Self> {
        config.validate()?;
        let [tw, tb, pw, pb, vw, vb] = blocks;
        let expect = block_shapes(&config);
        let got = [&tw, &tb, &pw, &pb, &vw, &vb];
        for ((name, shape), block) in BLOCK_NAMES.iter().zip(expect).zip(got) {
            if block.len() != shape.0 * shape.1 {
                return Err(Error::shape("ActorCriticNet::from_blocks", name, block.len()));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ActorCriticNet::from_blocks"));
            }
        }
        Ok(ActorCriticNet {
            config,
            seed,
            trunk_w: Matrix::from_vec(config.input, config.hidden, tw)?,
            trunk_b: tb,
            policy_w: Matrix::from_vec(config.actions, config.hidden, pw)?,
            policy_b: pb,
            value_w: vw,
            value_b: vb[0],
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn block_shapes(&self) -> [Shape; 6] {
        block_shapes(&self.config)
    }

    /// Parameter blocks in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.trunk_w.as_slice(),
            &self.trunk_b,
            self.policy_w.as_slice(),
            &self.policy_b,
            &self.value_w,
            core::slice::from_ref(&self.value_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.trunk_w.as_mut_slice(),
            &mut self.trunk_b,
            self.policy_w.as_mut_slice(),
            &mut self.policy_b,
            &mut self.value_w,
            core::slice::from_mut(&mut self.value_b),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input {
            return Err(Error::shape("ActorCriticNet::forward", x.len(), self.config.input));
        }
        Ok(())
    }

    fn trunk_pre(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.trunk_b.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.trunk_w.row(i), &mut h);
            }
        }
        h
    }

    fn value_act(&self, pre: f64) -> f64 {
        match self.config.value_output {
            ValueOutput::LeakyRelu => leaky_relu_scalar(pre, self.config.leaky_slope),
            ValueOutput::Linear => pre,
        }
    }

    fn value_act_grad(&self, pre: f64) -> f64 {
        match self.config.value_output {
            ValueOutput::LeakyRelu => leaky_relu_grad_scalar(pre, self.config.leaky_slope),
            ValueOutput::Linear => 1.0,
        }
    }

    /// The 300-dim (trunk width) representation of `x`.
    pub fn extract_representation(&self, x: &[f64]) -> Result<Vector> {
        self.check_input(x)?;
        let slope = self.config.leaky_slope;
        let mut h = self.trunk_pre(x);
        h.iter_mut().for_each(|v| *v = leaky_relu_scalar(*v, slope));
        let r = Vector::from_raw(h);
        if !r.is_finite() {
            return Err(Error::NonFinite("representation"));
        }
        Ok(r)
    }

    /// `V(x)` only, skipping the policy head.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let r = self.extract_representation(x)?;
        let v = self.value_act(dot(&self.value_w, &r) + self.value_b);
        if !v.is_finite() {
            return Err(Error::NonFinite("value"));
        }
        Ok(v)
    }

    /// Policy logits only.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.extract_representation(x)?;
        Ok(self.policy_logits(&r))
    }

    fn policy_logits(&self, r: &[f64]) -> Vec<f64> {
        (0..self.config.actions)
            .map(|a| dot(self.policy_w.row(a), r) + self.policy_b[a])
            .collect()
    }

    /// Greedy action (no sampling).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::ndmath::argmax(&self.logits(x)?))
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let slope = self.config.leaky_slope;
        let pre = self.trunk_pre(x);
        let r: Vec<f64> = pre.iter().map(|&v| leaky_relu_scalar(v, slope)).collect();
        let logits = self.policy_logits(&r);
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, &mut probs);
        let value_pre = dot(&self.value_w, &r) + self.value_b;
        let value = self.value_act(value_pre);
        if !(value.is_finite() && logits.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("forward"));
        }
        Ok(ForwardTrace {
            input: Vector::from_raw(x.to_vec()),
            trunk_pre: Vector::from_raw(pre),
            representation: Vector::from_raw(r),
            logits: Vector::from_raw(logits),
            probs: Vector::from_raw(probs),
            value_pre,
            value,
        })
    }

    /// Back-propagates head-level signals through the trunk:
    /// `dvalue` is dOut/dV-pre-activation, `dlogits` is dOut/dlogits.
    /// Returns `(dOut/d(trunk pre-activation))` using the current heads.
    fn trunk_signal(&self, trace: &ForwardTrace, dvalue_pre: f64, dlogits: &[f64]) -> Vec<f64> {
        let mut dr = vec![0.0; self.config.hidden];
        if dvalue_pre != 0.0 {
            axpy(dvalue_pre, &self.value_w, &mut dr);
        }
        for (a, &g) in dlogits.iter().enumerate() {
            if g != 0.0 {
                axpy(g, self.policy_w.row(a), &mut dr);
            }
        }
        let slope = self.config.leaky_slope;
        for (d, &p) in dr.iter_mut().zip(trace.trunk_pre.iter()) {
            *d *= leaky_relu_grad_scalar(p, slope);
        }
        dr
    }

    fn gradient_from_signals(
        &self,
        trace: &ForwardTrace,
        dvalue_pre: f64,
        dlogits: &[f64],
    ) -> GradientSet {
        let dh = self.trunk_signal(trace, dvalue_pre, dlogits);
        let mut g = GradientSet::zeros_like(self);
        for (i, &xi) in trace.input.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &dh, g.trunk_w.row_mut(i));
            }
        }
        g.trunk_b = dh;
        let r = &trace.representation;
        for (a, &d) in dlogits.iter().enumerate() {
            if d != 0.0 {
                axpy(d, r, g.policy_w.row_mut(a));
            }
        }
        g.policy_b = dlogits.to_vec();
        if dvalue_pre != 0.0 {
            axpy(dvalue_pre, r, &mut g.value_w);
        }
        g.value_b = dvalue_pre;
        g
    }

    /// `dV(s)/dtheta` for the value head and trunk; the policy head block is
    /// zero. Only the trace at `s` is consulted (semi-gradient).
    pub fn grad_value(&self, trace: &ForwardTrace) -> GradientSet {
        let dv = self.value_act_grad(trace.value_pre);
        self.gradient_from_signals(trace, dv, &vec![0.0; self.config.actions])
    }

    /// `d log pi(action|s)/dtheta` for the policy head and trunk; value head
    /// blocks are zero.
    pub fn grad_log_policy(&self, trace: &ForwardTrace, action: usize) -> Result<GradientSet> {
        let d = score(trace, action, self.config.actions)?;
        Ok(self.gradient_from_signals(trace, 0.0, &d))
    }

    /// Cross-entropy loss `-log pi(label|s)` and its gradient (descent
    /// direction is the negative; value head untouched).
    pub fn supervised_forward_backward(
        &self,
        x: &[f64],
        label: usize,
    ) -> Result<(f64, GradientSet)> {
        let trace = self.forward(x)?;
        let mut d = score(&trace, label, self.config.actions)?;
        d.iter_mut().for_each(|v| *v = -*v);
        let loss = -log_softmax_at(&trace.logits, label);
        Ok((loss, self.gradient_from_signals(&trace, 0.0, &d)))
    }

    /// `theta += scale * grads` for every block.
    pub fn apply_update(&mut self, grads: &GradientSet, scale: f64) -> Result<()> {
        if !scale.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite("apply_update"));
        }
        if grads.trunk_w.shape() != self.trunk_w.shape()
            || grads.policy_w.shape() != self.policy_w.shape()
            || grads.value_w.len() != self.value_w.len()
        {
            return Err(Error::shape(
                "apply_update",
                grads.policy_w.shape(),
                self.policy_w.shape(),
            ));
        }
        self.trunk_w.add_scaled(scale, &grads.trunk_w)?;
        axpy(scale, &grads.trunk_b, &mut self.trunk_b);
        self.policy_w.add_scaled(scale, &grads.policy_w)?;
        axpy(scale, &grads.policy_b, &mut self.policy_b);
        axpy(scale, &grads.value_w, &mut self.value_w);
        self.value_b += scale * grads.value_b;
        Ok(())
    }

    /// Fused ascent step from one trace:
    /// `theta += value_scale * dV/dtheta + policy_scale * dlog pi(action)/dtheta`.
    ///
    /// Equal to two [`ActorCriticNet::apply_update`] calls with
    /// [`ActorCriticNet::grad_value`] and [`ActorCriticNet::grad_log_policy`]
    /// evaluated at the same parameters, without materialising the dense
    /// trunk gradient.
    pub fn ascend(
        &mut self,
        trace: &ForwardTrace,
        value_scale: f64,
        policy_scale: f64,
        action: usize,
    ) -> Result<()> {
        let dvalue_pre = value_scale * self.value_act_grad(trace.value_pre);
        let mut dlogits = score(trace, action, self.config.actions)?;
        dlogits.iter_mut().for_each(|v| *v *= policy_scale);
        let dh = self.trunk_signal(trace, dvalue_pre, &dlogits);
        if !(dvalue_pre.is_finite()
            && dlogits.iter().all(|v| v.is_finite())
            && dh.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("ascend"));
        }
        let r = &trace.representation;
        for (a, &d) in dlogits.iter().enumerate() {
            if d != 0.0 {
                axpy(d, r, self.policy_w.row_mut(a));
            }
        }
        axpy(1.0, &dlogits, &mut self.policy_b);
        if dvalue_pre != 0.0 {
            axpy(dvalue_pre, r, &mut self.value_w);
        }
        self.value_b += dvalue_pre;
        for (i, &xi) in trace.input.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &dh, self.trunk_w.row_mut(i));
            }
        }
        axpy(1.0, &dh, &mut self.trunk_b);
        Ok(())
    }
}

fn block_shapes(c: &NetConfig) -> [Shape; 6] {
    [
        Shape(c.input, c.hidden),
        Shape(c.hidden, 1),
        Shape(c.actions, c.hidden),
        Shape(c.actions, 1),
        Shape(1, c.hidden),
        Shape(1, 1),
    ]
}

/// `onehot(action) - pi(.|s)`, the gradient of `log pi(action|s)` with
/// respect to the logits.
pub fn score(trace: &ForwardTrace, action: usize, actions: usize) -> Result<Vec<f64>> {
    if action >= actions {
        return Err(Error::InvalidAction {
            action,
            alphabet: actions,
        });
    }
    let mut d: Vec<f64> = trace.probs.iter().map(|p| -p).collect();
    d[action] += 1.0;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetConfig {
        NetConfig {
            input: 6,
            hidden: 5,
            actions: 3,
            leaky_slope: 0.01,
            value_output: ValueOutput::LeakyRelu,
        }
    }

    fn state(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.next_f64()).collect()
    }

    #[test]
    fn init_contract() {
        let a = ActorCriticNet::init(3, false);
        assert_eq!(a, ActorCriticNet::init(3, false));
        assert_ne!(a, ActorCriticNet::init(4, false));
        assert!(a.trunk_b.iter().all(|&b| b == 0.0));
        assert!(a.policy_b.iter().all(|&b| b == 0.0));
        assert_eq!(a.value_b, 0.0);
        let bound = libm::sqrt(6.0 / 784.0);
        assert!((bound - 0.0875).abs() < 1e-4);
        assert!(a.trunk_w.as_slice().iter().all(|w| w.abs() <= bound));
        assert_eq!(a.policy_w.rows(), 10);
        assert_eq!(ActorCriticNet::init(3, true).policy_w.rows(), 2);
    }

    #[test]
    fn zero_state_gives_uniform_policy() {
        let net = ActorCriticNet::init(1, false);
        let t = net.forward(&vec![0.0; 784]).unwrap();
        assert!(t.probs.iter().all(|&p| (p - 0.1).abs() < 1e-15));
        assert!(t.representation.iter().all(|&v| v == 0.0));
        assert_eq!(t.representation.dim(), 300);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let net = ActorCriticNet::init_with(small(), 0).unwrap();
        assert!(matches!(net.forward(&[0.0; 5]), Err(Error::Shape { .. })));
    }

    #[test]
    fn value_head_gradient_is_scaled_representation() {
        let mut rng = Rng::new(8);
        let net = ActorCriticNet::init_with(small(), 2).unwrap();
        let t = net.forward(&state(&mut rng, 6)).unwrap();
        let g = net.grad_value(&t);
        let k = leaky_relu_grad_scalar(t.value_pre, 0.01);
        for (gv, r) in g.value_w.iter().zip(t.representation.iter()) {
            assert_eq!(*gv, k * r);
        }
        assert!(g.policy_w.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.policy_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_identity() {
        let mut rng = Rng::new(12);
        let net = ActorCriticNet::init_with(small(), 5).unwrap();
        for _ in 0..20 {
            let t = net.forward(&state(&mut rng, 6)).unwrap();
            let mut expectation = vec![0.0; 3];
            for a in 0..3 {
                let d = score(&t, a, 3).unwrap();
                axpy(t.probs[a], &d, &mut expectation);
            }
            assert!(expectation.iter().all(|v| v.abs() < 1e-10));
            let g = net.grad_log_policy(&t, 1).unwrap();
            assert!(g.value_w.iter().all(|&v| v == 0.0) && g.value_b == 0.0);
        }
    }

    #[test]
    fn supervised_loss_closed_forms() {
        let net = ActorCriticNet::init(0, false);
        let (loss, _) = net.supervised_forward_backward(&vec![0.0; 784], 4).unwrap();
        assert!((loss - libm::log(10.0)).abs() < 1e-12);
    }

    #[test]
    fn update_linearity_and_noop() {
        let mut rng = Rng::new(77);
        let net = ActorCriticNet::init_with(small(), 1).unwrap();
        let t = net.forward(&state(&mut rng, 6)).unwrap();
        let g = net.grad_value(&t);

        let mut zero = net.clone();
        zero.apply_update(&g, 0.0).unwrap();
        assert_eq!(zero, net);

        let mut twice = net.clone();
        twice.apply_update(&g, 0.25).unwrap();
        twice.apply_update(&g, 0.5).unwrap();
        let mut once = net.clone();
        once.apply_update(&g, 0.75).unwrap();
        for (a, b) in twice.blocks().iter().zip(once.blocks()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        let mut bad = net.clone();
        assert!(bad.apply_update(&g, f64::NAN).is_err());
    }

    #[test]
    fn fused_step_matches_two_dense_updates() {
        let mut rng = Rng::new(404);
        for case in 0..20 {
            let net = ActorCriticNet::init_with(small(), case).unwrap();
            let x = state(&mut rng, 6);
            let t = net.forward(&x).unwrap();
            let action = rng.below(3) as usize;
            let (vs, ps) = (rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));

            let mut dense = net.clone();
            dense.apply_update(&net.grad_value(&t), vs).unwrap();
            dense.apply_update(&net.grad_log_policy(&t, action).unwrap(), ps).unwrap();

            let mut fused = net.clone();
            fused.ascend(&t, vs, ps, action).unwrap();
            for (a, b) in dense.blocks().iter().zip(fused.blocks()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 1e-14, "case {case}");
                }
            }
        }
    }

    #[test]
    fn blocks_round_trip() {
        let net = ActorCriticNet::init_with(small(), 9).unwrap();
        let blocks = net.blocks().map(|b| b.to_vec());
        let back = ActorCriticNet::from_blocks(small(), 9, blocks).unwrap();
        assert_eq!(back, net);
        let mut short = net.blocks().map(|b| b.to_vec());
        short[2].pop();
        assert!(ActorCriticNet::from_blocks(small(), 9, short).is_err());
    }
}
