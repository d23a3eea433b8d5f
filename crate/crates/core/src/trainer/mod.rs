//! Training loops: actor-critic over the classification environment, the
//! supervised baseline, frozen evaluation, and tabular TD on finite MDPs.

mod tabular;

use alloc::vec::Vec;
use core::ops::ControlFlow;

pub use tabular::{
    expected_td_sweep, td_evaluate_sampled, td_evaluate_swept, tabular_td_update,
    TabularTdConfig,
};

use crate::dataset::{epoch_order, LabelLedger, LabeledSet, Reader, Task};
use crate::envsim::{ClassificationEnv, EnvConfig, Environment, RewardSchedule};
use crate::ndmath::{sample_categorical, Rng, Stream};
use crate::nets::{ActorCriticNet, ForwardTrace, NetConfig};
use crate::{Error, Result};

/// Which training-error estimate drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopMetric {
    /// Fraction of wrong actions taken during the epoch (sampled actions for
    /// RL, pre-update argmax for supervised).
    #[default]
    Online,
    /// Argmax error of the frozen network over the training set after the epoch.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta_pi: f64,
    pub eta_v: f64,
    pub gamma: f64,
    /// RL stopping threshold on the training error.
    pub target_train_error: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub schedule: RewardSchedule,
    pub error_terminates: bool,
    pub stack_terminal_reward: bool,
    pub task: Task,
    pub stop_metric: StopMetric,
    pub net: NetConfig,
    /// Step size of the supervised baseline.
    pub eta_supervised: f64,
    /// Supervised stopping threshold (0 means "no training errors").
    pub supervised_target_train_error: f64,
    /// Frozen training-set evaluation every this many epochs (0: only when
    /// stopping). Forced to 1 when stopping on the frozen metric.
    pub frozen_eval_every: usize,
    /// Test-set evaluation every this many epochs (0: only at the final epoch).
    pub test_eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_pi: 1e-3,
            eta_v: 1e-3,
            gamma: 0.9,
            target_train_error: 0.004,
            max_epochs: 1200,
            seed: 0,
            schedule: RewardSchedule::default(),
            error_terminates: false,
            stack_terminal_reward: false,
            task: Task::TenClass,
            stop_metric: StopMetric::Online,
            net: NetConfig::mnist(Task::TenClass),
            eta_supervised: 1e-3,
            supervised_target_train_error: 0.0,
            frozen_eval_every: 1,
            test_eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1)"));
        }
        for (field, v) in [
            ("eta_pi", self.eta_pi),
            ("eta_v", self.eta_v),
            ("eta_supervised", self.eta_supervised),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        if !(self.target_train_error > 0.0 && self.target_train_error < 1.0) {
            return Err(Error::config("target_train_error", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.supervised_target_train_error) {
            return Err(Error::config("supervised_target_train_error", "must lie in [0, 1)"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        self.schedule.validate()?;
        self.net.validate()?;
        Ok(())
    }

    fn net_config(&self) -> NetConfig {
        NetConfig {
            actions: self.task.num_actions(),
            ..self.net
        }
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            schedule: self.schedule,
            error_terminates: self.error_terminates,
            stack_terminal_reward: self.stack_terminal_reward,
            task: self.task,
            seed: self.seed,
        }
    }
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_error_online: f64,
    pub train_error_frozen: Option<f64>,
    /// `1 - train_error_online`.
    pub pr_proper_action: f64,
    /// Mean undiscounted return of the episodes that ended this epoch.
    pub mean_return: Option<f64>,
    /// Cumulative environment (or sample) steps.
    pub steps: u64,
    /// Wall-clock seconds; filled in by the caller if it keeps time.
    pub seconds: Option<f64>,
    pub test_error: Option<f64>,
}

impl MetricsRecord {
    fn new(epoch: usize, online_error: f64, steps: u64) -> Self {
        MetricsRecord {
            epoch,
            train_error_online: online_error,
            train_error_frozen: None,
            pr_proper_action: 1.0 - online_error,
            mean_return: None,
            steps,
            seconds: None,
            test_error: None,
        }
    }
}

/// Receives every epoch's record as soon as it exists. Returning
/// `ControlFlow::Break` ends training after the current epoch.
pub trait TrainObserver {
    fn on_epoch(
        &mut self,
        record: &MetricsRecord,
        net: &ActorCriticNet,
        ledger: &LabelLedger,
    ) -> ControlFlow<()>;
}

impl TrainObserver for () {
    fn on_epoch(&mut self, _: &MetricsRecord, _: &ActorCriticNet, _: &LabelLedger) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl<F> TrainObserver for F
where
    F: FnMut(&MetricsRecord, &ActorCriticNet, &LabelLedger) -> ControlFlow<()>,
{
    fn on_epoch(&mut self, r: &MetricsRecord, n: &ActorCriticNet, l: &LabelLedger) -> ControlFlow<()> {
        self(r, n, l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    MaxEpochs,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ActorCriticNet,
    pub metrics: Vec<MetricsRecord>,
    pub ledger: LabelLedger,
    pub stop: StopReason,
}

/// `R + gamma V(s') - V(s)`, with `V(s') = 0` on terminal transitions.
pub fn td_error(reward: f64, v_next: f64, v_current: f64, gamma: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    reward + bootstrap - v_current
}

/// The sampled quantities of one TD(0) update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdTransition {
    pub action: usize,
    pub reward: f64,
    /// `V(S_{t+1})`, or `None` for a terminal transition.
    pub next_value: Option<f64>,
    pub current_value: f64,
}

impl TdTransition {
    pub fn td_error(&self, gamma: f64) -> f64 {
        td_error(
            self.reward,
            self.next_value.unwrap_or(0.0),
            self.current_value,
            gamma,
            self.next_value.is_none(),
        )
    }
}

/// One actor-critic update from the trace at `S_t`: value blocks move by
/// `eta_v * delta * grad V(S_t)`, policy blocks by
/// `eta_pi * delta * grad log pi(A_t|S_t)`; the trunk receives both. Returns
/// the TD error used.
pub fn actor_critic_step(
    net: &mut ActorCriticNet,
    trace: &ForwardTrace,
    transition: &TdTransition,
    cfg: &TrainConfig,
) -> Result<f64> {
    let delta = transition.td_error(cfg.gamma);
    if !delta.is_finite() {
        return Err(Error::NonFinite("td error"));
    }
    if delta != 0.0 {
        net.ascend(
            trace,
            cfg.eta_v * delta,
            cfg.eta_pi * delta,
            transition.action,
        )?;
    }
    Ok(delta)
}

/// Argmax error rate of a frozen network on `set` under `task`.
pub fn evaluate(
    net: &ActorCriticNet,
    set: &LabeledSet,
    task: Task,
    ledger: &mut LabelLedger,
) -> Result<f64> {
    let mut wrong = 0usize;
    for i in 0..set.len() {
        let predicted = net.predict(set.image(i))?;
        let label = set.read_label(i, Reader::Evaluator, ledger);
        if predicted != task.proper_action(label) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / set.len() as f64)
}

fn diverged(epoch: usize, step: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::Divergence { epoch, step, what },
        other => other,
    }
}

struct EpochEval<'c> {
    cfg: &'c TrainConfig,
    stop_target: f64,
}

impl EpochEval<'_> {
    /// Adds frozen/test errors to `record` and decides whether to stop.
    fn finish(
        &self,
        record: &mut MetricsRecord,
        net: &ActorCriticNet,
        train: &LabeledSet,
        test: Option<&LabeledSet>,
        ledger: &mut LabelLedger,
    ) -> Result<Option<StopReason>> {
        let epoch = record.epoch;
        let every = match self.cfg.stop_metric {
            StopMetric::Frozen => 1,
            StopMetric::Online => self.cfg.frozen_eval_every,
        };
        let last = epoch == self.cfg.max_epochs;
        let online_done = self.cfg.stop_metric == StopMetric::Online
            && record.train_error_online <= self.stop_target;
        if (every > 0 && epoch.is_multiple_of(every)) || last || online_done {
            record.train_error_frozen = Some(evaluate(net, train, self.cfg.task, ledger)?);
        }
        let stop = match self.cfg.stop_metric {
            StopMetric::Online => online_done,
            StopMetric::Frozen => record.train_error_frozen.is_some_and(|e| e <= self.stop_target),
        };
        let reason = if stop {
            Some(StopReason::TargetReached)
        } else if last {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        if let Some(test) = test {
            let periodic = self.cfg.test_eval_every > 0 && epoch.is_multiple_of(self.cfg.test_eval_every);
            if periodic || reason.is_some() {
                record.test_error = Some(evaluate(net, test, self.cfg.task, ledger)?);
            }
        }
        Ok(reason)
    }
}

/// Actor-critic training over the classification environment.
///
/// Per step: forward at `S_t`, sample `A_t ~ pi(.|S_t)`, step the
/// environment, bootstrap from `V(S_{t+1})` under the pre-update
/// parameters, then one [`actor_critic_step`]. An epoch is one pass over
/// the permuted training stream. Labels are read only by the environment
/// (rewards) and by the frozen evaluator.
pub fn train_rl(
    cfg: &TrainConfig,
    train: &LabeledSet,
    test: Option<&LabeledSet>,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = ClassificationEnv::new(train, cfg.env_config())?;
    let mut net = ActorCriticNet::init_with(cfg.net_config(), cfg.seed)?;
    let mut rng = Rng::derive(cfg.seed, Stream::Actions, 0);
    let mut eval_ledger = LabelLedger::default();
    let eval = EpochEval {
        cfg,
        stop_target: cfg.target_train_error,
    };
    let r_error = cfg.schedule.r_error;
    let steps_per_epoch = env.stream_len();
    let mut metrics = Vec::new();
    let mut obs = env.reset();
    let mut episode_return = 0.0;

    for epoch in 1..=cfg.max_epochs {
        let mut errors = 0usize;
        let (mut returns, mut episodes) = (0.0, 0usize);
        for _ in 0..steps_per_epoch {
            let ctx = diverged(epoch, env.steps());
            let trace = net.forward(obs).map_err(&ctx)?;
            let action = sample_categorical(&trace.probs, &mut rng)
                .map_err(|_| Error::Divergence { epoch, step: env.steps(), what: "policy" })?;
            let out = env.step(action)?;
            if out.reward == r_error {
                errors += 1;
            }
            episode_return += out.reward;
            let next_value = match out.next_state {
                Some(next) => Some(net.value(next).map_err(&ctx)?),
                None => None,
            };
            let transition = TdTransition {
                action,
                reward: out.reward,
                next_value,
                current_value: trace.value,
            };
            actor_critic_step(&mut net, &trace, &transition, cfg).map_err(&ctx)?;
            obs = match out.next_state {
                Some(next) => next,
                None => {
                    returns += episode_return;
                    episodes += 1;
                    episode_return = 0.0;
                    env.reset()
                }
            };
        }
        let mut record = MetricsRecord::new(
            epoch,
            errors as f64 / steps_per_epoch as f64,
            env.steps(),
        );
        record.mean_return = (episodes > 0).then(|| returns / episodes as f64);
        let stop = eval.finish(&mut record, &net, train, test, &mut eval_ledger)?;
        let ledger = env.ledger().combined(&eval_ledger);
        let flow = observer.on_epoch(&record, &net, &ledger);
        metrics.push(record);
        let stop = stop.or(flow.is_break().then_some(StopReason::Interrupted));
        if let Some(stop) = stop {
            return Ok(TrainOutcome { net, metrics, ledger, stop });
        }
    }
    unreachable!("the final epoch always yields a stop reason")
}

/// Per-sample softmax cross-entropy SGD on the same architecture (value head
/// untouched). Labels are read by the learner itself and charged to
/// [`Reader::Agent`].
pub fn train_supervised(
    cfg: &TrainConfig,
    train: &LabeledSet,
    test: Option<&LabeledSet>,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut net = ActorCriticNet::init_with(cfg.net_config(), cfg.seed)?;
    let mut ledger = LabelLedger::default();
    let eval = EpochEval {
        cfg,
        stop_target: cfg.supervised_target_train_error,
    };
    let mut metrics = Vec::new();
    let mut steps = 0u64;
    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train.len(), (epoch - 1) as u64, cfg.seed);
        let mut errors = 0usize;
        for &i in &order.order {
            let ctx = diverged(epoch, steps);
            let target = cfg.task.proper_action(train.read_label(i, Reader::Agent, &mut ledger));
            let trace = net.forward(train.image(i)).map_err(&ctx)?;
            if trace.logits.argmax() != target {
                errors += 1;
            }
            // Ascending log pi(target) is descending the cross-entropy.
            net.ascend(&trace, 0.0, cfg.eta_supervised, target).map_err(&ctx)?;
            steps += 1;
        }
        let mut record = MetricsRecord::new(epoch, errors as f64 / train.len() as f64, steps);
        let stop = eval.finish(&mut record, &net, train, test, &mut ledger)?;
        let flow = observer.on_epoch(&record, &net, &ledger);
        metrics.push(record);
        let stop = stop.or(flow.is_break().then_some(StopReason::Interrupted));
        if let Some(stop) = stop {
            return Ok(TrainOutcome { net, metrics, ledger, stop });
        }
    }
    unreachable!("the final epoch always yields a stop reason")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassLabel;
    use crate::ndmath::Vector;
    use crate::nets::ValueOutput;
    use alloc::vec;

    #[test]
    fn td_error_cases() {
        assert!((td_error(1.0, 2.0, 1.0, 0.9, false) - 1.8).abs() < 1e-15);
        assert_eq!(td_error(10.0, 123.0, 10.0, 0.9, true), 0.0);
        let (r, g, vn) = (0.5, 0.9, 3.0);
        assert_eq!(td_error(r, vn, r + g * vn, g, false), 0.0);
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            net: NetConfig {
                input: 4,
                hidden: 8,
                actions: 10,
                leaky_slope: 0.01,
                value_output: ValueOutput::LeakyRelu,
            },
            max_epochs: 3,
            ..TrainConfig::default()
        }
    }

    /// Four one-hot "images" labelled 0..3.
    fn tiny_set() -> LabeledSet {
        let images = (0..4).map(|i| Vector::new(crate::ndmath::one_hot(4, i)).unwrap()).collect();
        let labels = (0..4).map(|i| ClassLabel::new(i).unwrap()).collect();
        LabeledSet::new(images, labels).unwrap()
    }

    #[test]
    fn zero_delta_moves_nothing() {
        let cfg = tiny_config();
        let mut net = ActorCriticNet::init_with(cfg.net, 1).unwrap();
        let trace = net.forward(&[1.0, 0.0, 0.5, 0.0]).unwrap();
        let before = net.clone();
        let t = TdTransition {
            action: 2,
            reward: 0.5,
            next_value: Some(2.0),
            current_value: 0.5 + 0.9 * 2.0,
        };
        assert_eq!(actor_critic_step(&mut net, &trace, &t, &cfg).unwrap(), 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn eta_pi_zero_leaves_policy_head() {
        let cfg = TrainConfig { eta_pi: 0.0, ..tiny_config() };
        let mut net = ActorCriticNet::init_with(cfg.net, 2).unwrap();
        let trace = net.forward(&[0.3, 0.1, 0.0, 0.9]).unwrap();
        let before = net.clone();
        let t = TdTransition { action: 1, reward: 1.0, next_value: None, current_value: trace.value };
        actor_critic_step(&mut net, &trace, &t, &cfg).unwrap();
        assert_eq!(net.blocks()[2], before.blocks()[2]);
        assert_eq!(net.blocks()[3], before.blocks()[3]);
        assert_ne!(net.blocks()[4], before.blocks()[4]);
        assert_ne!(net.blocks()[0], before.blocks()[0]);
    }

    #[test]
    fn non_finite_delta_is_divergence() {
        let cfg = tiny_config();
        let mut net = ActorCriticNet::init_with(cfg.net, 2).unwrap();
        let trace = net.forward(&[0.3, 0.1, 0.0, 0.9]).unwrap();
        let t = TdTransition { action: 1, reward: f64::INFINITY, next_value: None, current_value: 0.0 };
        assert!(actor_critic_step(&mut net, &trace, &t, &cfg).is_err());
    }

    #[test]
    fn rl_run_ledger_and_metric_identity() {
        let cfg = tiny_config();
        let set = tiny_set();
        let out = train_rl(&cfg, &set, Some(&set), &mut ()).unwrap();
        assert_eq!(out.metrics.len(), 3);
        assert_eq!(out.ledger.agent_label_reads, 0);
        assert_eq!(out.ledger.env_label_reads, 12);
        for m in &out.metrics {
            assert!((m.pr_proper_action + m.train_error_online - 1.0).abs() < 1e-12);
        }
        assert!(out.metrics.last().unwrap().test_error.is_some());
    }

    #[test]
    fn supervised_single_sample_fits() {
        let img = Vector::new(vec![0.2, 0.9, 0.0, 0.4]).unwrap();
        let set = LabeledSet::new(vec![img], vec![ClassLabel::new(7).unwrap()]).unwrap();
        let cfg = TrainConfig {
            eta_supervised: 0.1,
            max_epochs: 50,
            stop_metric: StopMetric::Frozen,
            ..tiny_config()
        };
        let out = train_supervised(&cfg, &set, None, &mut ()).unwrap();
        assert_eq!(out.stop, StopReason::TargetReached);
        assert_eq!(out.metrics.last().unwrap().train_error_frozen, Some(0.0));
        assert_eq!(out.ledger.agent_label_reads, out.metrics.len() as u64);
    }

    #[test]
    fn observer_can_interrupt() {
        let cfg = TrainConfig { max_epochs: 10, ..tiny_config() };
        let set = tiny_set();
        let mut seen = 0;
        let mut obs = |_: &MetricsRecord, _: &ActorCriticNet, _: &LabelLedger| {
            seen += 1;
            if seen == 2 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
        };
        let out = train_rl(&cfg, &set, None, &mut obs).unwrap();
        assert_eq!(out.stop, StopReason::Interrupted);
        assert_eq!(out.metrics.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { gamma: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { target_train_error: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { eta_pi: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
