use crate::dataset::{epoch_order, EpochOrder, LabelLedger, LabeledSet, Reader, Task};
use crate::ndmath::Vector;
use crate::{Error, Result};

/// Reward constants and the episode length rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSchedule {
    pub r_correct: f64,
    pub r_terminal: f64,
    pub r_error: f64,
    pub n_consecutive: u32,
}

impl Default for RewardSchedule {
    fn default() -> Self {
        RewardSchedule {
            r_correct: 1.0,
            r_terminal: 10.0,
            r_error: -5.0,
            n_consecutive: 5,
        }
    }
}

impl RewardSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_consecutive < 1 {
            return Err(Error::config("reward.n_consecutive", "must be at least 1"));
        }
        if !(self.r_correct.is_finite() && self.r_terminal.is_finite() && self.r_error.is_finite())
        {
            return Err(Error::config("reward", "rewards must be finite"));
        }
        if self.r_terminal < self.r_correct {
            return Err(Error::config("reward.r_terminal", "must be >= r_correct"));
        }
        // Errors are recognised from the reward alone, so they must be distinguishable.
        if self.r_error >= self.r_correct {
            return Err(Error::config("reward.r_error", "must be < r_correct"));
        }
        Ok(())
    }

    /// Undiscounted return of an episode with no errors.
    pub fn flawless_episode_return(&self, stack_terminal: bool) -> f64 {
        let bonus = if stack_terminal { self.r_correct } else { 0.0 };
        self.r_correct * f64::from(self.n_consecutive - 1) + self.r_terminal + bonus
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub schedule: RewardSchedule,
    /// End the episode on an error instead of only resetting the streak.
    pub error_terminates: bool,
    /// Pay `r_correct + r_terminal` on the terminal step instead of `r_terminal`.
    pub stack_terminal_reward: bool,
    pub task: Task,
    /// Run seed; epoch orders are derived from it.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            schedule: RewardSchedule::default(),
            error_terminates: false,
            stack_terminal_reward: false,
            task: Task::TenClass,
            seed: 0,
        }
    }
}

/// The environment's response to one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<'a> {
    pub reward: f64,
    /// Next observation; `None` on terminal steps.
    pub next_state: Option<&'a Vector>,
    pub terminal: bool,
}

/// What an agent may see of an environment: observations, rewards and the
/// terminal flag. There is no label accessor.
pub trait Environment<'a> {
    fn num_actions(&self) -> usize;
    fn reset(&mut self) -> &'a Vector;
    fn step(&mut self, action: usize) -> Result<StepOutcome<'a>>;
}

/// Presents digits from a per-epoch permuted stream and rewards predictions
/// against labels only it can read.
#[derive(Debug, Clone)]
pub struct ClassificationEnv<'a> {
    data: &'a LabeledSet,
    cfg: EnvConfig,
    order: EpochOrder,
    cursor: usize,
    presented: Option<usize>,
    streak: u32,
    ledger: LabelLedger,
    steps: u64,
}

impl<'a> ClassificationEnv<'a> {
    pub fn new(data: &'a LabeledSet, cfg: EnvConfig) -> Result<Self> {
        cfg.schedule.validate()?;
        Ok(ClassificationEnv {
            data,
            cfg,
            order: epoch_order(data.len(), 0, cfg.seed),
            cursor: 0,
            presented: None,
            streak: 0,
            ledger: LabelLedger::default(),
            steps: 0,
        })
    }

    /// Same environment with the Pick/Pass action alphabet.
    pub fn parity_mode(mut self) -> Self {
        self.cfg.task = Task::Parity;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> LabelLedger {
        self.ledger
    }

    /// Index of the epoch the next drawn sample belongs to.
    pub fn epoch(&self) -> u64 {
        self.order.epoch
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Samples per epoch.
    pub fn stream_len(&self) -> usize {
        self.data.len()
    }

    /// Current streak of consecutive successes.
    pub fn streak(&self) -> u32 {
        self.streak
    }

    pub fn observation(&self) -> Option<&'a Vector> {
        self.presented.map(|i| self.data.image(i))
    }

    fn draw(&mut self) -> &'a Vector {
        if self.cursor == self.order.order.len() {
            self.order = epoch_order(self.data.len(), self.order.epoch + 1, self.cfg.seed);
            self.cursor = 0;
        }
        let idx = self.order.order[self.cursor];
        self.cursor += 1;
        self.presented = Some(idx);
        self.data.image(idx)
    }
}

impl<'a> Environment<'a> for ClassificationEnv<'a> {
    fn num_actions(&self) -> usize {
        self.cfg.task.num_actions()
    }

    fn reset(&mut self) -> &'a Vector {
        self.streak = 0;
        self.draw()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome<'a>> {
        let idx = self
            .presented
            .ok_or(Error::EnvContract("step without an active episode (call reset)"))?;
        let alphabet = self.num_actions();
        if action >= alphabet {
            return Err(Error::InvalidAction { action, alphabet });
        }
        let label = self.data.read_label(idx, Reader::Environment, &mut self.ledger);
        self.steps += 1;
        let s = self.cfg.schedule;
        if action == self.cfg.task.proper_action(label) {
            self.streak += 1;
            if self.streak >= s.n_consecutive {
                self.streak = 0;
                self.presented = None;
                let reward = if self.cfg.stack_terminal_reward {
                    s.r_correct + s.r_terminal
                } else {
                    s.r_terminal
                };
                return Ok(StepOutcome {
                    reward,
                    next_state: None,
                    terminal: true,
                });
            }
            let next = self.draw();
            Ok(StepOutcome {
                reward: s.r_correct,
                next_state: Some(next),
                terminal: false,
            })
        } else {
            self.streak = 0;
            if self.cfg.error_terminates {
                self.presented = None;
                return Ok(StepOutcome {
                    reward: s.r_error,
                    next_state: None,
                    terminal: true,
                });
            }
            let next = self.draw();
            Ok(StepOutcome {
                reward: s.r_error,
                next_state: Some(next),
                terminal: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassLabel, ParityAction};
    use alloc::vec::Vec;

    /// Image `i` is a 1-pixel vector with value `i / (n - 1)` so images are
    /// identifiable; labels are `i % 10`.
    fn toy(n: usize) -> LabeledSet {
        let images = (0..n)
            .map(|i| Vector::new(alloc::vec![i as f64 / (n - 1) as f64]).unwrap())
            .collect();
        let labels = (0..n).map(|i| ClassLabel::new((i % 10) as u8).unwrap()).collect();
        LabeledSet::new(images, labels).unwrap()
    }

    fn index_of(set: &LabeledSet, v: &Vector) -> usize {
        (v[0] * (set.len() - 1) as f64).round() as usize
    }

    fn label_of(set: &LabeledSet, v: &Vector) -> usize {
        index_of(set, v) % 10
    }

    #[test]
    fn first_reset_presents_order_zero() {
        let set = toy(20);
        let cfg = EnvConfig { seed: 9, ..EnvConfig::default() };
        let mut env = ClassificationEnv::new(&set, cfg).unwrap();
        let first = env.reset();
        assert_eq!(index_of(&set, first), epoch_order(20, 0, 9).order[0]);
        let second = env.reset();
        assert_eq!(index_of(&set, second), epoch_order(20, 0, 9).order[1]);
    }

    #[test]
    fn reward_schedule_and_termination() {
        let set = toy(50);
        let mut env = ClassificationEnv::new(&set, EnvConfig::default()).unwrap();
        let mut obs = env.reset();
        for k in 1..=4 {
            let out = env.step(label_of(&set, obs)).unwrap();
            assert_eq!((out.reward, out.terminal), (1.0, false));
            assert_eq!(env.streak(), k);
            obs = out.next_state.unwrap();
        }
        let out = env.step(label_of(&set, obs)).unwrap();
        assert_eq!((out.reward, out.terminal), (10.0, true));
        assert!(out.next_state.is_none());
        assert!(matches!(env.step(0), Err(Error::EnvContract(_))));

        let obs = env.reset();
        assert_eq!(env.streak(), 0);
        let out = env.step(label_of(&set, obs)).unwrap();
        assert_eq!(out.reward, 1.0);
        let wrong = (label_of(&set, out.next_state.unwrap()) + 1) % 10;
        let out = env.step(wrong).unwrap();
        assert_eq!((out.reward, out.terminal), (-5.0, false));
        assert_eq!(env.streak(), 0);
        assert!(out.next_state.is_some());
    }

    #[test]
    fn flawless_episode_pays_fourteen() {
        let set = toy(30);
        let mut env = ClassificationEnv::new(&set, EnvConfig::default()).unwrap();
        let mut obs = env.reset();
        let mut total = 0.0;
        loop {
            let out = env.step(label_of(&set, obs)).unwrap();
            total += out.reward;
            match out.next_state {
                Some(n) => obs = n,
                None => break,
            }
        }
        assert_eq!(total, 14.0);
        assert_eq!(RewardSchedule::default().flawless_episode_return(false), 14.0);
    }

    #[test]
    fn alternative_episode_rules() {
        let set = toy(30);
        let cfg = EnvConfig {
            error_terminates: true,
            stack_terminal_reward: true,
            ..EnvConfig::default()
        };
        let mut env = ClassificationEnv::new(&set, cfg).unwrap();
        let obs = env.reset();
        let out = env.step((label_of(&set, obs) + 3) % 10).unwrap();
        assert_eq!((out.reward, out.terminal), (-5.0, true));
        let mut obs = env.reset();
        for _ in 0..4 {
            obs = env.step(label_of(&set, obs)).unwrap().next_state.unwrap();
        }
        assert_eq!(env.step(label_of(&set, obs)).unwrap().reward, 11.0);
    }

    #[test]
    fn parity_rewards() {
        // Labels are i % 10, so sample 7 has label 7 and sample 4 label 4.
        let set = toy(10);
        let cfg = EnvConfig { task: Task::Parity, ..EnvConfig::default() };
        let mut env = ClassificationEnv::new(&set, cfg).unwrap();
        assert_eq!(env.num_actions(), 2);
        let mut seen = 0;
        let mut obs = env.reset();
        while seen < 10 {
            let label = label_of(&set, obs);
            let out = env.step(ParityAction::Pick as usize).unwrap();
            if label == 7 {
                assert_eq!(out.reward, 1.0);
            }
            if label == 4 {
                assert_eq!(out.reward, -5.0);
            }
            obs = match out.next_state {
                Some(n) => n,
                None => env.reset(),
            };
            seen += 1;
        }
        assert_eq!(env.ledger().env_label_reads, 10);
        assert_eq!(env.ledger().agent_label_reads, 0);
        assert!(matches!(env.step(2), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn ledger_counts_one_read_per_step() {
        let set = toy(40);
        let mut env = ClassificationEnv::new(&set, EnvConfig::default()).unwrap();
        assert_eq!(env.ledger(), LabelLedger::default());
        env.reset();
        for k in 0..1000u64 {
            let out = env.step((k % 10) as usize).unwrap();
            if out.terminal {
                env.reset();
            }
        }
        let l = env.ledger();
        assert_eq!((l.env_label_reads, l.agent_label_reads), (1000, 0));
    }

    #[test]
    fn each_epoch_presents_every_sample_once() {
        let n = 37;
        let set = toy(n);
        let mut env = ClassificationEnv::new(&set, EnvConfig { seed: 4, ..EnvConfig::default() })
            .unwrap();
        let mut consumed: Vec<usize> = Vec::new();
        let mut obs = env.reset();
        for _ in 0..3 * n {
            consumed.push(index_of(&set, obs));
            // Alternate right and wrong answers so terminals and errors both occur.
            let act = if consumed.len().is_multiple_of(7) { 9 - label_of(&set, obs) } else { label_of(&set, obs) };
            let out = env.step(act).unwrap();
            obs = match out.next_state {
                Some(n) => n,
                None => env.reset(),
            };
        }
        for epoch in 0..3 {
            let mut chunk = consumed[epoch * n..(epoch + 1) * n].to_vec();
            assert_eq!(chunk, epoch_order(n, epoch as u64, 4).order);
            chunk.sort_unstable();
            assert_eq!(chunk, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn schedule_validation() {
        let bad = RewardSchedule { n_consecutive: 0, ..RewardSchedule::default() };
        assert!(bad.validate().is_err());
        let bad = RewardSchedule { r_terminal: 0.5, ..RewardSchedule::default() };
        assert!(bad.validate().is_err());
        let bad = RewardSchedule { r_error: 1.0, ..RewardSchedule::default() };
        assert!(bad.validate().is_err());
    }
}
