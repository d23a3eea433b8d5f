//! Experiment configuration: a versioned JSON schema, named presets, and the
//! mapping onto the core training types.
//!
//! A config file may be partial. It is merged key-by-key over a base (the
//! preset named by `--preset`, else the built-in defaults), then
//! deserialized with unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use reward_probe_core::dataset::Task;
use reward_probe_core::envsim::RewardSchedule;
use reward_probe_core::nets::{NetConfig, ValueOutput, DEFAULT_HIDDEN};
use reward_probe_core::ndmath::DEFAULT_LEAKY_SLOPE;
use reward_probe_core::probe::ProbeConfig;
use reward_probe_core::trainer::{StopMetric, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    TenClass,
    Parity,
}

impl From<TaskName> for Task {
    fn from(t: TaskName) -> Task {
        match t {
            TaskName::TenClass => Task::TenClass,
            TaskName::Parity => Task::Parity,
        }
    }
}

impl From<Task> for TaskName {
    fn from(t: Task) -> TaskName {
        match t {
            Task::TenClass => TaskName::TenClass,
            Task::Parity => TaskName::Parity,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskName::TenClass => "ten-class",
            TaskName::Parity => "parity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueOutputName {
    LeakyRelu,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMetricName {
    Online,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding the four MNIST IDX files. Falls back to
    /// `$REWARD_PROBE_DATA_DIR`, then `data/mnist`.
    pub dir: Option<PathBuf>,
    /// Use only the first `n` training images.
    pub train_subset: Option<usize>,
    /// Use only the first `n` test images.
    pub test_subset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden: usize,
    pub leaky_slope: f64,
    pub value_output: ValueOutputName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub r_correct: f64,
    pub r_terminal: f64,
    pub r_error: f64,
    pub n_consecutive: u32,
    pub error_terminates: bool,
    pub stack_terminal_reward: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    pub eta_pi: f64,
    pub eta_v: f64,
    pub gamma: f64,
    pub target_train_error: f64,
    pub max_epochs: usize,
    pub stop_metric: StopMetricName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedSection {
    pub eta: f64,
    pub target_train_error: f64,
    pub max_epochs: usize,
    pub stop_metric: StopMetricName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Frozen train-set evaluation period in epochs (0: only at the end).
    pub frozen_every: usize,
    /// Test-set evaluation period in epochs (0: only at the end).
    pub test_every: usize,
    /// Intermediate checkpoint period in epochs (0: final checkpoint only).
    pub checkpoint_every: usize,
    /// Fill the `seconds` CSV column. Off by default so metrics files stay
    /// byte-comparable across runs.
    pub log_wall_clock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub eta: f64,
    pub max_epochs: usize,
    pub plateau_tol: f64,
    pub plateau_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub task: TaskName,
    pub data: DataSection,
    pub net: NetSection,
    pub rewards: RewardSection,
    pub rl: RlSection,
    pub supervised: SupervisedSection,
    pub eval: EvalSection,
    pub probe: ProbeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let schedule = RewardSchedule::default();
        let core = TrainConfig::default();
        let probe = ProbeConfig::default();
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "default".into(),
            seed: 0,
            task: TaskName::TenClass,
            data: DataSection {
                dir: None,
                train_subset: None,
                test_subset: None,
            },
            net: NetSection {
                hidden: DEFAULT_HIDDEN,
                leaky_slope: DEFAULT_LEAKY_SLOPE,
                value_output: ValueOutputName::LeakyRelu,
            },
            rewards: RewardSection {
                r_correct: schedule.r_correct,
                r_terminal: schedule.r_terminal,
                r_error: schedule.r_error,
                n_consecutive: schedule.n_consecutive,
                error_terminates: false,
                stack_terminal_reward: false,
            },
            rl: RlSection {
                eta_pi: core.eta_pi,
                eta_v: core.eta_v,
                gamma: core.gamma,
                target_train_error: core.target_train_error,
                max_epochs: core.max_epochs,
                stop_metric: StopMetricName::Online,
            },
            supervised: SupervisedSection {
                eta: core.eta_supervised,
                target_train_error: 0.0,
                max_epochs: 100,
                stop_metric: StopMetricName::Frozen,
            },
            eval: EvalSection {
                frozen_every: 1,
                test_every: 0,
                checkpoint_every: 0,
                log_wall_clock: false,
            },
            probe: ProbeSection {
                eta: probe.eta,
                max_epochs: probe.max_epochs,
                plateau_tol: probe.plateau_tol,
                plateau_window: probe.plateau_window,
            },
        }
    }
}

/// Named starting points shipped with the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    PaperFull,
    Subset10k,
    Parity,
    CiSmoke,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::PaperFull, Preset::Subset10k, Preset::Parity, Preset::CiSmoke];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFull => "paper-full",
            Preset::Subset10k => "subset-10k",
            Preset::Parity => "parity",
            Preset::CiSmoke => "ci-smoke",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        // A Leaky ReLU value output can only go negative through large
        // pre-activations; under the default step sizes that drags the trunk
        // into a single-action policy within a few epochs. Presets read V
        // linearly instead.
        let mut base = ExperimentConfig::default();
        base.net.value_output = ValueOutputName::Linear;
        match self {
            Preset::PaperFull => ExperimentConfig {
                name: self.name().into(),
                ..base
            },
            Preset::Subset10k => {
                let mut c = ExperimentConfig {
                    name: self.name().into(),
                    ..base
                };
                c.data.train_subset = Some(10_000);
                c.rl.max_epochs = 400;
                c.rl.target_train_error = 0.02;
                c.rl.stop_metric = StopMetricName::Frozen;
                c.supervised.target_train_error = 0.0;
                c.eval.test_every = 10;
                c
            }
            Preset::Parity => {
                let mut c = Preset::Subset10k.config();
                c.name = self.name().into();
                c.task = TaskName::Parity;
                c
            }
            Preset::CiSmoke => {
                let mut c = ExperimentConfig {
                    name: self.name().into(),
                    ..base
                };
                c.data.train_subset = Some(500);
                c.data.test_subset = Some(500);
                c.rl.max_epochs = 3;
                c.supervised.max_epochs = 3;
                c.probe.max_epochs = 5;
                c
            }
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Usage(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

impl ExperimentConfig {
    /// Overlays a JSON document on `self` and rejects unknown keys.
    pub fn overlay_json(&self, text: &str, origin: &Path) -> Result<Self> {
        let patch: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", origin.display())]))?;
        if !patch.is_object() {
            return Err(Error::Config(vec![format!("{}: top level must be an object", origin.display())]));
        }
        let mut merged = serde_json::to_value(self).expect("config serializes");
        merge(&mut merged, patch);
        serde_json::from_value(merged).map_err(|e| Error::Config(vec![format!("{}: {e}", origin.display())]))
    }

    /// Resolves `--preset` and `--config` into one validated config.
    pub fn load(preset: Option<Preset>, path: Option<&Path>) -> Result<Self> {
        let base = preset.map(Preset::config).unwrap_or_default();
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                base.overlay_json(&text, p)?
            }
            None => base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// All field-level problems at once.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.data.train_subset == Some(0) {
            out.push("data.train_subset: must be positive".into());
        }
        if self.data.test_subset == Some(0) {
            out.push("data.test_subset: must be positive".into());
        }
        if self.supervised.max_epochs == 0 {
            out.push("supervised.max_epochs: must be positive".into());
        }
        for cfg in [self.rl_config(), self.supervised_config()] {
            if let Err(e) = cfg.validate() {
                let msg = e.to_string();
                if !out.contains(&msg) {
                    out.push(msg);
                }
            }
        }
        if let Err(e) = self.probe_config().validate() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn task(&self) -> Task {
        self.task.into()
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden: self.net.hidden,
            leaky_slope: self.net.leaky_slope,
            value_output: match self.net.value_output {
                ValueOutputName::LeakyRelu => ValueOutput::LeakyRelu,
                ValueOutputName::Linear => ValueOutput::Linear,
            },
            ..NetConfig::mnist(self.task())
        }
    }

    fn base_train_config(&self) -> TrainConfig {
        let r = &self.rewards;
        TrainConfig {
            seed: self.seed,
            schedule: RewardSchedule {
                r_correct: r.r_correct,
                r_terminal: r.r_terminal,
                r_error: r.r_error,
                n_consecutive: r.n_consecutive,
            },
            error_terminates: r.error_terminates,
            stack_terminal_reward: r.stack_terminal_reward,
            task: self.task(),
            net: self.net_config(),
            frozen_eval_every: self.eval.frozen_every,
            test_eval_every: self.eval.test_every,
            ..TrainConfig::default()
        }
    }

    pub fn rl_config(&self) -> TrainConfig {
        TrainConfig {
            eta_pi: self.rl.eta_pi,
            eta_v: self.rl.eta_v,
            gamma: self.rl.gamma,
            target_train_error: self.rl.target_train_error,
            max_epochs: self.rl.max_epochs,
            stop_metric: stop_metric(self.rl.stop_metric),
            ..self.base_train_config()
        }
    }

    pub fn supervised_config(&self) -> TrainConfig {
        TrainConfig {
            eta_supervised: self.supervised.eta,
            supervised_target_train_error: self.supervised.target_train_error,
            max_epochs: self.supervised.max_epochs,
            stop_metric: stop_metric(self.supervised.stop_metric),
            ..self.base_train_config()
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            eta: self.probe.eta,
            max_epochs: self.probe.max_epochs,
            plateau_tol: self.probe.plateau_tol,
            plateau_window: self.probe.plateau_window,
            seed: self.seed,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex_digest(compact.as_bytes())[..16].to_string()
    }

    /// Dataset directory: config, then `$REWARD_PROBE_DATA_DIR`, then
    /// `data/mnist`.
    pub fn data_dir(&self) -> PathBuf {
        resolve_data_dir(self.data.dir.as_deref(), std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }
}

pub const DATA_DIR_ENV: &str = "REWARD_PROBE_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

fn resolve_data_dir(configured: Option<&Path>, env: Option<PathBuf>) -> PathBuf {
    configured
        .map(Path::to_path_buf)
        .or(env)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

fn stop_metric(m: StopMetricName) -> StopMetric {
    match m {
        StopMetricName::Online => StopMetric::Online,
        StopMetricName::Frozen => StopMetric::Frozen,
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in Preset::ALL {
            let c = p.config();
            c.validate().unwrap();
            assert_eq!(c.name, p.name());
            let back: ExperimentConfig = serde_json::from_str(&c.to_json_pretty()).unwrap();
            assert_eq!(back, c);
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn presets_read_value_linearly() {
        assert_eq!(ExperimentConfig::default().net.value_output, ValueOutputName::LeakyRelu);
        for p in Preset::ALL {
            assert_eq!(p.config().net.value_output, ValueOutputName::Linear, "{}", p.name());
        }
    }

    #[test]
    fn defaults_match_core() {
        let c = ExperimentConfig::default().rl_config();
        assert_eq!((c.eta_pi, c.eta_v, c.gamma, c.target_train_error), (1e-3, 1e-3, 0.9, 0.004));
        assert_eq!(c.max_epochs, 1200);
    }

    #[test]
    fn partial_overlay_merges() {
        let base = Preset::Subset10k.config();
        let c = base
            .overlay_json(r#"{"seed": 7, "rl": {"eta_pi": 0.5}}"#, Path::new("x.json"))
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.rl.eta_pi, 0.5);
        assert_eq!(c.rl.eta_v, base.rl.eta_v);
        assert_eq!(c.data.train_subset, Some(10_000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = ExperimentConfig::default();
        let err = base.overlay_json(r#"{"rl": {"eta_p": 1.0}}"#, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("eta_p"), "{err}");
        assert!(base.overlay_json(r#"{"sede": 1}"#, Path::new("c.json")).is_err());
        assert!(base.overlay_json("[1]", Path::new("c.json")).is_err());
    }

    #[test]
    fn problems_are_field_level() {
        let mut c = ExperimentConfig::default();
        c.rl.gamma = 1.5;
        c.schema_version = 9;
        c.data.train_subset = Some(0);
        let p = c.problems();
        assert_eq!(p.len(), 3, "{p:?}");
        assert!(p.iter().any(|m| m.contains("gamma")));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn data_dir_precedence() {
        let env = Some(PathBuf::from("/env"));
        assert_eq!(resolve_data_dir(Some(Path::new("/cfg")), env.clone()), PathBuf::from("/cfg"));
        assert_eq!(resolve_data_dir(None, env), PathBuf::from("/env"));
        assert_eq!(resolve_data_dir(None, None), PathBuf::from(DEFAULT_DATA_DIR));
    }

    #[test]
    fn parity_preset_maps_actions() {
        let c = Preset::Parity.config();
        assert_eq!(c.net_config().actions, 2);
        assert_eq!(c.rl_config().task, Task::Parity);
    }
}
