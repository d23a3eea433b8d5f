//! The commands behind the CLI, usable directly from tests.

use std::cell::RefCell;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use reward_probe_core::dataset::{LabelLedger, LabeledSet, Task};
use reward_probe_core::nets::ActorCriticNet;
use reward_probe_core::probe::{extract_features, fit_probe, probe_accuracy, FeatureSet};
use reward_probe_core::trainer::{self, MetricsRecord, StopReason, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Sidecar, SidecarMetrics};
use crate::config::{hex_digest, ExperimentConfig, TaskName};
use crate::error::{Error, Result};
use crate::idx::{load_labeled_set, MnistFiles};
use crate::manifest::{
    source_revision, unix_now, DatasetInfo, FileDigest, LedgerJson, Manifest, RunStatus, TrainerKind,
};
use crate::metrics::{self, MetricsWriter};
use crate::plot;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const PLOT_FILE: &str = "pr_proper_action.svg";

pub struct Dataset {
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub info: DatasetInfo,
}

fn take_prefix(set: LabeledSet, n: Option<usize>, field: &str) -> Result<LabeledSet> {
    match n {
        None => Ok(set),
        Some(n) if n <= set.len() => Ok(set.subset(n)),
        Some(n) => Err(Error::Config(vec![format!(
            "{field}: {n} exceeds the {} available images",
            set.len()
        )])),
    }
}

/// Loads the four MNIST files named by the config (after the subset
/// options) and records their digests.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = cfg.data_dir();
    let files = MnistFiles::in_dir(&dir);
    let missing = files.missing();
    if !missing.is_empty() {
        let mut problems: Vec<String> = missing
            .iter()
            .map(|p| format!("data.dir: missing dataset file {}", p.display()))
            .collect();
        problems.push(format!(
            "set data.dir in the config or {} to the MNIST directory (scripts/fetch_mnist.sh downloads it)",
            crate::config::DATA_DIR_ENV
        ));
        return Err(Error::Config(problems));
    }
    let mut digests = Vec::new();
    for p in files.all() {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        digests.push(FileDigest {
            name: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            bytes: bytes.len() as u64,
            sha256: hex_digest(&bytes),
        });
    }
    let train = load_labeled_set(&files.train_images, &files.train_labels)?;
    let test = load_labeled_set(&files.test_images, &files.test_labels)?;
    let train = take_prefix(train, cfg.data.train_subset, "data.train_subset")?;
    let test = take_prefix(test, cfg.data.test_subset, "data.test_subset")?;
    let info = DatasetInfo {
        dir,
        files: digests,
        train_count: train.len(),
        test_count: test.len(),
    };
    Ok(Dataset { train, test, info })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: Vec<MetricsRecord>,
    pub net: ActorCriticNet,
    pub final_checkpoint: PathBuf,
}

fn sidecar(manifest: &Manifest, record: Option<&MetricsRecord>) -> Sidecar {
    Sidecar {
        format_version: checkpoint::FORMAT_VERSION,
        checkpoint_id: String::new(),
        config_hash: manifest.config_hash.clone(),
        run_id: manifest.run_id.clone(),
        trainer: manifest.trainer.name().into(),
        task: manifest.config.task,
        epoch: record.map_or(0, |r| r.epoch),
        steps: record.map_or(0, |r| r.steps),
        seed: manifest.seed,
        block_names: Vec::new(),
        metrics: record.map(SidecarMetrics::from),
    }
}

/// Run id from the directory name.
fn run_id(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Default directory under `runs/` when `--out` is not given.
pub fn default_run_dir(cfg: &ExperimentConfig, kind: TrainerKind) -> PathBuf {
    PathBuf::from("runs").join(format!(
        "{}-{}-seed{}-{}",
        cfg.name,
        kind.name(),
        cfg.seed,
        unix_now()
    ))
}

/// Trains on an already loaded dataset and fills `dir`.
pub fn train_in(cfg: &ExperimentConfig, kind: TrainerKind, data: &Dataset, dir: &Path) -> Result<RunResult> {
    cfg.validate()?;
    if Manifest::path(dir).exists() {
        return Err(Error::Usage(format!("{} already holds a run", dir.display())));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_json_pretty() + "\n").map_err(|e| Error::io(&config_path, e))?;

    let manifest = Manifest {
        schema_version: crate::manifest::SCHEMA_VERSION,
        run_id: run_id(dir),
        trainer: kind,
        status: RunStatus::Running,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        source_revision: source_revision(),
        dataset: data.info.clone(),
        started_at_unix: unix_now(),
        finished_at_unix: None,
        ledger: LedgerJson::default(),
        epochs_completed: 0,
        steps: 0,
        stop_reason: None,
        error: None,
        final_metrics: None,
        checkpoints: Vec::new(),
    };
    manifest.write(dir)?;

    let metrics_path = dir.join(METRICS_FILE);
    let writer = RefCell::new(MetricsWriter::create(&metrics_path)?);
    let state = RefCell::new((manifest, None::<Error>));
    let started = Instant::now();
    let mut observer = |record: &MetricsRecord, net: &ActorCriticNet, ledger: &LabelLedger| {
        let mut st = state.borrow_mut();
        let (manifest, failure) = &mut *st;
        let mut row = record.clone();
        if cfg.eval.log_wall_clock {
            row.seconds = Some(started.elapsed().as_secs_f64());
        }
        let mut step = || -> Result<()> {
            writer.borrow_mut().append(&row)?;
            manifest.ledger = ledger.into();
            manifest.epochs_completed = record.epoch;
            manifest.steps = record.steps;
            let every = cfg.eval.checkpoint_every;
            if every > 0 && record.epoch.is_multiple_of(every) {
                let name = format!("epoch-{:05}.ckpt", record.epoch);
                checkpoint::save(&dir.join(&name), net, sidecar(manifest, Some(record)))?;
                manifest.checkpoints.push(name);
            }
            manifest.write(dir)
        };
        match step() {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                *failure = Some(e);
                ControlFlow::Break(())
            }
        }
    };
    let outcome: reward_probe_core::Result<TrainOutcome> = match kind {
        TrainerKind::TrainRl => trainer::train_rl(&cfg.rl_config(), &data.train, Some(&data.test), &mut observer),
        TrainerKind::TrainSupervised => {
            trainer::train_supervised(&cfg.supervised_config(), &data.train, Some(&data.test), &mut observer)
        }
    };
    let (mut manifest, failure) = state.into_inner();
    manifest.finished_at_unix = Some(unix_now());
    if let Some(e) = failure {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(e.to_string());
        manifest.write(dir)?;
        return Err(e);
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            manifest.status = match e {
                reward_probe_core::Error::Divergence { .. } => RunStatus::Diverged,
                _ => RunStatus::Failed,
            };
            manifest.error = Some(e.to_string());
            manifest.write(dir)?;
            return Err(e.into());
        }
    };
    let last = outcome.metrics.last();
    let final_path = dir.join(FINAL_CHECKPOINT);
    checkpoint::save(&final_path, &outcome.net, sidecar(&manifest, last))?;
    manifest.checkpoints.push(FINAL_CHECKPOINT.into());
    manifest.status = match outcome.stop {
        StopReason::Interrupted => RunStatus::Interrupted,
        _ => RunStatus::Completed,
    };
    manifest.stop_reason = Some(
        match outcome.stop {
            StopReason::TargetReached => "target-reached",
            StopReason::MaxEpochs => "max-epochs",
            StopReason::Interrupted => "interrupted",
        }
        .into(),
    );
    manifest.ledger = (&outcome.ledger).into();
    manifest.final_metrics = last.map(SidecarMetrics::from);
    manifest.write(dir)?;
    Ok(RunResult {
        dir: dir.to_path_buf(),
        manifest,
        metrics: outcome.metrics,
        net: outcome.net,
        final_checkpoint: final_path,
    })
}

/// Loads data per the config, then [`train_in`].
pub fn train(cfg: &ExperimentConfig, kind: TrainerKind, dir: &Path) -> Result<RunResult> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    train_in(cfg, kind, &data, dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeReport {
    /// `raw-pixels` for the pixel baseline.
    pub checkpoint_id: String,
    /// Task the checkpoint was trained on, if known.
    pub task_trained_on: Option<TaskName>,
    pub feature_dim: usize,
    pub probe_train_accuracy: f64,
    pub probe_test_accuracy: f64,
    pub epochs: usize,
    pub config_hash: String,
    /// Test accuracy of the checkpoint's own policy head, for ten-action
    /// checkpoints.
    pub network_test_accuracy: Option<f64>,
    pub train_count: usize,
    pub test_count: usize,
    pub ledger: LedgerJson,
}

pub enum ProbeSource<'a> {
    RawPixels,
    Network {
        net: &'a ActorCriticNet,
        id: String,
        task: Option<Task>,
    },
}

/// Fits a fresh ten-class probe on training features and scores it on the
/// test set. The network is only read.
pub fn probe_in(cfg: &ExperimentConfig, data: &Dataset, source: ProbeSource<'_>) -> Result<ProbeReport> {
    cfg.validate()?;
    let mut ledger = LabelLedger::default();
    let (train, test, id, task, own) = match source {
        ProbeSource::RawPixels => (
            FeatureSet::raw_pixels(&data.train, &mut ledger),
            FeatureSet::raw_pixels(&data.test, &mut ledger),
            "raw-pixels".to_string(),
            None,
            None,
        ),
        ProbeSource::Network { net, id, task } => {
            let train = extract_features(net, &data.train, id.clone(), &mut ledger)?;
            let test = extract_features(net, &data.test, id.clone(), &mut ledger)?;
            let own = if net.config().actions == Task::TenClass.num_actions() {
                let err = trainer::evaluate(net, &data.test, Task::TenClass, &mut ledger)?;
                Some(1.0 - err)
            } else {
                None
            };
            (train, test, id, task, own)
        }
    };
    let fit = fit_probe(&train, &cfg.probe_config())?;
    let test_acc = probe_accuracy(&fit.probe, &test)?;
    Ok(ProbeReport {
        checkpoint_id: id,
        task_trained_on: task.map(TaskName::from),
        feature_dim: train.dim(),
        probe_train_accuracy: fit.train_accuracy,
        probe_test_accuracy: test_acc,
        epochs: fit.epochs,
        config_hash: cfg.hash(),
        network_test_accuracy: own,
        train_count: train.len(),
        test_count: test.len(),
        ledger: (&ledger).into(),
    })
}

/// Default report location: next to the checkpoint, or the working
/// directory for the pixel baseline.
pub fn default_report_path(checkpoint: Option<&Path>) -> PathBuf {
    match checkpoint {
        Some(c) => {
            let mut name = c.file_name().unwrap_or_default().to_os_string();
            name.push(".probe.json");
            c.with_file_name(name)
        }
        None => PathBuf::from("probe-raw-pixels.json"),
    }
}

pub fn write_report(path: &Path, report: &ProbeReport) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Probes a checkpoint file (or raw pixels when `checkpoint` is `None`).
pub fn probe(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<ProbeReport> {
    cfg.validate()?;
    let loaded = checkpoint.map(checkpoint::load).transpose()?;
    let data = load_dataset(cfg)?;
    let source = match &loaded {
        None => ProbeSource::RawPixels,
        Some(l) => ProbeSource::Network {
            net: &l.net,
            id: l.id.clone(),
            task: l.sidecar.as_ref().map(|s| s.task.into()),
        },
    };
    probe_in(cfg, &data, source)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub run_id: String,
    pub trainer: TrainerKind,
    pub status: RunStatus,
    pub ledger: LedgerJson,
    pub steps: u64,
    pub epochs: usize,
    pub violations: Vec<String>,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let l = &self.ledger;
        let mut s = format!(
            "run {} ({}, {:?}, {} epochs, {} steps)\n\
             env label reads:       {}\n\
             agent label reads:     {}\n\
             evaluator label reads: {}\n",
            self.run_id,
            self.trainer.name(),
            self.status,
            self.epochs,
            self.steps,
            l.env_label_reads,
            l.agent_label_reads,
            l.evaluator_label_reads,
        );
        match self.trainer {
            TrainerKind::TrainRl => {
                s.push_str(&format!("agent-side labels consumed: {}\n", l.agent_label_reads));
            }
            TrainerKind::TrainSupervised => s.push_str(&format!(
                "agent-side labels consumed: {} (supervised: one per training visit, {} visits)\n",
                l.agent_label_reads, self.steps
            )),
        }
        for v in &self.violations {
            s.push_str(&format!("VIOLATION: {v}\n"));
        }
        s.push_str(if self.passed() { "audit: ok\n" } else { "audit: FAILED\n" });
        s
    }
}

/// Checks the label ledger of a run directory against its step count, and
/// the final checkpoint against its sidecar.
pub fn audit(dir: &Path) -> Result<Audit> {
    let m = Manifest::read(dir)?;
    let l = m.ledger;
    let mut violations = Vec::new();
    match m.trainer {
        TrainerKind::TrainRl => {
            if l.agent_label_reads != 0 {
                violations.push(format!("RL agent read {} labels", l.agent_label_reads));
            }
            if l.env_label_reads != m.steps {
                violations.push(format!(
                    "environment read {} labels over {} steps",
                    l.env_label_reads, m.steps
                ));
            }
        }
        TrainerKind::TrainSupervised => {
            if l.agent_label_reads != m.steps {
                violations.push(format!(
                    "supervised learner read {} labels over {} visits",
                    l.agent_label_reads, m.steps
                ));
            }
            if l.env_label_reads != 0 {
                violations.push(format!("no environment, yet {} env reads", l.env_label_reads));
            }
        }
    }
    let metrics_path = dir.join(METRICS_FILE);
    if metrics_path.exists() {
        let rows = metrics::read(&metrics_path)?;
        if rows.len() != m.epochs_completed {
            violations.push(format!(
                "metrics has {} rows but the manifest records {} epochs",
                rows.len(),
                m.epochs_completed
            ));
        }
        if let Some(last) = rows.last() {
            if last.steps != m.steps {
                violations.push(format!("metrics ends at {} steps, manifest at {}", last.steps, m.steps));
            }
        }
    }
    for name in &m.checkpoints {
        if let Err(e) = checkpoint::load(&dir.join(name)) {
            violations.push(format!("checkpoint {name}: {e}"));
        }
    }
    Ok(Audit {
        run_id: m.run_id,
        trainer: m.trainer,
        status: m.status,
        ledger: l,
        steps: m.steps,
        epochs: m.epochs_completed,
        violations,
    })
}

/// Writes the Pr{Proper Action} plot for a run directory; returns its path.
pub fn plot_run(dir: &Path) -> Result<PathBuf> {
    let path = dir.join(METRICS_FILE);
    let records = metrics::read(&path)?;
    let title = Manifest::read(dir)
        .map(|m| format!("{} ({})", m.run_id, m.trainer.name()))
        .unwrap_or_else(|_| run_id(dir));
    let svg = plot::render_svg(&records, &title)
        .ok_or_else(|| Error::Usage(format!("{}: no epochs to plot", path.display())))?;
    let out = dir.join(PLOT_FILE);
    std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}
