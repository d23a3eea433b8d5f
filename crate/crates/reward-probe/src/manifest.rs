//! `manifest.json`: what ran, on which data, and how it ended.
//!
//! Written before training starts, rewritten after every epoch, and
//! finalized at exit, so an interrupted run still has an accurate ledger.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use reward_probe_core::dataset::LabelLedger;
use serde::{Deserialize, Serialize};

use crate::checkpoint::SidecarMetrics;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    TrainRl,
    TrainSupervised,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::TrainRl => "train-rl",
            TrainerKind::TrainSupervised => "train-supervised",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Completed,
    Diverged,
    Interrupted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub dir: PathBuf,
    pub files: Vec<FileDigest>,
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerJson {
    pub env_label_reads: u64,
    pub agent_label_reads: u64,
    pub evaluator_label_reads: u64,
}

impl From<&LabelLedger> for LedgerJson {
    fn from(l: &LabelLedger) -> Self {
        LedgerJson {
            env_label_reads: l.env_label_reads,
            agent_label_reads: l.agent_label_reads,
            evaluator_label_reads: l.evaluator_label_reads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    pub trainer: TrainerKind,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub source_revision: String,
    pub dataset: DatasetInfo,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub ledger: LedgerJson,
    pub epochs_completed: usize,
    /// Environment steps (RL) or sample visits (supervised).
    pub steps: u64,
    pub stop_reason: Option<String>,
    pub error: Option<String>,
    pub final_metrics: Option<SidecarMetrics>,
    pub checkpoints: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Crate version plus the git commit of the source tree when available.
pub fn source_revision() -> String {
    let version = concat!("reward-probe ", env!("CARGO_PKG_VERSION"));
    let git = std::process::Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(rev) => format!("{version} (git {rev})"),
        None => version.to_string(),
    }
}

impl Manifest {
    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(FILE_NAME)
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = Self::path(run_dir);
        let tmp = run_dir.join(".manifest.json.tmp");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = Self::path(run_dir);
        let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Usage(format!("{}: no run manifest (is this a run directory?)", run_dir.display()))
            }
            _ => Error::io(&path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> Manifest {
        let config = ExperimentConfig::default();
        Manifest {
            schema_version: SCHEMA_VERSION,
            run_id: "run".into(),
            trainer: TrainerKind::TrainRl,
            status: RunStatus::Running,
            config_hash: config.hash(),
            seed: config.seed,
            config,
            source_revision: source_revision(),
            dataset: DatasetInfo {
                dir: PathBuf::from("data"),
                files: vec![],
                train_count: 1,
                test_count: 1,
            },
            started_at_unix: 1,
            finished_at_unix: None,
            ledger: LedgerJson::default(),
            epochs_completed: 0,
            steps: 0,
            stop_reason: None,
            error: None,
            final_metrics: None,
            checkpoints: vec![],
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
        assert!(!dir.path().join(".manifest.json.tmp").exists());
    }

    #[test]
    fn missing_manifest_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Manifest::read(dir.path()), Err(Error::Usage(_))));
    }

    #[test]
    fn revision_names_the_crate() {
        assert!(source_revision().starts_with("reward-probe "));
    }
}
