//! Argument parsing and dispatch. Returns process exit codes instead of
//! exiting so tests can drive it in-process.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Preset};
use crate::error::{exit, Error, Result};
use crate::manifest::TrainerKind;
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "reward-probe", version, about = "Actor-critic MNIST classifier and representation probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// JSON config, merged over the preset (or the defaults).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// paper-full, subset-10k, parity or ci-smoke.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let preset = self.preset.as_deref().map(str::parse::<Preset>).transpose()?;
        let mut cfg = ExperimentConfig::load(preset, self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the actor-critic classifier.
    TrainRl {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (default: runs/<name>-train-rl-seed<k>-<time>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train the supervised baseline with the same architecture.
    TrainSupervised {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Fit a linear ten-class probe on frozen features.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint whose trunk provides the features.
        #[arg(long, value_name = "PATH", required_unless_present = "raw_pixels", conflicts_with = "raw_pixels")]
        checkpoint: Option<PathBuf>,
        /// Probe the pixels themselves.
        #[arg(long)]
        raw_pixels: bool,
        /// Report path (default: <checkpoint>.probe.json).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check a run's label ledger and checkpoints.
    Audit {
        run_dir: PathBuf,
    },
    /// Plot Pr{Proper Action} per epoch as SVG.
    Plot {
        run_dir: PathBuf,
    },
    /// Print a resolved config as JSON.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Exit code used when `audit` finds an invariant violation.
pub const AUDIT_FAILED: i32 = 1;

fn train(kind: TrainerKind, cfg: &ConfigArgs, out: Option<PathBuf>, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = cfg.resolve()?;
    let dir = out.unwrap_or_else(|| run::default_run_dir(&cfg, kind));
    let res = run::train(&cfg, kind, &dir)?;
    let last = res.metrics.last();
    let _ = writeln!(
        stdout,
        "{}: {} after {} epochs, online train error {}, frozen train error {}, test error {}",
        res.dir.display(),
        res.manifest.stop_reason.as_deref().unwrap_or("stopped"),
        res.metrics.len(),
        fmt(last.map(|m| m.train_error_online)),
        fmt(last.and_then(|m| m.train_error_frozen)),
        fmt(last.and_then(|m| m.test_error)),
    );
    Ok(exit::OK)
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "n/a".into())
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::TrainRl { cfg, out } => train(TrainerKind::TrainRl, &cfg, out, stdout),
        Command::TrainSupervised { cfg, out } => train(TrainerKind::TrainSupervised, &cfg, out, stdout),
        Command::Probe {
            cfg,
            checkpoint,
            raw_pixels: _,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let report = run::probe(&cfg, checkpoint.as_deref())?;
            let path = out.unwrap_or_else(|| run::default_report_path(checkpoint.as_deref()));
            run::write_report(&path, &report)?;
            let _ = writeln!(
                stdout,
                "{}: probe train accuracy {:.4}, test accuracy {:.4} after {} epochs",
                path.display(),
                report.probe_train_accuracy,
                report.probe_test_accuracy,
                report.epochs
            );
            Ok(exit::OK)
        }
        Command::Audit { run_dir } => {
            let audit = run::audit(&run_dir)?;
            let _ = stdout.write_all(audit.summary().as_bytes());
            Ok(if audit.passed() { exit::OK } else { AUDIT_FAILED })
        }
        Command::Plot { run_dir } => {
            let path = run::plot_run(&run_dir)?;
            let _ = writeln!(stdout, "{}", path.display());
            Ok(exit::OK)
        }
        Command::ShowConfig { cfg } => {
            let cfg = cfg.resolve()?;
            let _ = writeln!(stdout, "{}", cfg.to_json_pretty());
            Ok(exit::OK)
        }
    }
}

/// Parses `args` and runs the command, printing errors to `stderr`.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(rendered.as_bytes());
            } else {
                let _ = stdout.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

impl From<clap::Error> for Error {
    fn from(e: clap::Error) -> Self {
        Error::Usage(e.to_string())
    }
}
