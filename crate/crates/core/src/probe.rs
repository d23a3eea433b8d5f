//! Linear probes on frozen features.
//!
//! A probe is a multinomial logistic regression fit from scratch on features
//! taken from a frozen trunk (or on raw pixels as a reference floor). Its
//! held-out accuracy measures how much class information the representation
//! carries.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{ClassLabel, LabelLedger, LabeledSet, Reader, NUM_CLASSES};
use crate::ndmath::{argmax, axpy, dot, softmax_into, Matrix, Rng, Stream, Vector};
use crate::nets::ActorCriticNet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Vec<Vector>,
    labels: Vec<ClassLabel>,
    /// Provenance, e.g. checkpoint id and the task that trained it.
    pub source: String,
}

impl FeatureSet {
    pub fn new(features: Vec<Vector>, labels: Vec<ClassLabel>, source: String) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::config("features", "empty feature set"));
        }
        if features.len() != labels.len() {
            return Err(Error::shape("FeatureSet::new", features.len(), labels.len()));
        }
        let dim = features[0].dim();
        if let Some(bad) = features.iter().find(|f| f.dim() != dim) {
            return Err(Error::shape("FeatureSet::new", bad.dim(), dim));
        }
        Ok(FeatureSet {
            features,
            labels,
            source,
        })
    }

    /// Pixels used directly as features.
    pub fn raw_pixels(set: &LabeledSet, ledger: &mut LabelLedger) -> Self {
        let labels = (0..set.len())
            .map(|i| set.read_label(i, Reader::Evaluator, ledger))
            .collect();
        FeatureSet {
            features: set.images().to_vec(),
            labels,
            source: "raw-pixels".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].dim()
    }

    pub fn features(&self) -> &[Vector] {
        &self.features
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }
}

/// Trunk representations of every image in `set`; the network is only read.
pub fn extract_features(
    net: &ActorCriticNet,
    set: &LabeledSet,
    source: impl Into<String>,
    ledger: &mut LabelLedger,
) -> Result<FeatureSet> {
    if net.config().input != set.dim() {
        return Err(Error::shape("extract_features", net.config().input, set.dim()));
    }
    let features = set
        .images()
        .iter()
        .map(|x| net.extract_representation(x))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..set.len())
        .map(|i| set.read_label(i, Reader::Evaluator, ledger))
        .collect();
    FeatureSet::new(features, labels, source.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub eta: f64,
    pub max_epochs: usize,
    /// Stop once training accuracy improved by less than this fraction over
    /// the last `plateau_window` epochs.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            eta: 1e-2,
            max_epochs: 200,
            plateau_tol: 1e-4,
            plateau_window: 5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::config("probe.eta", "must be positive"));
        }
        if self.max_epochs == 0 || self.plateau_window == 0 {
            return Err(Error::config("probe", "max_epochs and plateau_window must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub probe: LinearProbe,
    pub epochs: usize,
    pub train_accuracy: f64,
}

impl LinearProbe {
    pub fn zeros(dim: usize) -> Self {
        LinearProbe {
            weights: Matrix::zeros(NUM_CLASSES, dim),
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    /// Uniform random weights in `±scale`, for chance-level baselines.
    pub fn random(dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = LinearProbe::zeros(dim);
        p.weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-scale, scale));
        p
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    fn logits_into(&self, f: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.weights.row(c), f) + self.bias[c];
        }
    }

    pub fn predict(&self, f: &[f64]) -> usize {
        let mut z = [0.0; NUM_CLASSES];
        self.logits_into(f, &mut z);
        argmax(&z)
    }
}

fn shuffled(count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        order.swap(i, rng.below(i as u64 + 1) as usize);
    }
    order
}

/// Fits a fresh probe by per-sample SGD on the softmax cross-entropy,
/// reshuffling every epoch, until training accuracy plateaus or
/// `max_epochs`.
pub fn fit_probe(train: &FeatureSet, cfg: &ProbeConfig) -> Result<ProbeFit> {
    cfg.validate()?;
    let mut probe = LinearProbe::zeros(train.dim());
    let mut history: Vec<f64> = Vec::new();
    let mut z = [0.0; NUM_CLASSES];
    let mut p = [0.0; NUM_CLASSES];
    for epoch in 0..cfg.max_epochs {
        let mut rng = Rng::derive(cfg.seed, Stream::Probe, epoch as u64);
        for i in shuffled(train.len(), &mut rng) {
            let f = &train.features[i];
            probe.logits_into(f, &mut z);
            softmax_into(&z, &mut p);
            let y = train.labels[i].index();
            p[y] -= 1.0;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    step: i as u64,
                    what: "probe logits",
                });
            }
            for (c, &g) in p.iter().enumerate() {
                if g != 0.0 {
                    axpy(-cfg.eta * g, f, probe.weights.row_mut(c));
                    probe.bias[c] -= cfg.eta * g;
                }
            }
        }
        let acc = probe_accuracy(&probe, train)?;
        history.push(acc);
        let e = history.len();
        let plateaued = acc >= 1.0
            || (e > cfg.plateau_window && {
                let before = history[e - 1 - cfg.plateau_window];
                (acc - before) / before.max(1e-12) < cfg.plateau_tol
            });
        if plateaued {
            break;
        }
    }
    Ok(ProbeFit {
        probe,
        epochs: history.len(),
        train_accuracy: *history.last().expect("at least one epoch"),
    })
}

/// Argmax accuracy in `[0, 1]`.
pub fn probe_accuracy(probe: &LinearProbe, features: &FeatureSet) -> Result<f64> {
    if probe.dim() != features.dim() {
        return Err(Error::shape(
            "probe_accuracy",
            format!("probe width {}", probe.dim()),
            format!("features {}", features.dim()),
        ));
    }
    let correct = features
        .features
        .iter()
        .zip(&features.labels)
        .filter(|(f, l)| probe.predict(f) == l.index())
        .count();
    Ok(correct as f64 / features.len() as f64)
}
