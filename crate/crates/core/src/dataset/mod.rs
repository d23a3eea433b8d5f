//! Labelled image sets, epoch permutations and the audited label gate.
//!
//! Labels inside a [`LabeledSet`] are private. The only way to read one is
//! [`LabeledSet::read_label`], which charges the read to a [`Reader`] on a
//! [`LabelLedger`]. A training loop that never holds a ledger entry for
//! [`Reader::Agent`] provably consumed no labels.

mod idx;

use alloc::format;
use alloc::vec::Vec;

pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, ImageStack,
    IMAGES_MAGIC, LABELS_MAGIC,
};

use crate::ndmath::{Rng, Stream, Vector};
use crate::{Error, Result};

pub const MNIST_SIDE: usize = 28;
pub const MNIST_DIM: usize = MNIST_SIDE * MNIST_SIDE;
pub const NUM_CLASSES: usize = 10;

/// A digit class in `0..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(u8);

impl ClassLabel {
    pub fn new(raw: u8) -> Result<Self> {
        if raw as usize >= NUM_CLASSES {
            return Err(Error::InvalidLabel(raw));
        }
        Ok(ClassLabel(raw))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn parity(self) -> Parity {
        if self.0 % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Odd,
    Even,
}

/// Parity of a raw label byte; out-of-range labels are rejected.
pub fn parity_label(raw: u8) -> Result<Parity> {
    ClassLabel::new(raw).map(ClassLabel::parity)
}

/// What the agent is asked to do with each presented digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Task {
    /// Name the digit: ten actions.
    #[default]
    TenClass,
    /// Pick odd digits, pass even ones: two actions.
    Parity,
}

impl Task {
    pub fn num_actions(self) -> usize {
        match self {
            Task::TenClass => NUM_CLASSES,
            Task::Parity => 2,
        }
    }

    /// The action index that counts as correct for `label`.
    pub fn proper_action(self, label: ClassLabel) -> usize {
        match self {
            Task::TenClass => label.index(),
            Task::Parity => ParityAction::for_parity(label.parity()) as usize,
        }
    }
}

/// Action alphabet of [`Task::Parity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum ParityAction {
    Pick = 0,
    Pass = 1,
}

impl ParityAction {
    pub fn for_parity(p: Parity) -> Self {
        match p {
            Parity::Odd => ParityAction::Pick,
            Parity::Even => ParityAction::Pass,
        }
    }
}

/// Who consulted a ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reader {
    /// The environment, to decide a reward.
    Environment,
    /// The learner itself (only supervised training does this).
    Agent,
    /// Measurement outside the learning loop: frozen evaluation, probe fitting.
    Evaluator,
}

/// Label-access counters for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelLedger {
    pub env_label_reads: u64,
    pub agent_label_reads: u64,
    pub evaluator_label_reads: u64,
}

impl LabelLedger {
    fn charge(&mut self, reader: Reader) {
        match reader {
            Reader::Environment => self.env_label_reads += 1,
            Reader::Agent => self.agent_label_reads += 1,
            Reader::Evaluator => self.evaluator_label_reads += 1,
        }
    }

    /// Sum of two ledgers, e.g. an environment's and its run's evaluator.
    pub fn combined(&self, other: &LabelLedger) -> LabelLedger {
        LabelLedger {
            env_label_reads: self.env_label_reads + other.env_label_reads,
            agent_label_reads: self.agent_label_reads + other.agent_label_reads,
            evaluator_label_reads: self.evaluator_label_reads + other.evaluator_label_reads,
        }
    }
}

/// Images with their hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    images: Vec<Vector>,
    labels: Vec<ClassLabel>,
    dim: usize,
}

impl LabeledSet {
    pub fn new(images: Vec<Vector>, labels: Vec<ClassLabel>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::IdxDimension("empty dataset".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::IdxDimension(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let dim = images[0].dim();
        for (i, img) in images.iter().enumerate() {
            if img.dim() != dim {
                return Err(Error::IdxDimension(format!(
                    "image {i} has dim {}, expected {dim}",
                    img.dim()
                )));
            }
            if img.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::IdxDimension(format!("image {i} has pixels outside [0,1]")));
            }
        }
        Ok(LabeledSet { images, labels, dim })
    }

    /// Like [`LabeledSet::new`] but additionally requires 28x28 images.
    pub fn new_mnist(images: Vec<Vector>, labels: Vec<ClassLabel>) -> Result<Self> {
        let set = LabeledSet::new(images, labels)?;
        if set.dim != MNIST_DIM {
            return Err(Error::IdxDimension(format!(
                "expected {MNIST_DIM}-pixel images, found {}",
                set.dim
            )));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &Vector {
        &self.images[i]
    }

    pub fn images(&self) -> &[Vector] {
        &self.images
    }

    /// Reads the label of sample `i`, charging `reader` on `ledger`.
    pub fn read_label(&self, i: usize, reader: Reader, ledger: &mut LabelLedger) -> ClassLabel {
        ledger.charge(reader);
        self.labels[i]
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn subset(&self, n: usize) -> LabeledSet {
        let n = n.min(self.len()).max(1);
        LabeledSet {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
        }
    }

    /// Per-class sample counts (charged to the evaluator).
    pub fn class_histogram(&self, ledger: &mut LabelLedger) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for i in 0..self.len() {
            h[self.read_label(i, Reader::Evaluator, ledger).index()] += 1;
        }
        h
    }

    /// Splits into parts, e.g. for re-serialization.
    pub fn into_parts(self) -> (Vec<Vector>, Vec<ClassLabel>) {
        (self.images, self.labels)
    }
}

/// One epoch's presentation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochOrder {
    pub epoch: u64,
    pub order: Vec<usize>,
}

/// Fisher-Yates permutation of `0..count` for `(seed, epoch)`.
pub fn epoch_order(count: usize, epoch: u64, seed: u64) -> EpochOrder {
    let mut rng = Rng::derive(seed, Stream::EpochOrder, epoch);
    let mut order: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    EpochOrder { epoch, order }
}
