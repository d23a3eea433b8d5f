#![allow(dead_code)]

use std::path::{Path, PathBuf};

use reward_probe::idx::MnistFiles;
use reward_probe_core::dataset::{encode_idx_images, encode_idx_labels, ClassLabel, MNIST_SIDE};
use reward_probe_core::ndmath::{Rng, Vector};

/// Writes a small MNIST-shaped dataset where class `c` lights up a distinct
/// band of pixels, plus noise. Learnable in a few epochs.
pub fn write_synthetic_mnist(dir: &Path, train: usize, test: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = Rng::new(seed);
    let mut make = |n: usize| {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = (i % 10) as u8;
            let px: Vec<f64> = (0..MNIST_SIDE * MNIST_SIDE)
                .map(|p| {
                    let row = p / MNIST_SIDE;
                    let on = row / 2 == c as usize + 2;
                    if on {
                        0.6 + 0.4 * rng.next_f64()
                    } else if rng.next_f64() < 0.05 {
                        rng.next_f64()
                    } else {
                        0.0
                    }
                })
                .collect();
            images.push(Vector::new(px).unwrap());
            labels.push(ClassLabel::new(c).unwrap());
        }
        (images, labels)
    };
    let (tr_x, tr_y) = make(train);
    let (te_x, te_y) = make(test);
    let write = |name: &str, bytes: Vec<u8>| std::fs::write(dir.join(name), bytes).unwrap();
    write(MnistFiles::TRAIN_IMAGES, encode_idx_images(&tr_x, MNIST_SIDE, MNIST_SIDE).unwrap());
    write(MnistFiles::TRAIN_LABELS, encode_idx_labels(&tr_y));
    write(MnistFiles::TEST_IMAGES, encode_idx_images(&te_x, MNIST_SIDE, MNIST_SIDE).unwrap());
    write(MnistFiles::TEST_LABELS, encode_idx_labels(&te_y));
}

/// The real MNIST directory: `$REWARD_PROBE_DATA_DIR`, else `data/mnist` at
/// the workspace root.
pub fn real_mnist_dir() -> PathBuf {
    std::env::var_os("REWARD_PROBE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn require_real_mnist() -> PathBuf {
    let dir = real_mnist_dir();
    let missing = MnistFiles::in_dir(&dir).missing().len();
    assert!(
        missing == 0,
        "MNIST not found in {} ({missing} files missing); run scripts/fetch_mnist.sh or set REWARD_PROBE_DATA_DIR",
        dir.display()
    );
    dir
}
