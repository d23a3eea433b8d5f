//! IDX files on disk, plain or gzip-compressed (detected by magic bytes).

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use reward_probe_core::dataset::{self, ClassLabel, ImageStack, LabeledSet};

use crate::error::{Error, Result};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// File contents, transparently gunzipped.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_idx_images(path: &Path) -> Result<ImageStack> {
    let bytes = read_maybe_gzip(path)?;
    dataset::parse_idx_images(&bytes).map_err(|e| Error::data(path, e))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<ClassLabel>> {
    let bytes = read_maybe_gzip(path)?;
    dataset::parse_idx_labels(&bytes).map_err(|e| Error::data(path, e))
}

/// Loads a 28x28 image file with its label file.
pub fn load_labeled_set(images: &Path, labels: &Path) -> Result<LabeledSet> {
    let stack = load_idx_images(images)?;
    let labels_v = load_idx_labels(labels)?;
    LabeledSet::new_mnist(stack.images, labels_v).map_err(|e| Error::data(images, e))
}

/// Standard MNIST file names, with or without a `.gz` suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub const TRAIN_IMAGES: &'static str = "train-images-idx3-ubyte";
    pub const TRAIN_LABELS: &'static str = "train-labels-idx1-ubyte";
    pub const TEST_IMAGES: &'static str = "t10k-images-idx3-ubyte";
    pub const TEST_LABELS: &'static str = "t10k-labels-idx1-ubyte";

    /// Resolves the four files inside `dir`, preferring the uncompressed name.
    pub fn in_dir(dir: &Path) -> Self {
        let pick = |name: &str| {
            let plain = dir.join(name);
            let gz = dir.join(format!("{name}.gz"));
            if !plain.exists() && gz.exists() {
                gz
            } else {
                plain
            }
        };
        MnistFiles {
            train_images: pick(Self::TRAIN_IMAGES),
            train_labels: pick(Self::TRAIN_LABELS),
            test_images: pick(Self::TEST_IMAGES),
            test_labels: pick(Self::TEST_LABELS),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
    }

    pub fn missing(&self) -> Vec<&Path> {
        self.all().into_iter().filter(|p| !p.is_file()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn write_images(path: &Path, gz: bool) {
        let mut bytes = Vec::new();
        for w in [dataset::IMAGES_MAGIC, 1, 2, 2] {
            bytes.extend_from_slice(&w.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 255, 128, 1]);
        if gz {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&bytes).unwrap();
            bytes = enc.finish().unwrap();
        }
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn gzip_is_sniffed() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("a");
        let packed = dir.path().join("b");
        write_images(&plain, false);
        write_images(&packed, true);
        assert_eq!(load_idx_images(&plain).unwrap(), load_idx_images(&packed).unwrap());
    }

    #[test]
    fn errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels");
        fs::write(&p, [0u8, 0, 8, 3]).unwrap();
        let msg = load_idx_labels(&p).unwrap_err().to_string();
        assert!(msg.contains("labels") && msg.contains("magic"), "{msg}");
        assert!(matches!(load_idx_labels(&dir.path().join("nope")), Err(Error::Io { .. })));
    }

    #[test]
    fn resolves_gz_names() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("t10k-labels-idx1-ubyte.gz"), b"").unwrap();
        let files = MnistFiles::in_dir(dir.path());
        assert!(files.test_labels.to_string_lossy().ends_with(".gz"));
        assert!(files.train_images.to_string_lossy().ends_with("ubyte"));
        assert_eq!(files.missing().len(), 3);
    }
}
