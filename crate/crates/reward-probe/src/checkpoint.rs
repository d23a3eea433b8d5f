//! Binary parameter checkpoints plus a JSON provenance sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "RWPCKPT\0"
//! version    u32
//! seed       u64
//! slope      f64
//! value_out  u8       0 = leaky relu, 1 = linear
//! blocks     u32      always 6
//! shapes     blocks x (rows u64, cols u64)
//! data       f64 per entry, blocks in declared order, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use reward_probe_core::nets::{ActorCriticNet, NetConfig, ValueOutput, BLOCK_NAMES};
use reward_probe_core::trainer::MetricsRecord;
use serde::{Deserialize, Serialize};

use crate::config::{hex_digest, TaskName};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"RWPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &ActorCriticNet) -> Vec<u8> {
    let cfg = net.config();
    let shapes = net.block_shapes();
    let total: usize = shapes.iter().map(|s| s.0 * s.1).sum();
    let mut out = Vec::with_capacity(64 + 16 * shapes.len() + 8 * total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    out.extend_from_slice(&cfg.leaky_slope.to_le_bytes());
    out.push(match cfg.value_output {
        ValueOutput::LeakyRelu => 0,
        ValueOutput::Linear => 1,
    });
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for s in &shapes {
        out.extend_from_slice(&(s.0 as u64).to_le_bytes());
        out.extend_from_slice(&(s.1 as u64).to_le_bytes());
    }
    for block in net.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated at byte {} (needed {n} more)", self.pos)
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ActorCriticNet, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.array::<8>()? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(c.array()?);
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let seed = u64::from_le_bytes(c.array()?);
    let slope = f64::from_le_bytes(c.array()?);
    let value_output = match c.array::<1>()?[0] {
        0 => ValueOutput::LeakyRelu,
        1 => ValueOutput::Linear,
        other => return Err(format!("unknown value-output tag {other}")),
    };
    let count = u32::from_le_bytes(c.array()?) as usize;
    if count != BLOCK_NAMES.len() {
        return Err(format!("expected {} blocks, found {count}", BLOCK_NAMES.len()));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let r = u64::from_le_bytes(c.array()?) as usize;
        let k = u64::from_le_bytes(c.array()?) as usize;
        shapes.push((r, k));
    }
    let (input, hidden) = shapes[0];
    let actions = shapes[2].0;
    let config = NetConfig {
        input,
        hidden,
        actions,
        leaky_slope: slope,
        value_output,
    };
    let mut blocks: [Vec<f64>; 6] = Default::default();
    for (block, &(r, k)) in blocks.iter_mut().zip(&shapes) {
        let n = r.checked_mul(k).ok_or("block shape overflows")?;
        let raw = c.take(n.checked_mul(8).ok_or("block shape overflows")?)?;
        *block = raw
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().expect("chunk of 8")))
            .collect();
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let net = ActorCriticNet::from_blocks(config, seed, blocks).map_err(|e| e.to_string())?;
    for ((name, want), &(r, k)) in BLOCK_NAMES.iter().zip(net.block_shapes()).zip(&shapes) {
        if (want.0, want.1) != (r, k) {
            return Err(format!("block {name} declared {r}x{k}, expected {want}"));
        }
    }
    Ok(net)
}

/// Short content id: first 16 hex digits of the SHA-256 of the file bytes.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    hex_digest(bytes)[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub checkpoint_id: String,
    pub config_hash: String,
    pub run_id: String,
    /// `train-rl` or `train-supervised`.
    pub trainer: String,
    pub task: TaskName,
    pub epoch: usize,
    pub steps: u64,
    pub seed: u64,
    pub block_names: Vec<String>,
    pub metrics: Option<SidecarMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarMetrics {
    pub train_error_online: f64,
    pub train_error_frozen: Option<f64>,
    pub test_error: Option<f64>,
}

impl From<&MetricsRecord> for SidecarMetrics {
    fn from(m: &MetricsRecord) -> Self {
        SidecarMetrics {
            train_error_online: m.train_error_online,
            train_error_frozen: m.train_error_frozen,
            test_error: m.test_error,
        }
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    checkpoint.with_file_name(name)
}

/// Writes `<path>` and `<path>.json`; returns the checkpoint id.
pub fn save(path: &Path, net: &ActorCriticNet, mut sidecar: Sidecar) -> Result<String> {
    let bytes = encode(net);
    let id = checkpoint_id(&bytes);
    sidecar.checkpoint_id = id.clone();
    sidecar.block_names = BLOCK_NAMES.iter().map(|s| s.to_string()).collect();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n";
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(id)
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub net: ActorCriticNet,
    pub id: String,
    /// Absent when the sidecar file is missing.
    pub sidecar: Option<Sidecar>,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let net = decode(&bytes).map_err(|r| Error::format(path, r))?;
    let id = checkpoint_id(&bytes);
    let side = sidecar_path(path);
    let sidecar = match fs::read_to_string(&side) {
        Ok(text) => {
            let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
            if s.checkpoint_id != id {
                return Err(Error::format(
                    &side,
                    format!("describes checkpoint {} but the file hashes to {id}", s.checkpoint_id),
                ));
            }
            Some(s)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&side, e)),
    };
    Ok(Loaded { net, id, sidecar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use reward_probe_core::dataset::Task;

    fn small_net(seed: u64) -> ActorCriticNet {
        let cfg = NetConfig {
            input: 5,
            hidden: 3,
            actions: 2,
            leaky_slope: 0.02,
            value_output: ValueOutput::Linear,
        };
        ActorCriticNet::init_with(cfg, seed).unwrap()
    }

    fn sidecar() -> Sidecar {
        Sidecar {
            format_version: FORMAT_VERSION,
            checkpoint_id: String::new(),
            config_hash: "abc".into(),
            run_id: "r".into(),
            trainer: "train-rl".into(),
            task: TaskName::Parity,
            epoch: 3,
            steps: 30,
            seed: 9,
            block_names: vec![],
            metrics: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small_net(4);
        let bytes = encode(&net);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(encode(&back), bytes);
        let expected_len = 8 + 4 + 8 + 8 + 1 + 4 + 6 * 16 + 8 * (15 + 3 + 6 + 2 + 3 + 1);
        assert_eq!(bytes.len(), expected_len);
    }

    #[test]
    fn mnist_net_round_trips() {
        let net = ActorCriticNet::init_with(NetConfig::mnist(Task::TenClass), 1).unwrap();
        assert_eq!(decode(&encode(&net)).unwrap(), net);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&small_net(1));
        assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).unwrap_err().contains("trailing"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().contains("magic"));
        let mut ver = bytes;
        ver[8] = 2;
        assert!(decode(&ver).unwrap_err().contains("version"));
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("final.ckpt");
        let net = small_net(2);
        let id = save(&path, &net, sidecar()).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.net, net);
        assert_eq!(loaded.id, id);
        let side = loaded.sidecar.unwrap();
        assert_eq!(side.block_names.len(), 6);
        assert_eq!(side.checkpoint_id, id);

        // A sidecar that no longer matches the bytes is an error.
        fs::write(&path, encode(&small_net(3))).unwrap();
        assert!(load(&path).is_err());
        fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(load(&path).unwrap().sidecar.is_none());
    }
}
