//! JSON description of a finite MDP with a fixed policy.
//!
//! ```json
//! {
//!   "gamma": 0.5,
//!   "terminal": [2],
//!   "policy": [[1.0], [1.0], [1.0]],
//!   "kernel": [[[{"prob": 1.0, "next": 1, "reward": 1.0}]], ...]
//! }
//! ```

use std::path::Path;

use reward_probe_core::envsim::{FiniteMdp, Outcome};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeJson {
    pub prob: f64,
    pub next: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpJson {
    pub gamma: f64,
    #[serde(default)]
    pub terminal: Vec<usize>,
    pub policy: Vec<Vec<f64>>,
    /// `kernel[s][a]` lists the outcomes of taking `a` in `s`.
    pub kernel: Vec<Vec<Vec<OutcomeJson>>>,
    /// Optional reference values, e.g. solved by hand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_values: Option<Vec<f64>>,
}

impl MdpJson {
    pub fn to_mdp(&self) -> reward_probe_core::Result<FiniteMdp> {
        let kernel = self
            .kernel
            .iter()
            .map(|row| {
                row.iter()
                    .map(|outs| {
                        outs.iter()
                            .map(|o| Outcome { prob: o.prob, next: o.next, reward: o.reward })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        FiniteMdp::new(self.gamma, kernel, self.policy.clone(), self.terminal.clone())
    }
}

pub fn load(path: &Path) -> Result<(MdpJson, FiniteMdp)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: MdpJson = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let mdp = doc.to_mdp().map_err(|e| Error::data(path, e))?;
    Ok((doc, mdp))
}
