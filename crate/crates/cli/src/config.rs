//! Run configuration: an optional TOML file merged with command-line flags.
//!
//! Precedence is documented and fixed: a flag always wins over the config
//! file value, and built-in defaults apply only where neither is given.

use anyhow::Context;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// File-backed experiment configuration.  Every field is optional; the
/// dispatcher validates completeness per mode after merging with flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub mode: Option<String>,
    pub n: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub threshold_c: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub direction: Option<[f64; 3]>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub assert: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text)
            .with_context(|| format!("malformed config file {}", path.display()))
    }
}
