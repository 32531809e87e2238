//! Settings shared by several subcommands, read from an optional TOML file.
//! A flag given on the command line always wins over the file.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub criterion: Option<String>,
    pub m: Option<usize>,
    pub ladder: Option<Vec<f64>>,
    pub clusters: Option<usize>,
    pub threads: Option<usize>,
    pub reps: Option<usize>,
    pub window: Option<usize>,
    pub budget: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| crate::UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// First of flag, file value, default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}
