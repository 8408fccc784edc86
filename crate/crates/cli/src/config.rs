//! Optional JSON run configuration. Every field may be omitted; command-line
//! flags take precedence over the file, and the file over built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub perturb: Option<f64>,
    pub perturb_voltage: Option<bool>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub leak: Option<f64>,
    pub separate_heads: Option<bool>,
    pub val_ratio: Option<f64>,
    pub test_ratio: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Prints the fully resolved settings of a command to stderr.
pub fn echo(command: &str, resolved: &impl Serialize) {
    let json = serde_json::to_string(resolved).expect("config is plain data");
    eprintln!("{command} config: {json}");
}
