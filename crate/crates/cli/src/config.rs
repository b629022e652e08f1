//! Optional JSON config file. Keys mirror the long flag names in
//! snake_case; an explicit flag always wins over the file, and the file wins
//! over built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub vector_len: Option<usize>,
    pub window: Option<usize>,
    pub detect_window: Option<usize>,
    pub out_len: Option<usize>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub filters: Option<usize>,
    pub conv_blocks: Option<usize>,
    pub kernel_size: Option<usize>,
    pub seed: Option<u64>,
    pub holdout: Option<f64>,
    pub train_bins: Option<Vec<usize>>,
    pub test_bins: Option<Vec<usize>>,
    pub bins: Option<Vec<usize>>,
    pub labels: Option<Vec<String>>,
    pub per_cell: Option<usize>,
    pub vectors_per_file: Option<usize>,
    pub signal_bw_bins: Option<usize>,
    pub snr_db: Option<f64>,
    pub snr_spread_db: Option<f64>,
    pub noise_floor_db: Option<f64>,
    pub period_ms: Option<f64>,
    pub queue: Option<usize>,
    pub endpoint: Option<String>,
    pub format: Option<String>,
    pub window_size: Option<usize>,
    pub overlap: Option<usize>,
    pub scale: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(crate::usage)?;
        serde_json::from_str(&text)
            .map_err(|e| crate::usage(anyhow::anyhow!("config {}: {e}", path.display())))
    }
}

/// Flag, then config value, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] for settings without a default.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
