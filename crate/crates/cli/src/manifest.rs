//! Run manifests written next to every command's output.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: &'static str,
    /// Fully resolved settings after flag/config/default precedence.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

pub struct RunRecorder {
    command: String,
    started: Instant,
    started_unix_s: f64,
}

impl RunRecorder {
    pub fn start(command: &str) -> Self {
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_unix_s,
        }
    }

    pub fn finish(
        self,
        path: &Path,
        config: Value,
        seeds: Vec<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> anyhow::Result<()> {
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            seeds,
            inputs,
            outputs,
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(path, json).with_context(|| format!("writing run manifest {}", path.display()))
    }
}

/// `<dir>/run_manifest.json` for directory outputs, `<file>.manifest.json`
/// for file outputs.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("run_manifest.json")
    } else {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}
