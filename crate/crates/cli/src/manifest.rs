use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use thzcov::params::Scenario;

/// Everything needed to regenerate an output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub scenario: Scenario,
    pub engines: Vec<String>,
    pub sweep: Sweep,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub tolerances: serde_json::Value,
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: String,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(axis: &str, values: Vec<f64>) -> Self {
        Self {
            axis: axis.to_string(),
            values,
        }
    }
}

pub struct Recorder {
    started: Instant,
    started_unix_s: u64,
    args: Vec<String>,
}

impl Recorder {
    pub fn start(args: Vec<String>) -> Self {
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            started: Instant::now(),
            started_unix_s,
            args,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        &self,
        command: &str,
        scenario: &Scenario,
        engines: &[&str],
        sweep: Sweep,
        seed: Option<u64>,
        trials: Option<usize>,
        tolerances: serde_json::Value,
        outputs: &[PathBuf],
    ) -> RunManifest {
        RunManifest {
            tool: "thzcov".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: self.args.clone(),
            scenario: scenario.clone(),
            engines: engines.iter().map(|e| e.to_string()).collect(),
            sweep,
            seed,
            trials,
            tolerances,
            outputs: outputs
                .iter()
                .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
                .collect(),
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_sidecar(out: &Path, manifest: &RunManifest) -> Result<()> {
    let path = sidecar_path(out);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}
