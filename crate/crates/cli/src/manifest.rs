use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use csntax_core::encoding::FeatureVocab;
use csntax_core::model::CHECKPOINT_VERSION;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub csntax: String,
    pub feature_vocab: u32,
    pub checkpoint_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            csntax: env!("CARGO_PKG_VERSION").to_string(),
            feature_vocab: FeatureVocab::VERSION,
            checkpoint_format: CHECKPOINT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub label: String,
    pub wall_clock_seconds: f64,
}

/// Everything needed to repeat a run: the arguments, the resolved
/// configuration and fingerprints of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub argv: Vec<String>,
    /// Directory relative paths in `argv` are resolved against.
    pub working_directory: PathBuf,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    pub versions: Versions,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub timings: Vec<RunTiming>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn start(command: &str, argv: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            argv,
            working_directory: std::env::current_dir().unwrap_or_default(),
            config: RunConfig::default(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            versions: Versions::default(),
            started_unix: now(),
            finished_unix: 0,
            timings: Vec::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest { role: role.to_string(), path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn time(&mut self, label: impl Into<String>, seconds: f64) {
        self.timings.push(RunTiming { label: label.into(), wall_clock_seconds: seconds });
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(dir.join(MANIFEST_FILE), text).with_context(|| format!("writing manifest in {}", dir.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Fails if any recorded input no longer has its recorded digest.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = sha256_file(&input.path)?;
            if now != input.sha256 {
                bail!(
                    "{} input {} changed since the run (sha256 {} now {})",
                    input.role,
                    input.path.display(),
                    input.sha256,
                    now
                );
            }
        }
        Ok(())
    }
}
