//! Run manifests: written when a command starts, finalised when it ends.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputChecksum {
    pub path: String,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; replaying them reproduces the run.
    pub args: Vec<String>,
    /// Fully resolved configuration with every default filled in.
    pub config: serde_json::Value,
    pub seed: u64,
    pub code_version: String,
    pub inputs: Vec<InputChecksum>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A manifest tied to the file it is written to.
#[derive(Debug)]
pub struct ManifestWriter {
    pub manifest: RunManifest,
    path: PathBuf,
    start: Instant,
}

impl ManifestWriter {
    /// Writes the manifest in the `running` state.
    pub fn begin(
        out_dir: &Path,
        command: &str,
        args: Vec<String>,
        config: serde_json::Value,
        seed: u64,
    ) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let w = Self {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config,
                seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix,
                wall_clock_secs: 0.0,
                status: RunStatus::Running,
                error: None,
            },
            path: out_dir.join(MANIFEST_FILE),
            start: Instant::now(),
        };
        w.write()?;
        Ok(w)
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.manifest.inputs.push(InputChecksum {
            path: path.display().to_string(),
            crc32: crc32fast::hash(&bytes),
        });
        Ok(())
    }

    /// Writes `contents` to `out_dir/name` and records it as an output.
    pub fn output(&mut self, out_dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents)?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn record_output(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn finish(mut self, error: Option<String>) -> Result<RunManifest> {
        self.manifest.wall_clock_secs = self.start.elapsed().as_secs_f64();
        self.manifest.status = if error.is_some() { RunStatus::Failed } else { RunStatus::Complete };
        self.manifest.error = error;
        self.write()?;
        Ok(self.manifest)
    }

    fn write(&self) -> Result<()> {
        std::fs::write(&self.path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
