use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpochMetrics, TrainError};
use crate::cells::Checkpoint;
use crate::corpus::file_digest;

pub const RUN_MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest directory.
    pub path: String,
    pub sha256: String,
}

/// Machine-readable record of one run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub experiment: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub datasets: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub tool_version: String,
    pub effective_config: serde_json::Value,
}

impl RunManifest {
    pub fn new(experiment: impl Into<String>, config_digest: String, effective_config: serde_json::Value) -> Self {
        RunManifest {
            version: RUN_MANIFEST_VERSION,
            experiment: experiment.into(),
            config_digest,
            seeds: Vec::new(),
            datasets: Vec::new(),
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            effective_config,
        }
    }

    /// Loads and checks every artifact digest.
    pub fn load_verified(path: &Path) -> Result<Self, TrainError> {
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))?;
        if m.version != RUN_MANIFEST_VERSION {
            return Err(TrainError::Format(format!("unsupported run manifest version {}", m.version)));
        }
        let root = path.parent().unwrap_or(Path::new("."));
        for a in &m.artifacts {
            if file_digest(&root.join(&a.path))? != a.sha256 {
                return Err(TrainError::Format(format!("digest mismatch for {}", a.path)));
            }
        }
        Ok(m)
    }

    pub fn artifact(&self, suffix: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path.ends_with(suffix))
    }
}

/// A directory holding one run's outputs plus `manifest.json`.
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Creates the directory. An existing non-empty directory is refused
    /// unless `force` is set.
    pub fn create(root: &Path, force: bool, manifest: RunManifest) -> Result<Self, TrainError> {
        if root.exists() && fs::read_dir(root)?.next().is_some() && !force {
            return Err(TrainError::Exists(root.to_path_buf()));
        }
        fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf(), manifest })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes a file and records it in the manifest.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, TrainError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes)?;
        self.record(rel)?;
        Ok(p)
    }

    /// Records (or refreshes) an already written file.
    pub fn record(&mut self, rel: &str) -> Result<(), TrainError> {
        let sha256 = file_digest(&self.root.join(rel))?;
        self.manifest.artifacts.retain(|a| a.path != rel);
        self.manifest.artifacts.push(Artifact { path: rel.to_string(), sha256 });
        Ok(())
    }

    pub fn save_checkpoint(&mut self, rel: &str, ck: &Checkpoint) -> Result<PathBuf, TrainError> {
        self.write(rel, &ck.to_bytes())
    }

    pub fn write_metrics(&mut self, rel: &str, curve: &[EpochMetrics]) -> Result<PathBuf, TrainError> {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, curve)?;
        self.write(rel, &buf)
    }

    pub fn finish(&self) -> Result<PathBuf, TrainError> {
        let p = self.root.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&p, json)?;
        Ok(p)
    }
}

pub fn write_metrics_csv<W: Write>(w: W, curve: &[EpochMetrics]) -> Result<(), TrainError> {
    let mut wr = csv::Writer::from_writer(w);
    for m in curve {
        wr.serialize(m).map_err(|e| TrainError::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<EpochMetrics>, TrainError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| TrainError::Format(e.to_string())))
        .collect()
}
