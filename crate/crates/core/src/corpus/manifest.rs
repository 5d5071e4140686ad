use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stream::Split;
use super::CorpusError;
use crate::grammar::{GrammarParams, TruncationLimits};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub params: GrammarParams,
    pub split: Split,
    pub seed: u64,
    pub limits: TruncationLimits,
    pub tokens: usize,
    pub sentences: usize,
    pub max_depth: usize,
    pub max_spacing: usize,
    /// Path relative to the manifest directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaTaskEntry {
    pub d: usize,
    pub s: usize,
    pub seed: u64,
    pub n: usize,
    pub file: String,
    pub index_file: String,
    pub sha256: String,
    pub index_sha256: String,
}

/// Record of every generated dataset, written next to the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub seed: u64,
    pub config_digest: String,
    pub tool_version: String,
    pub datasets: Vec<DatasetEntry>,
    pub natasks: Vec<NaTaskEntry>,
}

pub fn file_digest(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl CorpusManifest {
    pub fn new(seed: u64, config_digest: String) -> Self {
        CorpusManifest {
            version: MANIFEST_VERSION,
            seed,
            config_digest,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            datasets: Vec::new(),
            natasks: Vec::new(),
        }
    }

    pub fn dataset(&self, p1: f64, p2: f64, split: Split) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.params.p1 == p1 && d.params.p2 == p2 && d.split == split)
    }

    pub fn natask(&self, d: usize, s: usize) -> Option<&NaTaskEntry> {
        self.natasks.iter().find(|t| t.d == d && t.s == s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let m: CorpusManifest = serde_json::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(CorpusError::Manifest(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads a manifest and checks every referenced file's digest.
    pub fn load_verified(path: &Path) -> Result<Self, CorpusError> {
        let m = Self::from_json(&fs::read_to_string(path)?)?;
        let root = path.parent().unwrap_or(Path::new("."));
        let check = |file: &str, want: &str| -> Result<(), CorpusError> {
            let got = file_digest(&root.join(file))?;
            if got != want {
                return Err(CorpusError::Manifest(format!("digest mismatch for {file}")));
            }
            Ok(())
        };
        for d in &m.datasets {
            check(&d.file, &d.sha256)?;
        }
        for t in &m.natasks {
            check(&t.file, &t.sha256)?;
            check(&t.index_file, &t.index_sha256)?;
        }
        Ok(m)
    }
}
