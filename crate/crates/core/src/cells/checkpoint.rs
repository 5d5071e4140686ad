//! Binary checkpoint: magic, `u32` version, `u32` header length, a JSON
//! header (config, vocabulary hash, provenance, tensor names and shapes),
//! then every tensor as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Model, ModelConfig, STACK_READOUT};
use crate::corpus::{build_vocabulary, DatasetId, VOCAB_SIZE};
use crate::numcore::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NAGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

// Loader sanity bounds; far above any configuration in use.
const MAX_WIDTH: usize = 4096;
const MAX_LAYERS: usize = 16;
const MAX_STACK_DEPTH: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("vocabulary hash mismatch: checkpoint {found}, expected {expected}")]
    Vocabulary { found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a checkpoint came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: Option<DatasetId>,
    pub seed: u64,
    pub epoch: usize,
    pub valid_ppl: Option<f64>,
    pub clip: Option<f64>,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_hash: String,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
}

/// Names and shapes of every parameter, in storage order.
pub(crate) fn param_shapes(config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let h = config.hidden;
    let mut v = vec![("embed".to_string(), VOCAB_SIZE, config.embedding)];
    for l in 0..config.layers {
        let g = config.gate_width();
        v.push((format!("l{l}.w"), g, config.layer_input(l)));
        v.push((format!("l{l}.u"), g, h));
        v.push((format!("l{l}.b"), 1, g));
        if config.architecture.has_stack() {
            let n = config.stack.n_stacks;
            let a = config.stack.n_actions();
            v.push((format!("l{l}.stack.read"), h, n * STACK_READOUT * h));
            v.push((format!("l{l}.stack.act.w"), n * a, h));
            v.push((format!("l{l}.stack.act.b"), 1, n * a));
            v.push((format!("l{l}.stack.push.w"), n * h, h));
            v.push((format!("l{l}.stack.push.b"), 1, n * h));
        }
    }
    v.push(("dec.w".to_string(), VOCAB_SIZE, h));
    v.push(("dec.b".to_string(), 1, VOCAB_SIZE));
    v
}

impl Checkpoint {
    pub fn new(model: Model, provenance: Provenance) -> Self {
        Checkpoint { model, vocab_hash: build_vocabulary().hash(), provenance }
    }

    pub fn check_vocabulary(&self) -> Result<(), CheckpointError> {
        let expected = build_vocabulary().hash();
        if self.vocab_hash != expected {
            return Err(CheckpointError::Vocabulary { found: self.vocab_hash.clone(), expected });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config,
            vocab_hash: self.vocab_hash.clone(),
            provenance: self.provenance.clone(),
            tensors: self
                .model
                .params
                .iter()
                .map(|(n, p)| TensorEntry { name: n.to_string(), rows: p.value.rows(), cols: p.value.cols() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.model.params.scalar_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in self.model.params.iter() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let fmt = |m: &str| CheckpointError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(fmt("header length exceeds file"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| CheckpointError::Format(e.to_string()))?;
        let c = &header.config;
        if c.hidden > MAX_WIDTH || c.embedding > MAX_WIDTH || c.layers > MAX_LAYERS || c.stack.n_stacks > MAX_LAYERS {
            return Err(fmt("config dimensions out of range"));
        }
        if c.stack.depth > MAX_STACK_DEPTH {
            return Err(fmt("stack depth out of range"));
        }
        c.validate().map_err(|e| CheckpointError::Format(e.to_string()))?;
        let shapes = param_shapes(c);
        if shapes.len() != header.tensors.len()
            || shapes.iter().zip(&header.tensors).any(|((n, r, k), t)| *n != t.name || *r != t.rows || *k != t.cols)
        {
            return Err(fmt("tensor table does not match config"));
        }
        let data = &body[hlen..];
        let scalars: usize = shapes.iter().map(|(_, r, k)| r * k).sum();
        if data.len() != 8 * scalars {
            return Err(fmt("tensor data length mismatch"));
        }
        let mut model = Model::new(*c, 0).map_err(|e| CheckpointError::Format(e.to_string()))?;
        let flat: Vec<f64> = data.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        model.params.assign_flat(&flat);
        // assign_flat leaves shapes untouched; the table check above covers them
        debug_assert!(model.params.iter().zip(&shapes).all(|((n, p), s)| n == s.0 && p.value.shape() == (s.1, s.2)));
        Ok(Checkpoint { model, vocab_hash: header.vocab_hash, provenance: header.provenance })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Named tensor lookup.
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.model.params.by_name(name).map(|p| &p.value)
    }
}
