//! Vocabulary, training streams, number-agreement tasks and their files.

mod manifest;
mod natask;
mod stream;
mod vocab;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::GrammarError;

pub use manifest::{file_digest, CorpusManifest, DatasetEntry, NaTaskEntry, MANIFEST_VERSION};
pub use natask::{
    build_na_task, check_na_sentence, full_task_grid, task_depths, task_spacings, NaSentence, NaTask,
    NaTaskSpec, DEFAULT_TASK_SENTENCES, MAX_TASK_DEPTH,
};
pub use stream::{build_corpus, dataset_statistics, DatasetId, DatasetStats, Split, TokenStream, MIN_ACCEPTANCE};
pub use vocab::{build_vocabulary, Vocabulary, EOS_ID, VOCAB_SIZE};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("line {line}: {source}")]
    Line { line: usize, source: GrammarError },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("unknown token id {0}")]
    UnknownId(usize),
    #[error("invalid task spec d={d}, s={s}")]
    InvalidTask { d: usize, s: usize },
    #[error("acceptance rate too low: {accepted} of {drawn} sentences within limits")]
    LowAcceptance { accepted: u64, drawn: u64 },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{} exists; pass --force to overwrite", .0.display())]
    Exists(std::path::PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stable seed derivation from a base seed and a textual tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
