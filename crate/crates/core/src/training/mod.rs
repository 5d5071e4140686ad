//! Language-model training with truncated backpropagation through time,
//! continuous-stream perplexity and hyperparameter grid search.

mod grid;
mod rundir;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{
    window_loss, Architecture, CellError, Checkpoint, CheckpointError, Graph, Mode, Model, ModelConfig, Provenance,
};
use crate::corpus::{derive_seed, CorpusError, TokenStream, VOCAB_SIZE};
use crate::numcore::AdamConfig;

pub use grid::{grid_over, grid_search, GridEntry, GridResult, GridSpec};
pub use rundir::{read_metrics_csv, Artifact, write_metrics_csv, RunDir, RunManifest, RUN_MANIFEST_VERSION};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}, window {window}: loss {loss}")]
    Diverged { epoch: usize, window: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("stream of {len} tokens is too short for {batch} segments")]
    ShortStream { len: usize, batch: usize },
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{} exists; pass --force to overwrite", .0.display())]
    Exists(std::path::PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
}

pub const DEFAULT_EPOCHS: usize = 20;
pub const STACK_EPOCHS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub bptt: usize,
    pub batch: usize,
    pub lr: f64,
    /// `None` picks the per-architecture default.
    pub epochs: Option<usize>,
    pub seed: u64,
    pub clip: Option<f64>,
    pub precision: Precision,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { bptt: 32, batch: 32, lr: 1e-3, epochs: None, seed: 1, clip: None, precision: Precision::F64 }
    }
}

impl TrainingConfig {
    pub fn epochs_for(&self, arch: Architecture) -> usize {
        self.epochs.unwrap_or(if arch.has_stack() { STACK_EPOCHS } else { DEFAULT_EPOCHS })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.bptt == 0 || self.batch == 0 || self.epochs == Some(0) {
            return Err(TrainError::Config("bptt, batch and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        if matches!(self.clip, Some(c) if !(c > 0.0)) {
            return Err(TrainError::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_ppl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation perplexity.
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochMetrics>,
    /// Loss of the very first window, before any update.
    pub first_loss: f64,
}

/// Time-major windows over `batch` contiguous segments of a stream.
struct Segments<'a> {
    ids: &'a [usize],
    batch: usize,
    seg_len: usize,
}

impl<'a> Segments<'a> {
    fn new(ids: &'a [usize], batch: usize) -> Result<Self, TrainError> {
        let seg_len = ids.len().saturating_sub(1) / batch;
        if seg_len == 0 {
            return Err(TrainError::ShortStream { len: ids.len(), batch });
        }
        Ok(Segments { ids, batch, seg_len })
    }

    fn window(&self, start: usize, len: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let col = |t: usize| (0..self.batch).map(|b| self.ids[b * self.seg_len + t]).collect::<Vec<_>>();
        let inputs = (start..start + len).map(col).collect();
        let targets = (start + 1..start + len + 1).map(col).collect();
        (inputs, targets)
    }
}

/// Trains one model. Each epoch walks the stream as `batch` contiguous
/// segments in windows of `bptt` tokens; state carries across windows
/// (gradient-stopped) and resets at epoch start.
pub fn train(
    model_config: &ModelConfig,
    tcfg: &TrainingConfig,
    train_stream: &TokenStream,
    valid_stream: &TokenStream,
) -> Result<TrainOutcome, TrainError> {
    tcfg.validate()?;
    for s in [train_stream, valid_stream] {
        if let Some(&bad) = s.ids().iter().find(|&&i| i >= VOCAB_SIZE) {
            return Err(CellError::InvalidId(bad).into());
        }
    }
    let mut model = Model::new(*model_config, derive_seed(tcfg.seed, "init"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tcfg.seed, "dropout"));
    let adam = AdamConfig::with_lr(tcfg.lr);
    let seg = Segments::new(train_stream.ids(), tcfg.batch)?;
    let epochs = tcfg.epochs_for(model_config.architecture);
    let mut curve = Vec::with_capacity(epochs);
    let mut best: Option<(f64, Model, usize)> = None;
    let mut first_loss = f64::NAN;
    for epoch in 1..=epochs {
        let mut state = model.zero_state(tcfg.batch);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        let mut window = 0;
        let mut start = 0;
        while start < seg.seg_len {
            let len = tcfg.bptt.min(seg.seg_len - start);
            let (inputs, targets) = seg.window(start, len);
            let out = window_loss(&model, state, &inputs, &targets, Mode::Train(&mut rng))?;
            if !out.loss.is_finite() || out.grads.iter().any(|g| !g.all_finite()) {
                return Err(TrainError::Diverged { epoch, window, loss: out.loss });
            }
            if epoch == 1 && window == 0 {
                first_loss = out.loss;
            }
            for (p, g) in model.params.iter_mut().zip(out.grads) {
                p.grad = g;
            }
            if let Some(c) = tcfg.clip {
                model.params.clip_grad_norm(c);
            }
            model.params.adam_step(&adam);
            loss_sum += out.loss * len as f64;
            tokens += len;
            state = out.state;
            start += len;
            window += 1;
            if window % 1000 == 0 {
                debug!("{} epoch {epoch} window {window}: loss {:.4}", model_config.label(), loss_sum / tokens as f64);
            }
        }
        let valid_ppl = perplexity(&model, valid_stream);
        let train_loss = loss_sum / tokens as f64;
        info!("{} epoch {epoch}: train loss {train_loss:.4}, valid ppl {valid_ppl:.4}", model_config.label());
        if !valid_ppl.is_finite() {
            return Err(TrainError::Diverged { epoch, window, loss: valid_ppl.ln() });
        }
        curve.push(EpochMetrics { epoch, train_loss, valid_ppl });
        if best.as_ref().is_none_or(|(b, _, _)| valid_ppl < *b) {
            best = Some((valid_ppl, model.clone(), epoch));
        }
    }
    let (valid_ppl, mut best_model, epoch) = best.expect("at least one epoch");
    for p in best_model.params.iter_mut() {
        // optimiser moments are not part of the checkpoint
        *p = crate::numcore::Parameter::new(p.value.clone());
    }
    let provenance = Provenance {
        dataset: Some(train_stream.id),
        seed: tcfg.seed,
        epoch,
        valid_ppl: Some(valid_ppl),
        clip: tcfg.clip,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(TrainOutcome { checkpoint: Checkpoint::new(best_model, provenance), curve, first_loss })
}

/// Summed next-token negative log-likelihood (nats) over a stream, run as
/// one sequence from a zero state in chunks of `chunk` tokens. The chunk
/// size does not change the result.
pub fn stream_nll(model: &Model, ids: &[usize], chunk: usize) -> (f64, usize) {
    let mut g = Graph::new(model, Mode::Eval);
    let mut state = model.zero_state(1);
    let mut nll = 0.0;
    let n = ids.len().saturating_sub(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk.max(1)).min(n);
        for t in start..end {
            g.reset();
            let vars = g.bind_state(state);
            let next = g.step(&ids[t..t + 1], &vars).expect("ids validated by caller");
            let logits = g.decode(Graph::top(&next));
            nll += neg_log_softmax(g.value(logits).row(0), ids[t + 1]);
            state = g.take_state(&next);
        }
        start = end;
    }
    (nll, n)
}

fn neg_log_softmax(row: &[f64], target: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    lse - row[target]
}

/// `exp(mean next-token cross-entropy)` with state reset only at the start.
pub fn perplexity(model: &Model, stream: &TokenStream) -> f64 {
    let (nll, n) = stream_nll(model, stream.ids(), 4096);
    (nll / n.max(1) as f64).exp()
}

/// Perplexity of a checkpoint, after checking its vocabulary.
pub fn checkpoint_perplexity(ck: &Checkpoint, stream: &TokenStream) -> Result<f64, TrainError> {
    ck.check_vocabulary()?;
    Ok(perplexity(&ck.model, stream))
}

#[cfg(test)]
mod tests;
