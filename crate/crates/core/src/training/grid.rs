use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, EpochMetrics, TrainError, TrainingConfig};
use crate::cells::{Architecture, Checkpoint, ModelConfig, StackConfig};
use crate::corpus::TokenStream;

/// Hyperparameter axes; the grid is their cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub embedding: Vec<usize>,
    pub dropout: Vec<f64>,
    /// Only applied to ordered-neuron cells; other cells use chunk 1.
    pub chunk: Vec<usize>,
    #[serde(default)]
    pub stack: StackConfig,
}

impl GridSpec {
    /// 3 · 4 · 2 · 2 = 48 configs per architecture (96 with chunks).
    pub fn full() -> Self {
        GridSpec {
            layers: vec![1, 2, 4],
            hidden: vec![4, 8, 16, 32],
            embedding: vec![4, 8],
            dropout: vec![0.1, 0.3],
            chunk: vec![1, 4],
            stack: StackConfig::default(),
        }
    }

    /// Layers {1, 2}, hidden {16, 32}, embedding 8, dropout 0.1.
    pub fn reduced() -> Self {
        GridSpec {
            layers: vec![1, 2],
            hidden: vec![16, 32],
            embedding: vec![8],
            dropout: vec![0.1],
            chunk: vec![1, 4],
            stack: StackConfig::default(),
        }
    }

    pub fn configs(&self, arch: Architecture) -> Vec<ModelConfig> {
        let chunks: &[usize] = if arch == Architecture::Onlstm { &self.chunk } else { &[1] };
        let mut out = Vec::new();
        for &l in &self.layers {
            for &h in &self.hidden {
                for &e in &self.embedding {
                    for &d in &self.dropout {
                        for &c in chunks {
                            out.push(ModelConfig::new(arch, l, h, e, d).with_chunk(c).with_stack(self.stack));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GridEntry {
    pub config: ModelConfig,
    pub parameter_count: usize,
    pub valid_ppl: Option<f64>,
    pub curve: Vec<EpochMetrics>,
    pub checkpoint: Option<Checkpoint>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    /// Index of the lowest validation perplexity among successful entries.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_entry(&self) -> Option<&GridEntry> {
        self.best.map(|i| &self.entries[i])
    }

    pub fn best_checkpoint(&self) -> Option<&Checkpoint> {
        self.best_entry().and_then(|e| e.checkpoint.as_ref())
    }
}

fn config_order(a: &ModelConfig, b: &ModelConfig) -> Ordering {
    (a.layers, a.hidden, a.embedding)
        .cmp(&(b.layers, b.hidden, b.embedding))
        .then(a.dropout.total_cmp(&b.dropout))
        .then(a.chunk.cmp(&b.chunk))
}

/// Picks the lowest perplexity; ties go to fewer parameters, then to the
/// smaller config in (layers, hidden, embedding, dropout, chunk) order.
pub(crate) fn select_best(entries: &[GridEntry]) -> Option<usize> {
    entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.valid_ppl.map(|p| (i, p, e)))
        .min_by(|(_, pa, a), (_, pb, b)| {
            pa.total_cmp(pb)
                .then(a.parameter_count.cmp(&b.parameter_count))
                .then_with(|| config_order(&a.config, &b.config))
        })
        .map(|(i, _, _)| i)
}

/// Trains every config of `spec` for `arch` on `workers` threads. A failing
/// config is recorded in its entry; the rest of the grid still runs.
pub fn grid_search(
    arch: Architecture,
    train_stream: &TokenStream,
    valid_stream: &TokenStream,
    spec: &GridSpec,
    tcfg: &TrainingConfig,
    workers: usize,
) -> Result<GridResult, TrainError> {
    let configs = spec.configs(arch);
    grid_over(&configs, train_stream, valid_stream, tcfg, workers)
}

/// Same as [`grid_search`] over an explicit config list.
pub fn grid_over(
    configs: &[ModelConfig],
    train_stream: &TokenStream,
    valid_stream: &TokenStream,
    tcfg: &TrainingConfig,
    workers: usize,
) -> Result<GridResult, TrainError> {
    if configs.is_empty() {
        return Err(TrainError::Config("empty grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let entries: Vec<GridEntry> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let parameter_count = crate::cells::Model::new(*cfg, 0).map(|m| m.parameter_count()).unwrap_or(0);
                match train(cfg, tcfg, train_stream, valid_stream) {
                    Ok(o) => GridEntry {
                        config: *cfg,
                        parameter_count,
                        valid_ppl: o.checkpoint.provenance.valid_ppl,
                        curve: o.curve,
                        checkpoint: Some(o.checkpoint),
                        error: None,
                    },
                    Err(e) => {
                        warn!("{} failed: {e}", cfg.label());
                        GridEntry {
                            config: *cfg,
                            parameter_count,
                            valid_ppl: None,
                            curve: Vec::new(),
                            checkpoint: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    let best = select_best(&entries);
    Ok(GridResult { entries, best })
}
