//! Unit-level analysis of trained models: single-unit ablation scans,
//! activation traces grouped by noun-number pattern, and principal
//! components of state trajectories.

mod ablation;
mod pca;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{Ablation, CellError, Graph, Mode, Model, ModelConfig};
use crate::corpus::{build_vocabulary, NaTask, EOS_ID};
use crate::evaluation::EvalError;
use crate::numcore::Tensor;

pub use ablation::{
    ablate, ablation_scan, single_unit_oracle, AblationReport, AblationRow, ScanOptions, ABLATION_THRESHOLD,
    SCAN_DEPTHS, SCAN_SPACING,
};
pub use pca::{pca, pca_states, Pca, PcaResult, PcaTarget};
pub use trace::{record_unit, GroupTrace, UnitTrace};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error("{0}")]
    Config(String),
    #[error("malformed analysis file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which per-unit quantity is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Hidden,
    Cell,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Hidden => "hidden",
            StateKind::Cell => "cell",
        }
    }
}

impl std::str::FromStr for StateKind {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hidden" | "h" => Ok(StateKind::Hidden),
            "cell" | "c" => Ok(StateKind::Cell),
            _ => Err(AnalysisError::Config(format!("unknown state kind `{s}`"))),
        }
    }
}

/// Flat unit id across layers: `layer * hidden + unit`.
pub fn unit_id(config: &ModelConfig, layer: usize, unit: usize) -> usize {
    layer * config.hidden + unit
}

pub fn unit_location(config: &ModelConfig, id: usize) -> (usize, usize) {
    (id / config.hidden, id % config.hidden)
}

fn check_target(config: &ModelConfig, layer: usize, kind: StateKind) -> Result<(), AnalysisError> {
    if layer >= config.layers {
        return Err(AnalysisError::Config(format!("layer {layer} out of range ({} layers)", config.layers)));
    }
    if kind == StateKind::Cell && !config.architecture.has_cell() {
        return Err(AnalysisError::Config(format!("{} has no cell state", config.architecture)));
    }
    Ok(())
}

/// Sentence indices sorted by token ids, so results do not depend on the
/// order sentences are stored in.
pub(crate) fn canonical_order(ids: &[Vec<usize>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

/// Encoded sentences and noun-number signatures in canonical order.
pub(crate) fn canonical_task(task: &NaTask) -> (Vec<Vec<usize>>, Vec<usize>) {
    let vocab = build_vocabulary();
    let ids: Vec<Vec<usize>> = task.sentences.iter().map(|s| vocab.encode(&s.tokens)).collect();
    let order = canonical_order(&ids);
    let sigs = order.iter().map(|&i| task.sentences[i].signature()).collect();
    (order.iter().map(|&i| ids[i].clone()).collect(), sigs)
}

/// States of `layer` after reading each token, one `batch x hidden` tensor
/// per timestep, starting from the state after a leading `<eos>`.
pub(crate) fn run_states(
    model: &Model,
    sentences: &[Vec<usize>],
    ablation: &Ablation,
    layer: usize,
    kind: StateKind,
) -> Result<Vec<Tensor>, AnalysisError> {
    check_target(&model.config, layer, kind)?;
    let len = sentences.first().map_or(0, Vec::len);
    if sentences.iter().any(|s| s.len() != len) {
        return Err(AnalysisError::Config("sentences differ in length".into()));
    }
    let mut g = Graph::with_ablation(model, Mode::Eval, ablation)?;
    let mut col = vec![EOS_ID; sentences.len()];
    let vars = g.bind_state(model.zero_state(sentences.len()));
    let next = g.step(&col, &vars)?;
    let mut state = g.take_state(&next);
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        for (c, s) in col.iter_mut().zip(sentences) {
            *c = s[t];
        }
        g.reset();
        let vars = g.bind_state(state);
        let next = g.step(&col, &vars)?;
        let v = match kind {
            StateKind::Hidden => next[layer].h,
            StateKind::Cell => next[layer].c.expect("checked above"),
        };
        out.push(g.value(v).clone());
        state = g.take_state(&next);
    }
    Ok(out)
}

/// Noun-number pattern as letters from the outermost noun, e.g. `SPS`.
pub fn signature_label(signature: usize, d: usize) -> String {
    (0..d).map(|j| if (signature >> j) & 1 == 1 { 'P' } else { 'S' }).collect()
}

#[cfg(test)]
mod tests;
