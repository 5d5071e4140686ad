//! Recurrent language models: embedding, stacked cells and a softmax
//! decoder, for six cell types.
//!
//! All cells run on the [`Tape`](crate::numcore::Tape), so the same step
//! code serves training (with backward) and inference (tape truncated after
//! every step).

mod checkpoint;
mod graph;
mod step;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VOCAB_SIZE;
use crate::numcore::{ParamStore, Parameter, Tensor};

pub use checkpoint::{Checkpoint, CheckpointError, Provenance, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{lm_forward, window_loss, Ablation, Graph, Mode, StateVars, WindowOutput};
pub use step::LayerVars;

/// Readout width: number of top stack cells fed back into the hidden state.
pub const STACK_READOUT: usize = 2;
pub const DEFAULT_STACK_DEPTH: usize = 1024;
pub const LSTM_FORGET_BIAS: f64 = 1.0;
pub const EMBEDDING_INIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Srn,
    Gru,
    Lstm,
    Onlstm,
    Stackrnn,
    Stacklstm,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Srn,
        Architecture::Gru,
        Architecture::Lstm,
        Architecture::Onlstm,
        Architecture::Stackrnn,
        Architecture::Stacklstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Srn => "srn",
            Architecture::Gru => "gru",
            Architecture::Lstm => "lstm",
            Architecture::Onlstm => "onlstm",
            Architecture::Stackrnn => "stackrnn",
            Architecture::Stacklstm => "stacklstm",
        }
    }

    /// Whether the layer state carries a memory cell besides `h`.
    pub fn has_cell(self) -> bool {
        matches!(self, Architecture::Lstm | Architecture::Onlstm | Architecture::Stacklstm)
    }

    pub fn has_stack(self) -> bool {
        matches!(self, Architecture::Stackrnn | Architecture::Stacklstm)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self, CellError> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase().replace(['-', '_'], ""))
            .ok_or_else(|| CellError::Config(format!("unknown architecture `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub n_stacks: usize,
    pub depth: usize,
    pub noop: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig { n_stacks: 1, depth: DEFAULT_STACK_DEPTH, noop: false }
    }
}

impl StackConfig {
    pub fn n_actions(&self) -> usize {
        if self.noop {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub embedding: usize,
    pub dropout: f64,
    /// Master-gate chunk size (ordered-neuron cells only).
    #[serde(default = "one")]
    pub chunk: usize,
    #[serde(default)]
    pub stack: StackConfig,
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn new(architecture: Architecture, layers: usize, hidden: usize, embedding: usize, dropout: f64) -> Self {
        ModelConfig { architecture, layers, hidden, embedding, dropout, chunk: 1, stack: StackConfig::default() }
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk;
        self
    }

    pub fn with_stack(mut self, stack: StackConfig) -> Self {
        self.stack = stack;
        self
    }

    pub fn validate(&self) -> Result<(), CellError> {
        let bad = |m: String| Err(CellError::Config(m));
        if self.layers == 0 || self.hidden == 0 || self.embedding == 0 {
            return bad("layers, hidden and embedding must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.architecture == Architecture::Onlstm && (self.chunk == 0 || self.hidden % self.chunk != 0) {
            return bad(format!("hidden {} not divisible by chunk {}", self.hidden, self.chunk));
        }
        if self.architecture.has_stack() {
            if self.stack.n_stacks == 0 {
                return bad("n_stacks must be at least 1".into());
            }
            if self.stack.depth < STACK_READOUT {
                return bad(format!("stack depth must be at least {STACK_READOUT}"));
            }
        }
        Ok(())
    }

    /// Width of the stacked gate pre-activations of one layer.
    pub fn gate_width(&self) -> usize {
        let h = self.hidden;
        match self.architecture {
            Architecture::Srn | Architecture::Stackrnn => h,
            Architecture::Gru => 3 * h,
            Architecture::Lstm | Architecture::Stacklstm => 4 * h,
            Architecture::Onlstm => 4 * h + 2 * (h / self.chunk),
        }
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embedding
        } else {
            self.hidden
        }
    }

    /// Short label used in run-directory names.
    pub fn label(&self) -> String {
        let mut s = format!(
            "{}_l{}_h{}_e{}_do{}",
            self.architecture, self.layers, self.hidden, self.embedding, self.dropout
        );
        if self.architecture == Architecture::Onlstm {
            s.push_str(&format!("_c{}", self.chunk));
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum CellError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("state shape mismatch: {0}")]
    Shape(String),
    #[error("token id {0} outside the vocabulary")]
    InvalidId(usize),
    #[error("unit {unit} out of range for hidden size {hidden}")]
    InvalidUnit { unit: usize, hidden: usize },
}

/// Recurrent state of one layer for a batch of sequences (one row each).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub h: Tensor,
    pub c: Option<Tensor>,
    /// `batch x (cells * hidden)`, top cell first; one tensor per stack.
    pub stacks: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub layers: Vec<LayerState>,
}

impl ModelState {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        let arch = config.architecture;
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|_| LayerState {
                h: Tensor::zeros(batch, h),
                c: arch.has_cell().then(|| Tensor::zeros(batch, h)),
                stacks: if arch.has_stack() {
                    (0..config.stack.n_stacks).map(|_| Tensor::zeros(batch, STACK_READOUT * h)).collect()
                } else {
                    Vec::new()
                },
            })
            .collect();
        ModelState { layers }
    }

    pub fn batch(&self) -> usize {
        self.layers[0].h.rows()
    }

    pub fn top_hidden(&self) -> &Tensor {
        &self.layers.last().expect("at least one layer").h
    }

    pub fn check(&self, config: &ModelConfig, batch: usize) -> Result<(), CellError> {
        let err = |m: &str| Err(CellError::Shape(m.to_string()));
        if self.layers.len() != config.layers {
            return err("layer count");
        }
        for l in &self.layers {
            if l.h.shape() != (batch, config.hidden) {
                return err("hidden shape");
            }
            if l.c.is_some() != config.architecture.has_cell() {
                return err("cell presence");
            }
            if let Some(c) = &l.c {
                if c.shape() != (batch, config.hidden) {
                    return err("cell shape");
                }
            }
            let want = if config.architecture.has_stack() { config.stack.n_stacks } else { 0 };
            if l.stacks.len() != want {
                return err("stack count");
            }
            for s in &l.stacks {
                if s.rows() != batch || s.cols() % config.hidden != 0 || s.cols() / config.hidden > config.stack.depth {
                    return err("stack shape");
                }
            }
        }
        Ok(())
    }
}

/// A language model: configuration plus named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Random initialisation: weights uniform in `±1/√fan_in`, embedding in
    /// `±0.1`, biases zero except the LSTM-style forget gate at `+1`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, CellError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let uni = |rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng| {
            Parameter::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng)
        };
        let h = config.hidden;
        params.insert("embed", Parameter::uniform(VOCAB_SIZE, config.embedding, EMBEDDING_INIT, &mut rng));
        for l in 0..config.layers {
            let g = config.gate_width();
            let input = config.layer_input(l);
            params.insert(format!("l{l}.w"), uni(g, input, input, &mut rng));
            params.insert(format!("l{l}.u"), uni(g, h, h, &mut rng));
            let mut b = Tensor::zeros(1, g);
            if let Some(start) = forget_gate_offset(&config) {
                b.data_mut()[start..start + h].fill(LSTM_FORGET_BIAS);
            }
            params.insert(format!("l{l}.b"), Parameter::new(b));
            if config.architecture.has_stack() {
                let n = config.stack.n_stacks;
                let a = config.stack.n_actions();
                params.insert(format!("l{l}.stack.read"), uni(h, n * STACK_READOUT * h, n * STACK_READOUT * h, &mut rng));
                params.insert(format!("l{l}.stack.act.w"), uni(n * a, h, h, &mut rng));
                params.insert(format!("l{l}.stack.act.b"), Parameter::new(Tensor::zeros(1, n * a)));
                params.insert(format!("l{l}.stack.push.w"), uni(n * h, h, h, &mut rng));
                params.insert(format!("l{l}.stack.push.b"), Parameter::new(Tensor::zeros(1, n * h)));
            }
        }
        params.insert("dec.w", uni(VOCAB_SIZE, h, h, &mut rng));
        params.insert("dec.b", Parameter::new(Tensor::zeros(1, VOCAB_SIZE)));
        Ok(Model { config, params })
    }

    /// Same shapes as [`Model::new`], every value zero. Its logits are
    /// all zero, so every prediction is uniform.
    pub fn zeros(config: ModelConfig) -> Result<Self, CellError> {
        let mut m = Model::new(config, 0)?;
        let n = m.params.scalar_count();
        m.params.assign_flat(&vec![0.0; n]);
        Ok(m)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn zero_state(&self, batch: usize) -> ModelState {
        ModelState::zeros(&self.config, batch)
    }
}

/// Column offset of the conventional forget gate inside a layer's gate block.
fn forget_gate_offset(config: &ModelConfig) -> Option<usize> {
    let h = config.hidden;
    match config.architecture {
        Architecture::Lstm | Architecture::Stacklstm => Some(h),
        Architecture::Onlstm => Some(2 * (h / config.chunk) + h),
        _ => None,
    }
}


/// Finite-difference check of the mean next-token loss over `steps`
/// unrolled steps, against the tape gradient of every parameter. Token ids
/// and dropout masks are fixed by `seed`.
pub fn lm_grad_check(
    model: &Model,
    seed: u64,
    steps: usize,
    batch: usize,
    h: f64,
    tolerance: f64,
) -> Result<crate::numcore::GradCheckReport, CellError> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<Vec<usize>> =
        (0..=steps).map(|_| (0..batch).map(|_| rng.random_range(0..VOCAB_SIZE)).collect()).collect();
    let (inputs, targets) = (&ids[..steps], &ids[1..]);
    let mut probe = model.clone();
    let mut run = |flat: &[f64]| -> Result<(f64, Vec<f64>), CellError> {
        probe.params.assign_flat(flat);
        let mut drop_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let out = window_loss(&probe, probe.zero_state(batch), inputs, targets, Mode::Train(&mut drop_rng))?;
        Ok((out.loss, out.grads.iter().flat_map(|g| g.data().iter().copied()).collect()))
    };
    let theta = model.params.flatten();
    run(&theta)?;
    Ok(crate::numcore::grad_check(|p| run(p).expect("validated above"), &theta, h, tolerance))
}
