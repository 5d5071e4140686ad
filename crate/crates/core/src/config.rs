//! Pipeline configuration file (TOML). Every field has a default, so an
//! empty file is valid; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{ABLATION_THRESHOLD, SCAN_DEPTHS, SCAN_SPACING};
use crate::cells::{Architecture, ModelConfig, StackConfig};
use crate::corpus::{task_depths, task_spacings, NaTaskSpec, DEFAULT_TASK_SENTENCES};
use crate::grammar::{GrammarParams, MIN_PRESAMPLE};
use crate::training::{GridSpec, Precision, TrainingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    /// TOML syntax or schema error; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarSection {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub number_prob_sg: f64,
    /// Draws used to estimate the truncation percentiles.
    pub presample: usize,
}

impl Default for GrammarSection {
    fn default() -> Self {
        GrammarSection { p1: vec![0.1, 0.3, 0.5], p2: vec![0.1, 0.3, 0.5], number_prob_sg: 0.5, presample: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub train_tokens: usize,
    pub valid_tokens: usize,
    pub test_tokens: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { train_tokens: 1_000_000, valid_tokens: 100_000, test_tokens: 200_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaTaskSection {
    pub sentences: usize,
    pub depths: Vec<usize>,
    pub spacings: Vec<usize>,
}

impl Default for NaTaskSection {
    fn default() -> Self {
        NaTaskSection { sentences: DEFAULT_TASK_SENTENCES, depths: task_depths(), spacings: task_spacings() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub embedding: usize,
    pub dropout: f64,
    pub chunk: usize,
    pub stack: StackConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            architecture: Architecture::Lstm,
            layers: 2,
            hidden: 32,
            embedding: 8,
            dropout: 0.1,
            chunk: 1,
            stack: StackConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub bptt: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: Option<usize>,
    pub clip: Option<f64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection { bptt: t.bptt, batch: t.batch, lr: t.lr, epochs: t.epochs, clip: t.clip }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    Full,
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub preset: GridPreset,
    /// Explicit axes override the preset.
    pub layers: Option<Vec<usize>>,
    pub hidden: Option<Vec<usize>>,
    pub embedding: Option<Vec<usize>>,
    pub dropout: Option<Vec<f64>>,
    pub chunk: Option<Vec<usize>>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { preset: GridPreset::Full, layers: None, hidden: None, embedding: None, dropout: None, chunk: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub threshold: f64,
    pub depths: Vec<usize>,
    pub spacing: usize,
    pub all_layers: bool,
    pub hidden_only: bool,
    /// Task used for unit traces and PCA.
    pub trace_depth: usize,
    pub trace_spacing: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            threshold: ABLATION_THRESHOLD,
            depths: SCAN_DEPTHS.to_vec(),
            spacing: SCAN_SPACING,
            all_layers: false,
            hidden_only: false,
            trace_depth: 1,
            trace_spacing: SCAN_SPACING,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub grammar: GrammarSection,
    pub corpus: CorpusSection,
    pub natask: NaTaskSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub grid: GridSection,
    pub analysis: AnalysisSection,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.grammar_params()?;
        if self.grammar.presample < MIN_PRESAMPLE {
            return bad(format!("grammar.presample must be at least {MIN_PRESAMPLE}"));
        }
        let c = &self.corpus;
        if c.train_tokens == 0 || c.valid_tokens == 0 || c.test_tokens == 0 {
            return bad("corpus token targets must be positive".into());
        }
        self.task_specs()?;
        self.model_config()?.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.training_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let g = self.grid_spec();
        if g.layers.is_empty() || g.hidden.is_empty() || g.embedding.is_empty() || g.dropout.is_empty() || g.chunk.is_empty() {
            return bad("grid axes must be nonempty".into());
        }
        let a = &self.analysis;
        if !(0.0..=1.0).contains(&a.threshold) {
            return bad("analysis.threshold must lie in [0, 1]".into());
        }
        for &d in a.depths.iter().chain([&a.trace_depth]) {
            NaTaskSpec::new(d, a.spacing).map_err(|e| ConfigError::Invalid(format!("analysis: {e}")))?;
        }
        NaTaskSpec::new(a.trace_depth, a.trace_spacing).map_err(|e| ConfigError::Invalid(format!("analysis: {e}")))?;
        Ok(())
    }

    /// Every (p1, p2) pair, p1 outer.
    pub fn grammar_params(&self) -> Result<Vec<GrammarParams>, ConfigError> {
        if self.grammar.p1.is_empty() || self.grammar.p2.is_empty() {
            return Err(ConfigError::Invalid("grammar.p1 and grammar.p2 must be nonempty".into()));
        }
        let mut out = Vec::new();
        for &p1 in &self.grammar.p1 {
            for &p2 in &self.grammar.p2 {
                let p = GrammarParams { p1, p2, number_prob_sg: self.grammar.number_prob_sg }
                    .validated()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn task_specs(&self) -> Result<Vec<NaTaskSpec>, ConfigError> {
        let n = &self.natask;
        let mut out = Vec::new();
        for &d in &n.depths {
            for &s in &n.spacings {
                out.push(
                    NaTaskSpec { d, s, n_sentences: n.sentences }
                        .validated()
                        .map_err(|e| ConfigError::Invalid(format!("natask: {e}")))?,
                );
            }
        }
        if out.is_empty() {
            return Err(ConfigError::Invalid("natask grid is empty".into()));
        }
        Ok(out)
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let m = &self.model;
        let cfg = ModelConfig::new(m.architecture, m.layers, m.hidden, m.embedding, m.dropout)
            .with_chunk(m.chunk)
            .with_stack(m.stack);
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            bptt: t.bptt,
            batch: t.batch,
            lr: t.lr,
            epochs: t.epochs,
            seed: self.seed,
            clip: t.clip,
            precision: Precision::F64,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        let mut spec = match g.preset {
            GridPreset::Full => GridSpec::full(),
            GridPreset::Reduced => GridSpec::reduced(),
        };
        if let Some(v) = &g.layers {
            spec.layers = v.clone();
        }
        if let Some(v) = &g.hidden {
            spec.hidden = v.clone();
        }
        if let Some(v) = &g.embedding {
            spec.embedding = v.clone();
        }
        if let Some(v) = &g.dropout {
            spec.dropout = v.clone();
        }
        if let Some(v) = &g.chunk {
            spec.chunk = v.clone();
        }
        spec.stack = self.model.stack;
        spec
    }
}
