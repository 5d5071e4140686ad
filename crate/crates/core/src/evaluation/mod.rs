//! Number-agreement accuracy over the task grid and per verb position.

mod matrix;
pub(crate) mod svg;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{Ablation, CellError, Checkpoint, CheckpointError, Graph, Mode, Model};
use crate::corpus::{build_vocabulary, NaTask, NaTaskSpec, EOS_ID};
use crate::grammar::Number;
use crate::numcore::{softmax_rows, Tensor};

pub use matrix::{AccuracyMatrix, PerVerbMatrix, SVG_GENERATOR};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("missing task cells: {0:?}")]
    MissingTasks(Vec<(usize, usize)>),
    #[error("malformed matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that yields next-token distributions for equal-length
/// sentences read left to right from a fresh state.
pub trait NextTokenModel: Sync {
    /// For each requested position `p`, a `batch x vocab` matrix of
    /// probabilities for the token at `p + 1`, given tokens `0..=p`.
    fn next_token_probs(&self, sentences: &[Vec<usize>], positions: &[usize]) -> Result<Vec<Tensor>, EvalError>;
}

/// A trained model, optionally with ablated units.
pub struct ModelPredictor<'a> {
    pub model: &'a Model,
    pub ablation: Ablation,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Model) -> Self {
        ModelPredictor { model, ablation: Ablation::none() }
    }

    pub fn from_checkpoint(ck: &'a Checkpoint) -> Result<Self, EvalError> {
        ck.check_vocabulary()?;
        Ok(Self::new(&ck.model))
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Result<Self, EvalError> {
        ablation.validate(&self.model.config)?;
        self.ablation = ablation;
        Ok(self)
    }
}

impl NextTokenModel for ModelPredictor<'_> {
    fn next_token_probs(&self, sentences: &[Vec<usize>], positions: &[usize]) -> Result<Vec<Tensor>, EvalError> {
        let Some(&last) = positions.iter().max() else { return Ok(Vec::new()) };
        let mut g = Graph::with_ablation(self.model, Mode::Eval, &self.ablation)?;
        let mut state = self.model.zero_state(sentences.len());
        let mut col = vec![0; sentences.len()];
        let mut out = BTreeMap::new();
        for t in 0..=last {
            for (c, s) in col.iter_mut().zip(sentences) {
                *c = s[t];
            }
            g.reset();
            let vars = g.bind_state(state);
            let next = g.step(&col, &vars)?;
            if positions.contains(&t) {
                let logits = g.decode(Graph::top(&next));
                out.insert(t, softmax_rows(g.value(logits)));
            }
            state = g.take_state(&next);
        }
        Ok(positions.iter().map(|p| out[p].clone()).collect())
    }
}

/// Result of one task: correctness of every (sentence, verb) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaResult {
    pub spec: NaTaskSpec,
    /// `correct[i][k-1]`: verb `k` (1 = innermost) of sentence `i`, judged on
    /// summed same-number probability mass; ties are wrong.
    pub correct: Vec<Vec<bool>>,
    /// Per-lexeme variant: fraction of the five lexemes whose correct form
    /// outscores the wrong form, per (sentence, verb).
    pub lexeme_score: Vec<Vec<f64>>,
    /// Noun-number signature per sentence (bit j: noun j+1 plural).
    pub signatures: Vec<usize>,
}

impl NaResult {
    pub fn n_sentences(&self) -> usize {
        self.correct.len()
    }

    /// Accuracy of verb `k` over all sentences.
    pub fn verb_accuracy(&self, k: usize) -> f64 {
        mean(self.correct.iter().map(|r| f64::from(u8::from(r[k - 1]))))
    }

    pub fn per_verb(&self) -> Vec<f64> {
        (1..=self.spec.d).map(|k| self.verb_accuracy(k)).collect()
    }

    /// Mean over all (sentence, verb) pairs.
    pub fn overall(&self) -> f64 {
        mean(self.correct.iter().flatten().map(|&c| f64::from(u8::from(c))))
    }

    /// Fraction of sentences with every verb right.
    pub fn all_correct(&self) -> f64 {
        mean(self.correct.iter().map(|r| f64::from(u8::from(r.iter().all(|&c| c)))))
    }

    pub fn lexeme_overall(&self) -> f64 {
        mean(self.lexeme_score.iter().flatten().copied())
    }

    /// Accuracy of verb `k` restricted to sentences whose governing noun
    /// (noun `d − k + 1`) has number `n`.
    pub fn verb_accuracy_split(&self, k: usize, n: Number) -> f64 {
        let bit = self.spec.d - k;
        let want = usize::from(n == Number::Pl);
        mean(
            self.correct
                .iter()
                .zip(&self.signatures)
                .filter(|(_, &sig)| (sig >> bit) & 1 == want)
                .map(|(r, _)| f64::from(u8::from(r[k - 1]))),
        )
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Number-agreement accuracy on one task. Each sentence is read from a zero
/// state after a leading `<eos>`, as every sentence is in the training
/// stream; the distribution one step before each verb decides it.
pub fn na_accuracy(model: &dyn NextTokenModel, task: &NaTask) -> Result<NaResult, EvalError> {
    let vocab = build_vocabulary();
    let spec = task.spec;
    let sentences: Vec<Vec<usize>> = task.sentences.iter().map(|s| primed(vocab.encode(&s.tokens))).collect();
    let positions: Vec<usize> = (1..=spec.d).map(|k| spec.verb_position(k)).collect();
    let probs = model.next_token_probs(&sentences, &positions)?;
    let (sg, pl) = (vocab.verb_ids(Number::Sg), vocab.verb_ids(Number::Pl));
    let mut correct = Vec::with_capacity(sentences.len());
    let mut lexeme_score = Vec::with_capacity(sentences.len());
    for (i, sent) in task.sentences.iter().enumerate() {
        let mut c = Vec::with_capacity(spec.d);
        let mut l = Vec::with_capacity(spec.d);
        for k in 1..=spec.d {
            let row = probs[k - 1].row(i);
            let (right, wrong) = match sent.verb_number(k) {
                Number::Sg => (&sg, &pl),
                Number::Pl => (&pl, &sg),
            };
            let mass = |ids: &[usize]| ids.iter().map(|&v| row[v]).sum::<f64>();
            c.push(mass(right) > mass(wrong));
            let wins = right.iter().zip(wrong.iter()).filter(|(&r, &w)| row[r] > row[w]).count();
            l.push(wins as f64 / right.len() as f64);
        }
        correct.push(c);
        lexeme_score.push(l);
    }
    let signatures = task.sentences.iter().map(|s| s.signature()).collect();
    Ok(NaResult { spec, correct, lexeme_score, signatures })
}

/// Prefixes the sentence-boundary token.
pub fn primed(ids: Vec<usize>) -> Vec<usize> {
    let mut out = Vec::with_capacity(ids.len() + 1);
    out.push(EOS_ID);
    out.extend(ids);
    out
}

/// Which aggregate a matrix cell holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MeanOverVerbs,
    AllCorrect,
    PerLexeme,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MeanOverVerbs => "mean_over_verbs",
            Metric::AllCorrect => "all_correct",
            Metric::PerLexeme => "per_lexeme",
        }
    }

    fn of(self, r: &NaResult) -> f64 {
        match self {
            Metric::MeanOverVerbs => r.overall(),
            Metric::AllCorrect => r.all_correct(),
            Metric::PerLexeme => r.lexeme_overall(),
        }
    }
}

/// Results for a set of tasks keyed by `(d, s)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NaGrid {
    pub results: BTreeMap<(usize, usize), NaResult>,
}

/// Evaluates every task on `workers` threads.
pub fn evaluate_tasks(model: &dyn NextTokenModel, tasks: &[NaTask], workers: usize) -> Result<NaGrid, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Format(e.to_string()))?;
    let results: Vec<NaResult> =
        pool.install(|| tasks.par_iter().map(|t| na_accuracy(model, t)).collect::<Result<_, _>>())?;
    Ok(NaGrid { results: results.into_iter().map(|r| ((r.spec.d, r.spec.s), r)).collect() })
}

impl NaGrid {
    /// The `depths x spacings` matrix of `metric`. Every cell must be present.
    pub fn matrix(
        &self,
        metric: Metric,
        depths: &[usize],
        spacings: &[usize],
        train_limits: Option<(usize, usize)>,
    ) -> Result<AccuracyMatrix, EvalError> {
        let missing: Vec<(usize, usize)> = depths
            .iter()
            .flat_map(|&d| spacings.iter().map(move |&s| (d, s)))
            .filter(|k| !self.results.contains_key(k))
            .collect();
        if !missing.is_empty() {
            return Err(EvalError::MissingTasks(missing));
        }
        let cell = |d: usize, s: usize| &self.results[&(d, s)];
        Ok(AccuracyMatrix {
            metric: metric.as_str().to_string(),
            depths: depths.to_vec(),
            spacings: spacings.to_vec(),
            values: depths.iter().map(|&d| spacings.iter().map(|&s| metric.of(cell(d, s))).collect()).collect(),
            sentences: depths.iter().map(|&d| spacings.iter().map(|&s| cell(d, s).n_sentences()).collect()).collect(),
            train_max_depth: train_limits.map(|l| l.0),
            train_max_spacing: train_limits.map(|l| l.1),
        })
    }

    /// Per-verb accuracies at spacing `s` for every depth present.
    pub fn per_verb(&self, s: usize, depths: &[usize]) -> Result<PerVerbMatrix, EvalError> {
        let missing: Vec<(usize, usize)> =
            depths.iter().filter(|&&d| !self.results.contains_key(&(d, s))).map(|&d| (d, s)).collect();
        if !missing.is_empty() {
            return Err(EvalError::MissingTasks(missing));
        }
        Ok(PerVerbMatrix {
            s,
            depths: depths.to_vec(),
            rows: depths.iter().map(|&d| self.results[&(d, s)].per_verb()).collect(),
        })
    }
}

/// Full-grid accuracy matrix of a checkpoint (mean over verbs).
pub fn accuracy_matrix(
    ck: &Checkpoint,
    tasks: &[NaTask],
    train_limits: Option<(usize, usize)>,
    workers: usize,
) -> Result<AccuracyMatrix, EvalError> {
    let p = ModelPredictor::from_checkpoint(ck)?;
    let grid = evaluate_tasks(&p, tasks, workers)?;
    grid.matrix(
        Metric::MeanOverVerbs,
        &crate::corpus::task_depths(),
        &crate::corpus::task_spacings(),
        train_limits,
    )
}

/// Per-verb matrix of a checkpoint from the `s = 2` tasks.
pub fn per_verb_matrix(ck: &Checkpoint, tasks: &[NaTask], workers: usize) -> Result<PerVerbMatrix, EvalError> {
    let p = ModelPredictor::from_checkpoint(ck)?;
    let wanted: Vec<NaTask> = tasks.iter().filter(|t| t.spec.s == 2).cloned().collect();
    let grid = evaluate_tasks(&p, &wanted, workers)?;
    grid.per_verb(2, &crate::corpus::task_depths())
}
