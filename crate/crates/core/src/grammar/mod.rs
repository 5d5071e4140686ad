//! The two-parameter center-embedding grammar with number agreement:
//!
//! ```text
//! S  -> NP VP {1-p1} | NP S VP {p1}
//! NP -> N {1-p2}     | A NP {p2}
//! VP -> V {1-p2}     | A VP {p2}
//! N  -> n1 | .. | n5   (0.2 each)
//! V  -> v1 | .. | v5   (0.2 each)
//! A  -> a1 | .. | a5   (0.2 each)
//! ```
//!
//! Nouns and verbs of one clause share a grammatical number drawn once per
//! clause. `p1` controls depth, `p2` controls spacing.

mod derivation;
pub mod token;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use derivation::{Derivation, Level, Tree};
pub use token::{parse_tokens, render_tokens, Lexeme, Number, Token, LEXEMES_PER_CLASS};

/// Probability of each individual lexeme within its class.
pub const LEXEME_PROB: f64 = 0.2;

/// Upper bound on production expansions for a single derivation.
pub const EXPANSION_BUDGET: usize = 10_000;

/// Minimum pre-sample size accepted by [`estimate_truncation`].
pub const MIN_PRESAMPLE: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("invalid grammar parameters: {0}")]
    InvalidParams(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("expansion budget of {budget} steps exceeded (seed {seed:?}, sentence {sentence:?})")]
    ExpansionBudget { budget: usize, seed: Option<u64>, sentence: Option<u64> },
    #[error("parse error at token {position}: {reason}")]
    Parse { position: usize, reason: String },
    #[error("pre-sample size {0} below the minimum of {MIN_PRESAMPLE}")]
    PresampleTooSmall(usize),
}

/// Production probabilities of the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarParams {
    pub p1: f64,
    pub p2: f64,
    #[serde(default = "default_sg")]
    pub number_prob_sg: f64,
}

fn default_sg() -> f64 {
    0.5
}

impl GrammarParams {
    pub fn new(p1: f64, p2: f64) -> Result<Self, GrammarError> {
        Self { p1, p2, number_prob_sg: 0.5 }.validated()
    }

    pub fn validated(self) -> Result<Self, GrammarError> {
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.p1) || !unit(self.p2) {
            return Err(GrammarError::InvalidParams(format!(
                "p1={} and p2={} must lie in [0, 1)",
                self.p1, self.p2
            )));
        }
        if !(self.number_prob_sg > 0.0 && self.number_prob_sg < 1.0) {
            return Err(GrammarError::InvalidParams(format!(
                "number_prob_sg={} must lie in (0, 1)",
                self.number_prob_sg
            )));
        }
        Ok(self)
    }

    fn number_prob(&self, n: Number) -> f64 {
        match n {
            Number::Sg => self.number_prob_sg,
            Number::Pl => 1.0 - self.number_prob_sg,
        }
    }
}

fn draw_lexeme<R: Rng + ?Sized>(rng: &mut R) -> Lexeme {
    Lexeme::new(rng.random_range(1..=LEXEMES_PER_CLASS)).expect("lexeme range")
}

/// Samples one derivation top-down. Clauses are expanded outermost first,
/// then verb phrases close innermost first, mirroring the surface order.
pub fn sample_derivation<R: Rng + ?Sized>(
    params: &GrammarParams,
    rng: &mut R,
) -> Result<Derivation, GrammarError> {
    let mut steps = 0usize;
    let mut tick = |n: usize| {
        steps += n;
        if steps > EXPANSION_BUDGET {
            Err(GrammarError::ExpansionBudget { budget: EXPANSION_BUDGET, seed: None, sentence: None })
        } else {
            Ok(())
        }
    };
    let adjectives = |rng: &mut R, tick: &mut dyn FnMut(usize) -> Result<(), GrammarError>| {
        let mut adjs = Vec::new();
        // NP -> A NP, A -> a_i
        while rng.random::<f64>() < params.p2 {
            tick(2)?;
            adjs.push(draw_lexeme(rng));
        }
        Ok::<_, GrammarError>(adjs)
    };

    let mut levels = Vec::new();
    loop {
        tick(1)?; // S
        let embed = rng.random::<f64>() < params.p1;
        tick(1)?; // NP
        let noun_adjs = adjectives(rng, &mut tick)?;
        tick(2)?; // NP -> N, N -> n_i
        let noun = draw_lexeme(rng);
        let number = if rng.random::<f64>() < params.number_prob_sg { Number::Sg } else { Number::Pl };
        levels.push(Level { noun_adjs, noun, number, verb_adjs: Vec::new(), verb: noun });
        if !embed {
            break;
        }
    }
    for level in levels.iter_mut().rev() {
        tick(1)?; // VP
        level.verb_adjs = adjectives(rng, &mut tick)?;
        tick(2)?; // VP -> V, V -> v_i
        level.verb = draw_lexeme(rng);
    }
    Ok(Derivation::from_levels(levels).expect("at least one level"))
}

/// Natural-log probability of a derivation under the grammar.
///
/// The grammar is unambiguous, so this is also the probability of the
/// derivation's yield.
pub fn derivation_log_prob(params: &GrammarParams, derivation: &Derivation) -> f64 {
    let ln = f64::ln;
    let depth = derivation.depth();
    let mut lp = ln(1.0 - params.p1);
    if depth > 1 {
        lp += (depth - 1) as f64 * ln(params.p1);
    }
    for level in derivation.levels() {
        let adjs = (level.noun_adjs.len() + level.verb_adjs.len()) as f64;
        lp += if adjs > 0.0 { adjs * ln(params.p2) } else { 0.0 };
        lp += 2.0 * ln(1.0 - params.p2);
        lp += (adjs + 2.0) * ln(LEXEME_PROB);
        lp += ln(params.number_prob(level.number));
    }
    lp
}

/// Log probability of a token sentence (without end marker).
pub fn sentence_log_prob(params: &GrammarParams, tokens: &[Token]) -> Result<f64, GrammarError> {
    Ok(derivation_log_prob(params, &parse_sentence(tokens)?))
}

/// Recovers the unique derivation of a sentence.
pub fn parse_sentence(tokens: &[Token]) -> Result<Derivation, GrammarError> {
    let err = |position: usize, reason: &str| GrammarError::Parse { position, reason: reason.to_string() };
    if tokens.is_empty() {
        return Err(err(0, "empty sentence"));
    }
    let mut pending = Vec::new();
    let mut levels: Vec<Level> = Vec::new();
    let mut closed = 0usize;
    for (pos, &tok) in tokens.iter().enumerate() {
        match tok {
            Token::Adj(a) => pending.push(a),
            Token::Noun(noun, number) => {
                if closed > 0 {
                    return Err(err(pos, "noun after the first verb"));
                }
                levels.push(Level {
                    noun_adjs: std::mem::take(&mut pending),
                    noun,
                    number,
                    verb_adjs: Vec::new(),
                    verb: noun,
                });
            }
            Token::Verb(verb, number) => {
                if closed >= levels.len() {
                    return Err(err(pos, "more verbs than nouns"));
                }
                let idx = levels.len() - 1 - closed;
                let level = &mut levels[idx];
                if level.number != number {
                    return Err(err(
                        pos,
                        &format!("agreement violated: noun is {} but verb is {}", level.number, number),
                    ));
                }
                level.verb_adjs = std::mem::take(&mut pending);
                level.verb = verb;
                closed += 1;
            }
            Token::Eos => return Err(err(pos, "end marker inside sentence")),
        }
    }
    if !pending.is_empty() {
        return Err(err(tokens.len() - pending.len(), "trailing adjectives"));
    }
    if closed < levels.len() {
        return Err(err(tokens.len(), "fewer verbs than nouns"));
    }
    Ok(Derivation::from_levels(levels).expect("nonempty"))
}

/// Maximal depth and length accepted into a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationLimits {
    pub max_depth: usize,
    pub max_length: usize,
    pub presample_size: usize,
}

impl TruncationLimits {
    pub fn accepts(&self, d: &Derivation) -> bool {
        d.depth() <= self.max_depth && d.len() <= self.max_length
    }

    pub fn unlimited() -> Self {
        TruncationLimits { max_depth: usize::MAX, max_length: usize::MAX, presample_size: 0 }
    }
}

/// Nearest-rank percentile of an unsorted sample (`q` in `(0, 1]`).
pub fn nearest_rank_percentile(values: &mut [usize], q: f64) -> usize {
    assert!(!values.is_empty());
    values.sort_unstable();
    let rank = (q * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// 95th percentiles of depth and token length over a fresh pre-sample.
pub fn estimate_truncation<R: Rng + ?Sized>(
    params: &GrammarParams,
    presample_size: usize,
    rng: &mut R,
) -> Result<TruncationLimits, GrammarError> {
    if presample_size < MIN_PRESAMPLE {
        return Err(GrammarError::PresampleTooSmall(presample_size));
    }
    let mut depths = Vec::with_capacity(presample_size);
    let mut lengths = Vec::with_capacity(presample_size);
    for _ in 0..presample_size {
        let d = sample_derivation(params, rng)?;
        depths.push(d.depth());
        lengths.push(d.len());
    }
    Ok(TruncationLimits {
        max_depth: nearest_rank_percentile(&mut depths, 0.95).max(1),
        max_length: nearest_rank_percentile(&mut lengths, 0.95).max(2),
        presample_size,
    })
}

/// Seeded sampler that tags budget errors with the seed and sentence index
/// and optionally rejects sentences beyond truncation limits.
pub struct GrammarSampler {
    params: GrammarParams,
    seed: u64,
    drawn: u64,
    rng: ChaCha8Rng,
}

impl GrammarSampler {
    pub fn new(params: GrammarParams, seed: u64) -> Self {
        GrammarSampler { params, seed, drawn: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn params(&self) -> &GrammarParams {
        &self.params
    }

    /// Number of derivations drawn so far, accepted or not.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn sample(&mut self) -> Result<Derivation, GrammarError> {
        let sentence = self.drawn;
        self.drawn += 1;
        sample_derivation(&self.params, &mut self.rng).map_err(|e| match e {
            GrammarError::ExpansionBudget { budget, .. } => {
                GrammarError::ExpansionBudget { budget, seed: Some(self.seed), sentence: Some(sentence) }
            }
            other => other,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
