//! Fixed-template number-agreement tasks.
//!
//! A task `(d, s)` holds sentences with `d` nested noun-verb dependencies,
//! exactly `s` adjectives between consecutive number-carrying tokens and `s`
//! adjectives on both ends:
//!
//! ```text
//! A^s n1 A^s n2 .. A^s nd A^s vd A^s .. A^s v1 A^s
//! ```

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::grammar::{parse_tokens, render_tokens, Lexeme, Number, Token, LEXEMES_PER_CLASS};

pub const MAX_TASK_DEPTH: usize = 10;
pub const DEFAULT_TASK_SENTENCES: usize = 1000;

/// The spacing grid: `1..=16` and `32`.
pub fn task_spacings() -> Vec<usize> {
    (1..=16).chain([32]).collect()
}

pub fn task_depths() -> Vec<usize> {
    (1..=MAX_TASK_DEPTH).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NaTaskSpec {
    pub d: usize,
    pub s: usize,
    pub n_sentences: usize,
}

impl NaTaskSpec {
    pub fn new(d: usize, s: usize) -> Result<Self, CorpusError> {
        Self { d, s, n_sentences: DEFAULT_TASK_SENTENCES }.validated()
    }

    pub fn validated(self) -> Result<Self, CorpusError> {
        let s_ok = (1..=16).contains(&self.s) || self.s == 32;
        if !(1..=MAX_TASK_DEPTH).contains(&self.d) || !s_ok || self.n_sentences == 0 {
            return Err(CorpusError::InvalidTask { d: self.d, s: self.s });
        }
        Ok(self)
    }

    pub fn sentence_len(&self) -> usize {
        2 * self.d + (2 * self.d + 1) * self.s
    }

    /// Position of verb `k` (1 = innermost) within each sentence.
    pub fn verb_position(&self, k: usize) -> usize {
        // verbs follow d nouns; the innermost is the first verb in surface order.
        let idx = self.d + (k - 1);
        (idx + 1) * self.s + idx
    }

    pub fn noun_position(&self, j: usize) -> usize {
        // j is 1-based from the outermost noun.
        j * self.s + (j - 1)
    }

    pub fn stem(&self) -> String {
        format!("na_d{}_s{}", self.d, self.s)
    }
}

/// All 170 task specs of the default grid.
pub fn full_task_grid() -> Vec<NaTaskSpec> {
    task_depths()
        .into_iter()
        .flat_map(|d| task_spacings().into_iter().map(move |s| NaTaskSpec::new(d, s).expect("grid")))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaSentence {
    pub tokens: Vec<Token>,
    /// Noun numbers from the outermost noun inward.
    pub nouns: Vec<Number>,
}

impl NaSentence {
    /// Expected number at verb `k` (1 = innermost).
    pub fn verb_number(&self, k: usize) -> Number {
        self.nouns[self.nouns.len() - k]
    }

    /// Noun-number pattern as a bit signature: bit `j` set when noun `j+1`
    /// (from the outside) is plural.
    pub fn signature(&self) -> usize {
        self.nouns.iter().enumerate().map(|(j, n)| usize::from(*n == Number::Pl) << j).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaTask {
    pub spec: NaTaskSpec,
    pub seed: u64,
    pub sentences: Vec<NaSentence>,
}

fn lexeme<R: Rng>(rng: &mut R) -> Lexeme {
    Lexeme::new(rng.random_range(1..=LEXEMES_PER_CLASS)).expect("lexeme")
}

pub fn build_na_task(spec: NaTaskSpec, seed: u64) -> Result<NaTask, CorpusError> {
    let spec = spec.validated()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(spec.n_sentences);
    for _ in 0..spec.n_sentences {
        let nouns: Vec<Number> =
            (0..spec.d).map(|_| if rng.random::<bool>() { Number::Sg } else { Number::Pl }).collect();
        let mut tokens = Vec::with_capacity(spec.sentence_len());
        let pad = |tokens: &mut Vec<Token>, rng: &mut ChaCha8Rng| {
            for _ in 0..spec.s {
                tokens.push(Token::Adj(lexeme(rng)));
            }
        };
        for &n in &nouns {
            pad(&mut tokens, &mut rng);
            tokens.push(Token::Noun(lexeme(&mut rng), n));
        }
        for &n in nouns.iter().rev() {
            pad(&mut tokens, &mut rng);
            tokens.push(Token::Verb(lexeme(&mut rng), n));
        }
        pad(&mut tokens, &mut rng);
        sentences.push(NaSentence { tokens, nouns });
    }
    Ok(NaTask { spec, seed, sentences })
}

/// Checks the template invariants of one sentence; returns the noun numbers.
pub fn check_na_sentence(spec: &NaTaskSpec, tokens: &[Token]) -> Result<Vec<Number>, String> {
    if tokens.len() != spec.sentence_len() {
        return Err(format!("length {} != {}", tokens.len(), spec.sentence_len()));
    }
    let mut nouns = Vec::new();
    for j in 1..=spec.d {
        match tokens[spec.noun_position(j)] {
            Token::Noun(_, n) => nouns.push(n),
            other => return Err(format!("expected noun {j}, found {other}")),
        }
    }
    for k in 1..=spec.d {
        match tokens[spec.verb_position(k)] {
            Token::Verb(_, n) if n == nouns[spec.d - k] => {}
            Token::Verb(_, n) => return Err(format!("verb {k} is {n}, noun {} is {}", spec.d - k + 1, nouns[spec.d - k])),
            other => return Err(format!("expected verb {k}, found {other}")),
        }
    }
    let carriers = tokens.iter().filter(|t| !t.is_adj()).count();
    if carriers != 2 * spec.d {
        return Err(format!("{carriers} number-carrying tokens, expected {}", 2 * spec.d));
    }
    Ok(nouns)
}

impl NaTask {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Writes the task file and its verb index sidecar.
    pub fn write<W1: Write, W2: Write>(&self, mut task: W1, mut index: W2) -> Result<(), CorpusError> {
        let NaTaskSpec { d, s, n_sentences } = self.spec;
        writeln!(task, "#natask d={d} s={s} seed={} n={n_sentences}", self.seed)?;
        writeln!(index, "#naindex d={d} s={s} n={n_sentences}")?;
        for sent in &self.sentences {
            writeln!(task, "{}", render_tokens(&sent.tokens))?;
            let entries: Vec<String> = (1..=d)
                .map(|k| format!("{}:{}", self.spec.verb_position(k), sent.verb_number(k)))
                .collect();
            writeln!(index, "{}", entries.join(" "))?;
        }
        Ok(())
    }

    /// Reads a task file with its sidecar, re-validating every invariant.
    pub fn read<R1: BufRead, R2: BufRead>(task: R1, index: R2) -> Result<NaTask, CorpusError> {
        let mut task_lines = task.lines();
        let mut index_lines = index.lines();
        let header = task_lines.next().ok_or_else(|| header_err("missing task header"))??;
        let fields = parse_header(&header, "#natask", &["d", "s", "seed", "n"])?;
        let spec = NaTaskSpec { d: fields[0] as usize, s: fields[1] as usize, n_sentences: fields[3] as usize }
            .validated()?;
        let seed = fields[2];
        let iheader = index_lines.next().ok_or_else(|| header_err("missing index header"))??;
        let ifields = parse_header(&iheader, "#naindex", &["d", "s", "n"])?;
        if ifields != [spec.d as u64, spec.s as u64, spec.n_sentences as u64] {
            return Err(header_err("index header disagrees with task header"));
        }
        let mut sentences = Vec::with_capacity(spec.n_sentences.min(1 << 16));
        for (i, line) in task_lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if sentences.len() == spec.n_sentences {
                return Err(CorpusError::Format { line: lineno, reason: "more sentences than declared".into() });
            }
            let tokens = parse_tokens(&line).map_err(|e| CorpusError::Line { line: lineno, source: e })?;
            let nouns = check_na_sentence(&spec, &tokens).map_err(|reason| CorpusError::Format { line: lineno, reason })?;
            let iline = index_lines
                .next()
                .ok_or(CorpusError::Format { line: lineno, reason: "index file too short".into() })??;
            let sent = NaSentence { tokens, nouns };
            let expected: Vec<String> = (1..=spec.d)
                .map(|k| format!("{}:{}", spec.verb_position(k), sent.verb_number(k)))
                .collect();
            if iline.split_whitespace().ne(expected.iter().map(String::as_str)) {
                return Err(CorpusError::Format { line: lineno, reason: format!("index entry `{iline}` disagrees with sentence") });
            }
            sentences.push(sent);
        }
        if sentences.len() != spec.n_sentences {
            return Err(CorpusError::Format {
                line: sentences.len() + 2,
                reason: format!("{} sentences, header declares {}", sentences.len(), spec.n_sentences),
            });
        }
        if index_lines.next().is_some() {
            return Err(CorpusError::Format { line: spec.n_sentences + 2, reason: "index file too long".into() });
        }
        Ok(NaTask { spec, seed, sentences })
    }
}

fn header_err(reason: &str) -> CorpusError {
    CorpusError::Format { line: 1, reason: reason.to_string() }
}

fn parse_header(line: &str, magic: &str, keys: &[&str]) -> Result<Vec<u64>, CorpusError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(header_err(&format!("expected `{magic}` header")));
    }
    let mut out = Vec::new();
    for &key in keys {
        let part = parts.next().ok_or_else(|| header_err(&format!("missing `{key}`")))?;
        let value = part
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| header_err(&format!("bad field `{part}`, expected `{key}=<int>`")))?;
        out.push(value);
    }
    if parts.next().is_some() {
        return Err(header_err("trailing header fields"));
    }
    Ok(out)
}
