use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, EOS_ID};
use super::CorpusError;
use crate::grammar::{parse_sentence, parse_tokens, GrammarParams, GrammarSampler, TruncationLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetId {
    pub p1: f64,
    pub p2: f64,
    pub split: Split,
    pub seed: u64,
}

impl DatasetId {
    /// File-name stem, e.g. `train_p1-0.5_p2-0.5`.
    pub fn stem(&self) -> String {
        format!("{}_p1-{}_p2-{}", self.split, self.p1, self.p2)
    }
}

/// Exact counts over a stream's sentences.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sentences: usize,
    pub tokens: usize,
    pub depth: BTreeMap<usize, usize>,
    pub max_spacing: BTreeMap<usize, usize>,
    pub length: BTreeMap<usize, usize>,
}

impl DatasetStats {
    pub fn max_depth(&self) -> usize {
        self.depth.keys().next_back().copied().unwrap_or(0)
    }

    pub fn max_spacing_seen(&self) -> usize {
        self.max_spacing.keys().next_back().copied().unwrap_or(0)
    }

    fn record(&mut self, depth: usize, spacing: usize, len: usize) {
        self.sentences += 1;
        self.tokens += len + 1;
        *self.depth.entry(depth).or_default() += 1;
        *self.max_spacing.entry(spacing).or_default() += 1;
        *self.length.entry(len).or_default() += 1;
    }
}

/// Concatenated sentences, each followed by the end marker.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenStream {
    pub id: DatasetId,
    ids: Vec<usize>,
    sentence_starts: Vec<usize>,
    stats: DatasetStats,
}

impl TokenStream {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sentence_starts(&self) -> &[usize] {
        &self.sentence_starts
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_starts.len()
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    /// Ids of sentence `i`, without its end marker.
    pub fn sentence(&self, i: usize) -> &[usize] {
        let start = self.sentence_starts[i];
        let end = self.sentence_starts.get(i + 1).copied().unwrap_or(self.ids.len());
        &self.ids[start..end - 1]
    }

    /// Builds a stream from id sentences (no end markers), validating each.
    pub fn from_sentences(id: DatasetId, sentences: &[Vec<usize>]) -> Result<Self, CorpusError> {
        let vocab = Vocabulary::new();
        let mut stream = TokenStream { id, ids: Vec::new(), sentence_starts: Vec::new(), stats: DatasetStats::default() };
        for (line, s) in sentences.iter().enumerate() {
            let toks = s.iter().map(|&i| vocab.token(i)).collect::<Result<Vec<_>, _>>()?;
            let d = parse_sentence(&toks).map_err(|e| CorpusError::Line { line: line + 1, source: e })?;
            stream.sentence_starts.push(stream.ids.len());
            stream.ids.extend_from_slice(s);
            stream.ids.push(EOS_ID);
            stream.stats.record(d.depth(), d.max_spacing(), d.len());
        }
        Ok(stream)
    }

    /// One sentence per line, tokens space-separated, end marker implicit.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        let vocab = Vocabulary::new();
        for i in 0..self.sentence_count() {
            let mut line = String::new();
            for (k, &id) in self.sentence(i).iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                line.push_str(&vocab.text(id)?);
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(id: DatasetId, r: R) -> Result<Self, CorpusError> {
        let vocab = Vocabulary::new();
        let mut sentences = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let toks = parse_tokens(&line).map_err(|e| CorpusError::Line { line: n + 1, source: e })?;
            sentences.push(vocab.encode(&toks));
        }
        Self::from_sentences(id, &sentences)
    }

    /// Parses corpus text held in memory.
    pub fn parse_text(id: DatasetId, text: &str) -> Result<Self, CorpusError> {
        Self::read_text(id, text.as_bytes())
    }
}

/// Minimum fraction of pre-truncation draws that must be accepted.
pub const MIN_ACCEPTANCE: f64 = 0.01;

/// Samples accepted sentences until the stream holds at least
/// `target_tokens` tokens (end markers included). Sentences are never cut.
pub fn build_corpus(
    params: &GrammarParams,
    limits: &TruncationLimits,
    target_tokens: usize,
    split: Split,
    seed: u64,
) -> Result<TokenStream, CorpusError> {
    let vocab = Vocabulary::new();
    let mut sampler = GrammarSampler::new(*params, seed);
    let id = DatasetId { p1: params.p1, p2: params.p2, split, seed };
    let mut stream = TokenStream { id, ids: Vec::with_capacity(target_tokens + 64), sentence_starts: Vec::new(), stats: DatasetStats::default() };
    while stream.ids.len() < target_tokens {
        let d = sampler.sample()?;
        let drawn = sampler.drawn();
        if !limits.accepts(&d) {
            let accepted = stream.sentence_count() as f64;
            if drawn >= 1000 && accepted / (drawn as f64) < MIN_ACCEPTANCE {
                return Err(CorpusError::LowAcceptance { accepted: accepted as u64, drawn });
            }
            continue;
        }
        stream.sentence_starts.push(stream.ids.len());
        stream.ids.extend(vocab.encode(&d.tokens()));
        stream.ids.push(EOS_ID);
        stream.stats.record(d.depth(), d.max_spacing(), d.len());
    }
    Ok(stream)
}

/// Recomputes depth, maximum-spacing and length histograms by parsing every
/// sentence of the stream.
pub fn dataset_statistics(stream: &TokenStream) -> Result<DatasetStats, CorpusError> {
    let vocab = Vocabulary::new();
    let mut stats = DatasetStats::default();
    for i in 0..stream.sentence_count() {
        let toks = stream.sentence(i).iter().map(|&t| vocab.token(t)).collect::<Result<Vec<_>, _>>()?;
        let d = parse_sentence(&toks).map_err(|e| CorpusError::Line { line: i + 1, source: e })?;
        stats.record(d.depth(), d.max_spacing(), d.len());
    }
    Ok(stats)
}
