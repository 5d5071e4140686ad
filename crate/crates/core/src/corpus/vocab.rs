use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::grammar::{Lexeme, Number, Token, LEXEMES_PER_CLASS};

pub const VOCAB_SIZE: usize = 26;
pub const EOS_ID: usize = 25;

const NOUN_BASE: usize = 0;
const VERB_BASE: usize = 10;
const ADJ_BASE: usize = 20;

/// Fixed bijection between the 26 token texts and ids `0..26`:
/// nouns `0..10`, verbs `10..20`, adjectives `20..25`, end marker `25`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
}

fn number_offset(n: Number) -> usize {
    match n {
        Number::Sg => 0,
        Number::Pl => 1,
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let tokens = (0..VOCAB_SIZE).map(|id| Self::decode(id).expect("in range")).collect();
        Vocabulary { tokens }
    }

    fn decode(id: usize) -> Option<Token> {
        let lex = |k: usize| Lexeme::new(k as u8 + 1).ok();
        let num = |k: usize| if k % 2 == 0 { Number::Sg } else { Number::Pl };
        match id {
            0..=9 => Some(Token::Noun(lex((id - NOUN_BASE) / 2)?, num(id))),
            10..=19 => Some(Token::Verb(lex((id - VERB_BASE) / 2)?, num(id))),
            20..=24 => Some(Token::Adj(lex(id - ADJ_BASE)?)),
            EOS_ID => Some(Token::Eos),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: Token) -> usize {
        let lex = |l: Lexeme| usize::from(l.get() - 1);
        match token {
            Token::Noun(l, n) => NOUN_BASE + 2 * lex(l) + number_offset(n),
            Token::Verb(l, n) => VERB_BASE + 2 * lex(l) + number_offset(n),
            Token::Adj(l) => ADJ_BASE + lex(l),
            Token::Eos => EOS_ID,
        }
    }

    pub fn token(&self, id: usize) -> Result<Token, CorpusError> {
        self.tokens.get(id).copied().ok_or(CorpusError::UnknownId(id))
    }

    pub fn lookup(&self, text: &str) -> Result<usize, CorpusError> {
        let t: Token = text.parse().map_err(|_| CorpusError::UnknownToken(text.to_string()))?;
        Ok(self.id(t))
    }

    pub fn text(&self, id: usize) -> Result<String, CorpusError> {
        Ok(self.token(id)?.to_string())
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|&t| self.id(t)).collect()
    }

    /// Ids of all verb forms carrying `number`.
    pub fn verb_ids(&self, number: Number) -> Vec<usize> {
        (0..usize::from(LEXEMES_PER_CLASS)).map(|k| VERB_BASE + 2 * k + number_offset(number)).collect()
    }

    /// Hex SHA-256 over the newline-joined token texts in id order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// The fixed vocabulary.
pub fn build_vocabulary() -> Vocabulary {
    Vocabulary::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_and_roundtrip() {
        let v = build_vocabulary();
        assert_eq!(v.len(), 26);
        for id in 0..26 {
            let text = v.text(id).unwrap();
            assert_eq!(v.lookup(&text).unwrap(), id);
        }
        let id = v.lookup("n3[pl]").unwrap();
        assert_eq!(v.text(id).unwrap(), "n3[pl]");
        assert!(matches!(v.lookup("v6[sg]"), Err(CorpusError::UnknownToken(_))));
        assert!(v.token(26).is_err());
    }

    #[test]
    fn content_tokens_enumerate_classes() {
        let v = build_vocabulary();
        let toks: Vec<Token> = (0..25).map(|i| v.token(i).unwrap()).collect();
        assert_eq!(toks.iter().filter(|t| matches!(t, Token::Noun(..))).count(), 10);
        assert_eq!(toks.iter().filter(|t| matches!(t, Token::Verb(..))).count(), 10);
        assert_eq!(toks.iter().filter(|t| t.is_adj()).count(), 5);
        assert_eq!(v.hash(), build_vocabulary().hash());
        assert_eq!(v.verb_ids(Number::Sg).len(), 5);
    }
}
