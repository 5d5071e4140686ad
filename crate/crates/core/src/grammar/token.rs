use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GrammarError;

/// Number of lexemes in each word class.
pub const LEXEMES_PER_CLASS: u8 = 5;

/// Grammatical number carried by nouns and verbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Number {
    Sg,
    Pl,
}

impl Number {
    pub fn as_str(self) -> &'static str {
        match self {
            Number::Sg => "sg",
            Number::Pl => "pl",
        }
    }

    pub fn flip(self) -> Number {
        match self {
            Number::Sg => Number::Pl,
            Number::Pl => Number::Sg,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Number {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sg" => Ok(Number::Sg),
            "pl" => Ok(Number::Pl),
            other => Err(GrammarError::UnknownToken(other.to_string())),
        }
    }
}

/// Lexeme index within a word class, always in `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lexeme(u8);

impl Lexeme {
    pub fn new(index: u8) -> Result<Self, GrammarError> {
        if (1..=LEXEMES_PER_CLASS).contains(&index) {
            Ok(Lexeme(index))
        } else {
            Err(GrammarError::UnknownToken(format!("lexeme {index}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Lexeme> {
        (1..=LEXEMES_PER_CLASS).map(Lexeme)
    }
}

/// One vocabulary item of the agreement language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Token {
    Noun(Lexeme, Number),
    Verb(Lexeme, Number),
    Adj(Lexeme),
    Eos,
}

pub const EOS_TEXT: &str = "<eos>";

impl Token {
    pub fn number(self) -> Option<Number> {
        match self {
            Token::Noun(_, n) | Token::Verb(_, n) => Some(n),
            _ => None,
        }
    }

    pub fn is_adj(self) -> bool {
        matches!(self, Token::Adj(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Noun(l, n) => write!(f, "n{}[{}]", l.0, n),
            Token::Verb(l, n) => write!(f, "v{}[{}]", l.0, n),
            Token::Adj(l) => write!(f, "a{}", l.0),
            Token::Eos => f.write_str(EOS_TEXT),
        }
    }
}

impl FromStr for Token {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || GrammarError::UnknownToken(s.to_string());
        if s == EOS_TEXT {
            return Ok(Token::Eos);
        }
        let bytes = s.as_bytes();
        if bytes.len() < 2 || !bytes[1].is_ascii_digit() {
            return Err(unknown());
        }
        let lexeme = Lexeme::new(bytes[1] - b'0').map_err(|_| unknown())?;
        let rest = &s[2..];
        match bytes[0] {
            b'a' if rest.is_empty() => Ok(Token::Adj(lexeme)),
            b'n' | b'v' => {
                let inner = rest
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(unknown)?;
                let number: Number = inner.parse().map_err(|_| unknown())?;
                Ok(if bytes[0] == b'n' {
                    Token::Noun(lexeme, number)
                } else {
                    Token::Verb(lexeme, number)
                })
            }
            _ => Err(unknown()),
        }
    }
}

/// Parses a whitespace-separated token line.
pub fn parse_tokens(line: &str) -> Result<Vec<Token>, GrammarError> {
    line.split_whitespace().map(str::parse).collect()
}

/// Renders tokens in their canonical space-separated text form.
pub fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.to_string());
    }
    out
}
