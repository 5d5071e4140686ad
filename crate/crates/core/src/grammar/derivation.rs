use std::fmt;

use serde::{Deserialize, Serialize};

use super::token::{Lexeme, Number, Token};

/// One agreement level: the noun phrase opening a clause and the verb
/// phrase closing it. Adjective lists hold the prefixes in surface order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub noun_adjs: Vec<Lexeme>,
    pub noun: Lexeme,
    pub number: Number,
    pub verb_adjs: Vec<Lexeme>,
    pub verb: Lexeme,
}

/// A sampled (or parsed) derivation, stored as its agreement levels from
/// outermost to innermost. The tree is fully determined by the levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    levels: Vec<Level>,
}

/// Explicit parse tree over `S`, `NP`, `VP`, `N`, `V`, `A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Node { label: &'static str, children: Vec<Tree> },
    Leaf(Token),
}

impl Derivation {
    /// Builds a derivation from levels; at least one level is required.
    pub fn from_levels(levels: Vec<Level>) -> Option<Self> {
        if levels.is_empty() {
            None
        } else {
            Some(Derivation { levels })
        }
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Agreement pairs `(noun, verb)` from outermost to innermost.
    pub fn agreement_pairs(&self) -> Vec<(Token, Token)> {
        self.levels
            .iter()
            .map(|l| (Token::Noun(l.noun, l.number), Token::Verb(l.verb, l.number)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.levels
            .iter()
            .map(|l| 2 + l.noun_adjs.len() + l.verb_adjs.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Longest run of adjectives in front of any number-carrying token.
    pub fn max_spacing(&self) -> usize {
        self.levels
            .iter()
            .flat_map(|l| [l.noun_adjs.len(), l.verb_adjs.len()])
            .max()
            .unwrap_or(0)
    }

    pub fn tokens(&self) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.levels {
            out.extend(l.noun_adjs.iter().map(|&a| Token::Adj(a)));
            out.push(Token::Noun(l.noun, l.number));
        }
        for l in self.levels.iter().rev() {
            out.extend(l.verb_adjs.iter().map(|&a| Token::Adj(a)));
            out.push(Token::Verb(l.verb, l.number));
        }
        out
    }

    pub fn tree(&self) -> Tree {
        fn phrase(label: &'static str, pos: &'static str, adjs: &[Lexeme], head: Token) -> Tree {
            let mut children: Vec<Tree> = adjs
                .iter()
                .map(|&a| Tree::Node { label: "A", children: vec![Tree::Leaf(Token::Adj(a))] })
                .collect();
            children.push(Tree::Node { label: pos, children: vec![Tree::Leaf(head)] });
            Tree::Node { label, children }
        }
        fn clause(levels: &[Level]) -> Tree {
            let l = &levels[0];
            let mut children = vec![phrase("NP", "N", &l.noun_adjs, Token::Noun(l.noun, l.number))];
            if levels.len() > 1 {
                children.push(clause(&levels[1..]));
            }
            children.push(phrase("VP", "V", &l.verb_adjs, Token::Verb(l.verb, l.number)));
            Tree::Node { label: "S", children }
        }
        clause(&self.levels)
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf(t) => write!(f, "{t}"),
            Tree::Node { label, children } => {
                write!(f, "[{label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl Tree {
    pub fn leaves(&self) -> Vec<Token> {
        match self {
            Tree::Leaf(t) => vec![*t],
            Tree::Node { children, .. } => children.iter().flat_map(Tree::leaves).collect(),
        }
    }

    /// Number of `S` nodes in the tree.
    pub fn clause_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node { label, children } => {
                usize::from(*label == "S") + children.iter().map(Tree::clause_count).sum::<usize>()
            }
        }
    }
}
