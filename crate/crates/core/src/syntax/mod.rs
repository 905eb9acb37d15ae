//! Constituency trees in bracketed notation and the features read off them.

mod client;

use std::fmt;

use crate::error::{Error, Result};
use crate::record::FeatureRecord;

pub use client::{fetch_parse, sentence_key, ParseClient, ParserConfig};

pub const PENN_TAGS: [&str; 36] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS",
    "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB",
];

/// A labeled node. Leaves are tokens (no children); every leaf's parent is a
/// preterminal with that leaf as its only child.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseTree {
    pub label: String,
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(token: impl Into<String>) -> Self {
        ParseTree {
            label: token.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree {
            label: label.into(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// `(tag, token, depth)` for every leaf, left to right; depth in edges
    /// from the root.
    pub fn leaves(&self) -> Vec<(&str, &str, usize)> {
        fn walk<'a>(t: &'a ParseTree, depth: usize, out: &mut Vec<(&'a str, &'a str, usize)>) {
            for c in &t.children {
                if c.is_leaf() {
                    out.push((t.label.as_str(), c.label.as_str(), depth + 1));
                } else {
                    walk(c, depth + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            return f.write_str(&self.label);
        }
        write!(f, "({}", self.label)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, Tok::Atom(&text[s..i])));
            }
            match c {
                '(' => out.push((i, Tok::Open)),
                ')' => out.push((i, Tok::Close)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, Tok::Atom(&text[s..])));
    }
    out
}

fn err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Format(format!("bracketed parse, byte {pos}: {}", msg.into()))
}

/// Parse a Penn Treebank S-expression.
pub fn parse_bracketed(text: &str) -> Result<ParseTree> {
    let toks = lex(text);
    let mut pos = 0;
    let tree = parse_node(&toks, &mut pos, text.len())?;
    if let Some((p, _)) = toks.get(pos) {
        return Err(err(*p, "trailing input after tree"));
    }
    Ok(tree)
}

fn parse_node(toks: &[(usize, Tok<'_>)], pos: &mut usize, end: usize) -> Result<ParseTree> {
    let (open_at, t) = toks.get(*pos).ok_or_else(|| err(end, "expected '('"))?;
    if *t != Tok::Open {
        return Err(err(*open_at, "expected '('"));
    }
    *pos += 1;
    let label = match toks.get(*pos) {
        Some((_, Tok::Atom(a))) => {
            *pos += 1;
            a.to_string()
        }
        _ => String::new(),
    };
    let mut children = Vec::new();
    loop {
        match toks.get(*pos) {
            None => {
                return Err(err(
                    end,
                    format!("unbalanced: node opened at byte {open_at} is not closed"),
                ))
            }
            Some((_, Tok::Close)) => {
                *pos += 1;
                break;
            }
            Some((_, Tok::Open)) => children.push(parse_node(toks, pos, end)?),
            Some((_, Tok::Atom(a))) => {
                children.push(ParseTree::leaf(*a));
                *pos += 1;
            }
        }
    }
    if children.is_empty() {
        return Err(err(*open_at, "empty node"));
    }
    if children.iter().any(ParseTree::is_leaf) && children.len() > 1 {
        return Err(err(
            *open_at,
            format!("node {label:?} mixes tokens with other children"),
        ));
    }
    if label.is_empty() && children.iter().any(ParseTree::is_leaf) {
        return Err(err(*open_at, "token without a part-of-speech tag"));
    }
    Ok(ParseTree { label, children })
}

/// Depth, target depth, words at that depth, proper-noun cue and POS
/// one-hot. Everything is missing when the target is not a leaf.
pub fn syntactic_features(tree: Option<&ParseTree>, target: &str) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let found = tree.and_then(|t| {
        let leaves = t.leaves();
        let i = leaves
            .iter()
            .position(|l| l.1 == target)
            .or_else(|| leaves.iter().position(|l| l.1.to_lowercase() == target.to_lowercase()))?;
        Some((t.depth(), leaves, i))
    });
    match found {
        Some((depth, leaves, i)) => {
            let (tag, token, d) = leaves[i];
            let first_word = leaves.iter().position(|l| l.1.chars().any(char::is_alphanumeric));
            let capitalized = token.chars().next().is_some_and(char::is_uppercase);
            rec.non_negative("parse_tree_depth", Some(depth as f64));
            rec.non_negative("token_depth", Some(d as f64));
            rec.non_negative(
                "num_words_at_depth",
                Some(leaves.iter().filter(|l| l.2 == d).count() as f64),
            );
            rec.flag("is_proper", Some(capitalized && first_word != Some(i)));
            for t in PENN_TAGS {
                rec.flag(format!("POS_{t}"), Some(t == tag));
            }
        }
        None => {
            for name in ["parse_tree_depth", "token_depth", "num_words_at_depth"] {
                rec.non_negative(name, None);
            }
            rec.flag("is_proper", None);
            for t in PENN_TAGS {
                rec.flag(format!("POS_{t}"), None);
            }
        }
    }
    rec
}
