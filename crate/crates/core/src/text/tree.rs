//! Constituency trees and the bracketed text format.
//!
//! Leaves are preterminal categories (`DT`, `NN`, ...); terminal words are not
//! part of the tree. Full treebank trees can be brought into this form with
//! [`ParseTree::collapse_preterminals`].

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParseTree {
    label: String,
    children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Input("empty tree label".into()));
        }
        Ok(Self {
            label,
            children: Vec::new(),
        })
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Input("empty tree label".into()));
        }
        if children.is_empty() {
            return Err(Error::Input(format!("internal node {label} has no children")));
        }
        Ok(Self { label, children })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[ParseTree] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        1 + self.children.iter().map(ParseTree::num_nodes).sum::<usize>()
    }

    pub fn num_internal(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children.iter().map(ParseTree::num_internal).sum::<usize>()
        }
    }

    pub fn num_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(ParseTree::num_leaves).sum()
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    /// Turn `(DT the)`-style preterminals into `DT` leaves, dropping the
    /// words. Only meaningful for trees that still carry terminals.
    pub fn collapse_preterminals(&self) -> ParseTree {
        if self.children.len() == 1 && self.children[0].is_leaf() {
            return ParseTree {
                label: self.label.clone(),
                children: Vec::new(),
            };
        }
        ParseTree {
            label: self.label.clone(),
            children: self.children.iter().map(ParseTree::collapse_preterminals).collect(),
        }
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

/// Deterministic right-branching tree for a sentence of `len` tokens:
/// `(X T (X T ... (X T)))`.
pub fn right_branching_tree(len: usize) -> Result<ParseTree> {
    if len == 0 {
        return Err(Error::Input("cannot build a tree for an empty sentence".into()));
    }
    let mut tree = ParseTree::node("X", vec![ParseTree::leaf("T")?])?;
    for _ in 1..len {
        tree = ParseTree::node("X", vec![ParseTree::leaf("T")?, tree])?;
    }
    Ok(tree)
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Next token and its starting byte offset; `None` at end of input.
    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        let c = rest.chars().next()?;
        match c {
            '(' => {
                self.pos += 1;
                Some((start, Tok::Open))
            }
            ')' => {
                self.pos += 1;
                Some((start, Tok::Close))
            }
            _ => {
                let len = rest
                    .find(|ch: char| ch.is_whitespace() || ch == '(' || ch == ')')
                    .unwrap_or(rest.len());
                self.pos += len;
                Some((start, Tok::Atom(&rest[..len])))
            }
        }
    }

    fn peek(&mut self) -> Option<(usize, Tok<'a>)> {
        let saved = self.pos;
        let t = self.next();
        self.pos = saved;
        t
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn parse_node(lx: &mut Lexer<'_>) -> Result<ParseTree> {
    let end = lx.text.len();
    match lx.next() {
        None => Err(parse_err(end, "unexpected end of input")),
        Some((_, Tok::Atom(a))) => Ok(ParseTree::leaf(a).expect("atoms are non-empty")),
        Some((off, Tok::Close)) => Err(parse_err(off, "unexpected ')'")),
        Some((_, Tok::Open)) => {
            let label = match lx.next() {
                Some((_, Tok::Atom(a))) => a,
                Some((off, _)) => return Err(parse_err(off, "expected a label after '('")),
                None => return Err(parse_err(end, "unexpected end of input")),
            };
            let mut children = Vec::new();
            loop {
                match lx.peek() {
                    None => return Err(parse_err(end, format!("unclosed ({label}"))),
                    Some((off, Tok::Close)) => {
                        lx.next();
                        if children.is_empty() {
                            return Err(parse_err(off, format!("({label}) has no children")));
                        }
                        return ParseTree::node(label, children);
                    }
                    Some(_) => children.push(parse_node(lx)?),
                }
            }
        }
    }
}

/// Parse one tree in `(LABEL child ...)` notation; bare tokens are leaves.
pub fn parse_bracketed(text: &str) -> Result<ParseTree> {
    let mut lx = Lexer { text, pos: 0 };
    let tree = parse_node(&mut lx)?;
    if let Some((off, _)) = lx.next() {
        return Err(parse_err(off, "trailing input after tree"));
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_tree() {
        let t = parse_bracketed("(S (NP DT NN) (VP VBZ))").unwrap();
        assert_eq!(t.num_internal(), 3);
        assert_eq!(t.num_leaves(), 3);
        assert_eq!(t.label(), "S");
        assert_eq!(t.children()[0].children()[1].label(), "NN");
        assert_eq!(t.to_string(), "(S (NP DT NN) (VP VBZ))");
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_bracketed("(S (NP DT NN) (VP VBZ))").unwrap();
        let b = parse_bracketed("  (S\n\t(NP  DT NN)(VP VBZ ) ) ").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_child() {
        let t = parse_bracketed("(X y)").unwrap();
        assert_eq!(t.children().len(), 1);
        assert_eq!(t.children()[0].label(), "y");
        assert!(t.children()[0].is_leaf());
    }

    #[test]
    fn truncated_input_reports_end_offset() {
        let text = "(S (NP";
        match parse_bracketed(text) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, text.len()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn other_errors() {
        assert!(matches!(parse_bracketed("(S (NP DT)) x"), Err(Error::Parse { offset: 12, .. })));
        assert!(matches!(parse_bracketed("( (NP DT))"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(parse_bracketed("(S)"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(parse_bracketed(")"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_bracketed(""), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn collapses_treebank_preterminals() {
        let t = parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBZ runs)))").unwrap();
        assert_eq!(t.collapse_preterminals().to_string(), "(S (NP DT NN) (VP VBZ))");
    }

    #[test]
    fn right_branching_shapes() {
        assert_eq!(right_branching_tree(1).unwrap().to_string(), "(X T)");
        let t = right_branching_tree(3).unwrap();
        assert_eq!(t.to_string(), "(X T (X T (X T)))");
        assert_eq!(t.num_internal(), 3);
        assert_eq!(t.depth(), 3);
        assert!(right_branching_tree(0).is_err());
    }
}
