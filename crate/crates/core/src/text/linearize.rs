//! Top-down linearization of constituency trees.
//!
//! An internal node emits its open symbol, then its children, then a
//! backtracking symbol (`/NP`). Leaves emit a single symbol and no
//! backtracking. Leaf and open symbols are distinct even when they share a
//! label, which keeps the encoding invertible for arbitrary trees.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::ParseTree;
use super::vocab::{NUM_RESERVED, RESERVED_TOKENS, UNK};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Open(String),
    Close(String),
    Leaf(String),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Open(l) | Symbol::Leaf(l) => f.write_str(l),
            Symbol::Close(l) => write!(f, "/{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearizedTree(Vec<Symbol>);

impl LinearizedTree {
    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for LinearizedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn emit(tree: &ParseTree, out: &mut Vec<Symbol>) {
    if tree.is_leaf() {
        out.push(Symbol::Leaf(tree.label().to_string()));
        return;
    }
    out.push(Symbol::Open(tree.label().to_string()));
    for c in tree.children() {
        emit(c, out);
    }
    out.push(Symbol::Close(tree.label().to_string()));
}

pub fn linearize(tree: &ParseTree) -> LinearizedTree {
    let mut out = Vec::with_capacity(tree.num_nodes() + tree.num_internal());
    emit(tree, &mut out);
    LinearizedTree(out)
}

fn invalid(position: usize, message: impl Into<String>) -> Error {
    Error::Validity {
        position,
        message: message.into(),
    }
}

/// Rebuild the tree whose linearization is `symbols`. Error positions are
/// 1-based; position 0 means the input was empty.
pub fn delinearize(symbols: &[Symbol]) -> Result<ParseTree> {
    if symbols.is_empty() {
        return Err(invalid(0, "empty symbol sequence"));
    }
    // (label, children, 1-based position of the open symbol)
    let mut stack: Vec<(&str, Vec<ParseTree>, usize)> = Vec::new();
    let mut root: Option<ParseTree> = None;
    for (i, sym) in symbols.iter().enumerate() {
        let pos = i + 1;
        if root.is_some() {
            return Err(invalid(pos, format!("{sym} after the root was closed")));
        }
        let finished = match sym {
            Symbol::Open(l) => {
                stack.push((l, Vec::new(), pos));
                None
            }
            Symbol::Leaf(l) => {
                Some(ParseTree::leaf(l.as_str()).map_err(|e| invalid(pos, e.to_string()))?)
            }
            Symbol::Close(l) => {
                let Some((open, children, _)) = stack.pop() else {
                    return Err(invalid(pos, format!("/{l} closes nothing")));
                };
                if open != l {
                    return Err(invalid(pos, format!("/{l} closes {open}")));
                }
                if children.is_empty() {
                    return Err(invalid(pos, format!("{l} closed before any child")));
                }
                Some(ParseTree::node(l.as_str(), children).map_err(|e| invalid(pos, e.to_string()))?)
            }
        };
        if let Some(t) = finished {
            match stack.last_mut() {
                Some((_, children, _)) => children.push(t),
                None => root = Some(t),
            }
        }
    }
    if let Some((label, _, pos)) = stack.first() {
        return Err(invalid(*pos, format!("{label} is never closed")));
    }
    Ok(root.expect("non-empty input yields a root or an error"))
}

/// Ids for linearized-tree symbols, built from training trees without a
/// frequency cutoff. Ids 0–3 are the reserved markers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Symbol>", into = "Vec<Symbol>")]
pub struct SyntaxVocab {
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
}

impl TryFrom<Vec<Symbol>> for SyntaxVocab {
    type Error = Error;

    fn try_from(symbols: Vec<Symbol>) -> Result<Self> {
        Self::from_symbols(symbols)
    }
}

impl From<SyntaxVocab> for Vec<Symbol> {
    fn from(v: SyntaxVocab) -> Self {
        v.symbols
    }
}

impl SyntaxVocab {
    pub fn build<'a>(trees: impl IntoIterator<Item = &'a LinearizedTree>) -> Self {
        let mut symbols: Vec<Symbol> = RESERVED_TOKENS
            .iter()
            .map(|t| Symbol::Leaf(t.to_string()))
            .collect();
        let mut index: HashMap<Symbol, usize> =
            symbols.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        for tree in trees {
            for s in tree.symbols() {
                if !index.contains_key(s) {
                    index.insert(s.clone(), symbols.len());
                    symbols.push(s.clone());
                }
            }
        }
        Self { symbols, index }
    }

    pub fn from_symbols(symbols: Vec<Symbol>) -> Result<Self> {
        let reserved_ok = symbols.len() >= NUM_RESERVED
            && symbols[..NUM_RESERVED]
                .iter()
                .zip(RESERVED_TOKENS)
                .all(|(s, r)| *s == Symbol::Leaf(r.to_string()));
        if !reserved_ok {
            return Err(Error::Input("syntax vocabulary must start with the reserved markers".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate syntax symbol {s}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, s: &Symbol) -> usize {
        self.index.get(s).copied().unwrap_or(UNK)
    }

    pub fn symbol(&self, id: usize) -> &Symbol {
        &self.symbols[id]
    }

    pub fn encode(&self, tree: &LinearizedTree) -> Vec<usize> {
        tree.symbols().iter().map(|s| self.id(s)).collect()
    }

    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.symbols {
            let tag: &[u8] = match s {
                Symbol::Open(_) => b"O",
                Symbol::Close(_) => b"C",
                Symbol::Leaf(_) => b"L",
            };
            h.update(tag);
            h.update(s.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
