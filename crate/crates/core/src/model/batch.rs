use crate::error::{Error, Result};
use crate::text::{bow_target, LinearizedTree, Sentence, SyntaxVocab, Vocabulary};

/// One training sentence with its syntax sequence and bag-of-words target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sentence: Sentence,
    pub syntax: Vec<usize>,
    pub bow: Vec<f64>,
}

impl Example {
    pub fn new(sentence: Sentence, tree: &LinearizedTree, vocab: &Vocabulary, syntax_vocab: &SyntaxVocab) -> Result<Self> {
        if tree.is_empty() {
            return Err(Error::Input("empty syntax sequence".into()));
        }
        let bow = bow_target(sentence.ids(), vocab.len())?;
        Ok(Self {
            syntax: syntax_vocab.encode(tree),
            sentence,
            bow,
        })
    }

    /// From raw ids, for tests and synthetic data.
    pub fn from_ids(words: Vec<usize>, syntax: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if syntax.is_empty() {
            return Err(Error::Input("empty syntax sequence".into()));
        }
        let bow = bow_target(&words, vocab_size)?;
        Ok(Self {
            sentence: Sentence::new(words)?,
            syntax,
            bow,
        })
    }
}

/// A nonempty group of examples processed together.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    examples: Vec<&'a Example>,
}

impl<'a> Batch<'a> {
    pub fn new(examples: Vec<&'a Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[&'a Example] {
        &self.examples
    }

    pub(crate) fn words(&self) -> Vec<&[usize]> {
        self.examples.iter().map(|e| e.sentence.ids()).collect()
    }

    pub(crate) fn syntax(&self) -> Vec<&[usize]> {
        self.examples.iter().map(|e| e.syntax.as_slice()).collect()
    }

    pub(crate) fn bow_rows(&self) -> Vec<f64> {
        self.examples.iter().flat_map(|e| e.bow.iter().copied()).collect()
    }
}
