//! Tokens, vocabularies and the constituency-tree codec.

pub mod linearize;
pub mod tree;
pub mod vocab;

pub use linearize::{delinearize, linearize, LinearizedTree, Symbol, SyntaxVocab};
pub use tree::{parse_bracketed, right_branching_tree, ParseTree};
pub use vocab::{
    bow_target, is_reserved, tokenize, word_dropout, Sentence, Vocabulary, BOS, EOS, NUM_RESERVED, PAD,
    RESERVED_TOKENS, UNK,
};
