//! Sentence variational autoencoder with disentangled syntactic and semantic
//! latent spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tensors, a reverse-mode tape, GRU cells and Adam.
//! - [`text`]: vocabularies, bag-of-words targets, word dropout and the
//!   constituency-tree codec (bracketed trees and their linearized form).
//! - [`model`]: the two-space VAE with its multi-task heads, adversaries and
//!   adversarial reconstruction decoders.
//! - [`trainer`]: the alternating adversary/VAE training loop, KL annealing
//!   and checkpoints.
//! - [`generate`]: reconstruction, prior sampling, paraphrasing and syntax
//!   transfer.
//! - [`metrics`]: corpus BLEU, perplexity with an internal GRU language
//!   model, tree edit distance and transfer reports.
//! - [`config`], [`corpus`], [`pipeline`] and [`cli`]: run configuration,
//!   the bundled synthetic corpus, end-to-end train/evaluate runs and the
//!   command-line front end.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod generate;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
