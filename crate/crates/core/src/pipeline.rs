//! End-to-end pipelines shared by the command-line front end, the examples
//! and the acceptance suite: training from a config, and the three
//! evaluation runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{EvalConfig, RunConfig};
use crate::corpus::{self, build_examples, build_vocabs, load_parallel, read_lines};
use crate::error::{Error, Result};
use crate::generate;
use crate::metrics::{self, corpus_bleu_text, paraphrase_scores, EvalLm, ParaphraseScores, TransferItem, TransferReport, TreeSentence};
use crate::model::DssVae;
use crate::seed::{named_rng, stream_rng, Stream};
use crate::text::{right_branching_tree, tokenize, ParseTree, SyntaxVocab, Vocabulary};
use crate::trainer::{load_checkpoint, load_checkpoint_for, Checkpoint, CheckpointTarget, StepReport, Trainer};

/// Subdirectory of a run directory holding the best checkpoint.
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Sentences and trees of the three splits.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<(String, ParseTree)>,
    pub valid: Vec<(String, ParseTree)>,
    pub test: Vec<(String, ParseTree)>,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    Ok(Dataset {
        train: load_parallel(&d.train, d.train_trees.as_deref())?,
        valid: load_parallel(&d.valid, d.valid_trees.as_deref())?,
        test: load_parallel(&d.test, d.test_trees.as_deref())?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub best_validation_elbo: f64,
    pub checkpoint: PathBuf,
    pub last: Option<StepReport>,
}

/// Train the model described by `cfg`, logging JSON lines to `log`. The
/// best checkpoint goes to `out/checkpoint` and the resolved config to
/// `out/config.json`.
pub fn train(cfg: &RunConfig, out: &Path, log: &mut dyn Write) -> Result<TrainSummary> {
    let data = load_dataset(cfg)?;
    let (vocab, syntax_vocab) = build_vocabs(&data.train, cfg.model.max_vocab)?;
    let train = build_examples(&data.train, &vocab, &syntax_vocab)?;
    let valid = build_examples(&data.valid, &vocab, &syntax_vocab)?;
    let dims = cfg.model.dims(vocab.len(), syntax_vocab.len());
    let model = DssVae::with_init_scale(dims, cfg.model.init_scale, &mut stream_rng(cfg.seed, Stream::Init))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = out.join("config.json");
    fs::write(&echo, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(&echo, e))?;
    let target = CheckpointTarget {
        dir: out.join(CHECKPOINT_DIR),
        vocab,
        syntax_vocab,
    };
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let last = trainer.fit(&train, &valid, Some(&target), log, |_, _| Ok(false))?;
    Ok(TrainSummary {
        steps: trainer.state().step,
        best_validation_elbo: trainer.state().best_validation_elbo,
        checkpoint: target.dir,
        last,
    })
}

/// Accept either a checkpoint directory or a run directory containing one.
pub fn resolve_checkpoint(path: &Path) -> PathBuf {
    let nested = path.join(CHECKPOINT_DIR);
    if !path.join("manifest.json").exists() && nested.join("manifest.json").exists() {
        nested
    } else {
        path.to_path_buf()
    }
}

pub fn open_checkpoint(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(&resolve_checkpoint(path))
}

/// Load a checkpoint and check it against the vocabulary rebuilt from the
/// config's training data.
pub fn open_checkpoint_for(cfg: &RunConfig, path: &Path) -> Result<Checkpoint> {
    let train = load_parallel(&cfg.data.train, cfg.data.train_trees.as_deref())?;
    let (vocab, _) = build_vocabs(&train, cfg.model.max_vocab)?;
    load_checkpoint_for(&resolve_checkpoint(path), &vocab)
}

/// Word ids for a line of text, with the line number in any error.
pub fn encode_line(vocab: &Vocabulary, line: &str, lineno: usize) -> Result<Vec<usize>> {
    vocab
        .encode(line)
        .map(|s| s.ids().to_vec())
        .map_err(|e| Error::Input(format!("line {lineno}: {e}")))
}

pub fn decode_text(vocab: &Vocabulary, ids: &[usize]) -> String {
    vocab.decode(ids).join(" ")
}

/// A loaded model with its vocabularies.
pub struct Generator<'a> {
    pub model: &'a DssVae,
    pub vocab: &'a Vocabulary,
    pub syntax_vocab: &'a SyntaxVocab,
    pub max_len: usize,
}

impl<'a> Generator<'a> {
    pub fn from_checkpoint(ckpt: &'a Checkpoint, max_len: usize) -> Self {
        Self {
            model: &ckpt.model,
            vocab: &ckpt.vocab,
            syntax_vocab: &ckpt.syntax_vocab,
            max_len,
        }
    }

    pub fn reconstruct(&self, line: &str) -> Result<String> {
        let x = encode_line(self.vocab, line, 1)?;
        Ok(decode_text(self.vocab, &generate::reconstruct(self.model, &x, self.max_len)?))
    }

    pub fn paraphrase(&self, line: &str, temperature: f64, rng: &mut ChaCha8Rng) -> Result<String> {
        let x = encode_line(self.vocab, line, 1)?;
        let y = generate::paraphrase(self.model, &x, self.max_len, temperature, rng)?;
        Ok(decode_text(self.vocab, &y))
    }

    pub fn transfer(&self, syntax_source: &str, content_source: &str) -> Result<String> {
        let a = encode_line(self.vocab, syntax_source, 1)?;
        let b = encode_line(self.vocab, content_source, 2)?;
        Ok(decode_text(self.vocab, &generate::syntax_transfer(self.model, &a, &b, self.max_len)?))
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
        Ok(generate::sample_prior(self.model, n, self.max_len, rng)?
            .iter()
            .map(|s| decode_text(self.vocab, s))
            .collect())
    }

    /// `n` non-empty prior samples; empty decodes are redrawn, a bounded
    /// number of times.
    pub fn sample_non_empty(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..10 {
            let want = n - out.len();
            out.extend(self.sample(want, rng)?.into_iter().filter(|s| !s.is_empty()));
            if out.len() == n {
                break;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerationReport {
    pub reconstruction_bleu: f64,
    pub forward_ppl: f64,
    pub reverse_ppl: f64,
    pub n_samples: usize,
    pub eval: EvalConfig,
    pub seed: u64,
}

/// Reconstruction BLEU on the test split (posterior means), forward
/// perplexity of prior samples under an LM trained on `data.lm`, and
/// reverse perplexity of the test split under an LM trained on samples.
pub fn eval_generation(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<GenerationReport> {
    let lm_path = cfg
        .data
        .lm
        .as_ref()
        .ok_or_else(|| Error::Config("eval-generation needs data.lm for the evaluation language model".into()))?;
    let test: Vec<String> = load_parallel(&cfg.data.test, None)?.into_iter().map(|(s, _)| s).collect();
    let gen = Generator::from_checkpoint(ckpt, cfg.eval.max_len);
    let recon = test.iter().map(|s| gen.reconstruct(s)).collect::<Result<Vec<_>>>()?;
    let reconstruction_bleu = corpus_bleu_text(&recon, &test)?;

    let lm_corpus = read_lines(lm_path)?;
    let lm = EvalLm::train(&lm_corpus, cfg.eval.lm, named_rng(cfg.seed, "eval.lm").next_u64())?;
    let mut rng = stream_rng(cfg.seed, Stream::Eval);
    let mut sampler = |n: usize| gen.sample_non_empty(n, &mut rng);
    let forward_ppl = metrics::forward_ppl(&mut sampler, &lm, cfg.eval.n_samples)?;
    let reverse_ppl = metrics::reverse_ppl(&mut sampler, cfg.eval.n_samples, &test, cfg.eval.lm, named_rng(cfg.seed, "eval.reverse-lm").next_u64())?;
    Ok(GenerationReport {
        reconstruction_bleu,
        forward_ppl,
        reverse_ppl,
        n_samples: cfg.eval.n_samples,
        eval: cfg.eval,
        seed: cfg.seed,
    })
}

/// Tab-separated pairs, one per line.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    read_lines(path)?
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split_once('\t') {
            Some((a, b)) => Ok((a.trim().to_string(), b.trim().to_string())),
            None => Err(Error::Input(format!("{} line {}: expected two tab-separated sentences", path.display(), i + 1))),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ParaphraseReport {
    #[serde(flatten)]
    pub scores: ParaphraseScores,
    pub n: usize,
    pub syn_temperature: f64,
    pub seed: u64,
}

/// Paraphrase every input of `data.paraphrase` and score against the input
/// and the reference.
pub fn eval_paraphrase(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<ParaphraseReport> {
    let path = cfg
        .data
        .paraphrase
        .as_ref()
        .ok_or_else(|| Error::Config("eval-paraphrase needs data.paraphrase".into()))?;
    let pairs = read_pairs(path)?;
    let gen = Generator::from_checkpoint(ckpt, cfg.eval.max_len);
    let mut rng = named_rng(cfg.seed, "eval.paraphrase");
    let outputs = pairs
        .iter()
        .map(|(x, _)| gen.paraphrase(x, cfg.eval.syn_temperature, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let originals: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
    let references: Vec<String> = pairs.iter().map(|p| p.1.clone()).collect();
    Ok(ParaphraseReport {
        scores: paraphrase_scores(&outputs, &originals, &references)?,
        n: pairs.len(),
        syn_temperature: cfg.eval.syn_temperature,
        seed: cfg.seed,
    })
}

/// Tree for edit distances: the grammar parse when the sentence is one the
/// bundled grammar produces, otherwise the right-branching fallback.
pub fn tree_or_fallback(sentence: &str) -> (ParseTree, bool) {
    match corpus::parse(sentence) {
        Some(t) => (t, true),
        None => {
            let n = tokenize(sentence).len().max(1);
            (right_branching_tree(n).expect("positive length"), false)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferRun {
    #[serde(flatten)]
    pub report: TransferReport,
    pub n: usize,
    /// Outputs the grammar could not parse (scored with fallback trees).
    pub unparsed_outputs: usize,
    pub seed: u64,
}

/// Transfer syntax between the pairs of `data.transfer` (syntax source,
/// content source) and compare outputs against both sources.
pub fn eval_transfer(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<TransferRun> {
    let path = cfg
        .data
        .transfer
        .as_ref()
        .ok_or_else(|| Error::Config("eval-transfer needs data.transfer".into()))?;
    let pairs = read_pairs(path)?;
    let gen = Generator::from_checkpoint(ckpt, cfg.eval.max_len);
    let mut items = Vec::with_capacity(pairs.len());
    let mut unparsed = 0;
    for (syn, sem) in &pairs {
        let out = gen.transfer(syn, sem)?;
        let (tree, parsed) = tree_or_fallback(&out);
        unparsed += usize::from(!parsed);
        items.push(TransferItem {
            output: TreeSentence::new(out, tree),
            ref_sem: TreeSentence::new(sem.clone(), tree_or_fallback(sem).0),
            ref_syn: TreeSentence::new(syn.clone(), tree_or_fallback(syn).0),
        });
    }
    Ok(TransferRun {
        report: metrics::transfer_report(&items)?,
        n: items.len(),
        unparsed_outputs: unparsed,
        seed: cfg.seed,
    })
}
