//! Single-layer GRU language model used to score generated text.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gru_step, project_inputs, Adam, AdamConfig, Bound, Graph, GruWeights, ParamGroup, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::named_rng;
use crate::text::{tokenize, Vocabulary, BOS, EOS, PAD};

const INIT_SCALE: f64 = 0.08;
const SCORE_BATCH: usize = 64;

/// Size and training budget of an evaluation LM. Absent fields take the
/// defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_vocab: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            hidden_dim: 256,
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.001,
            max_vocab: 10_000,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("language model sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    emb: ParamId,
    w_x: ParamId,
    w_h: ParamId,
    w_hc: ParamId,
    bias: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// A trained language model with its own frozen vocabulary.
#[derive(Clone, Debug)]
pub struct EvalLm {
    vocab: Vocabulary,
    config: LmConfig,
    store: ParamStore,
    ids: Ids,
}

fn non_empty_token_lists<S: AsRef<str>>(corpus: &[S]) -> Vec<Vec<&str>> {
    corpus.iter().map(|s| tokenize(s.as_ref())).filter(|t| !t.is_empty()).collect()
}

impl EvalLm {
    fn build(vocab: Vocabulary, config: LmConfig, init: &mut dyn FnMut(&[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let (v, e, h) = (vocab.len(), config.embed_dim, config.hidden_dim);
        let mut store = ParamStore::new();
        let mut add = |name: &str, t: Tensor| store.add(name, ParamGroup::Main, t);
        let ids = Ids {
            emb: add("emb", init(&[v, e])),
            w_x: add("gru.w_x", init(&[e, 3 * h])),
            w_h: add("gru.w_h", init(&[h, 2 * h])),
            w_hc: add("gru.w_hc", init(&[h, h])),
            bias: add("gru.bias", Tensor::zeros(&[3 * h])),
            out_w: add("out.w", init(&[h, v])),
            out_b: add("out.b", Tensor::zeros(&[v])),
        };
        Ok(Self { vocab, config, store, ids })
    }

    /// Untrained model with small uniform weights.
    pub fn new<R: Rng + ?Sized>(vocab: Vocabulary, config: LmConfig, rng: &mut R) -> Result<Self> {
        Self::build(vocab, config, &mut |s| Tensor::uniform(s, INIT_SCALE, rng))
    }

    /// All-zero weights: the uniform distribution over the vocabulary.
    pub fn zeroed(vocab: Vocabulary, config: LmConfig) -> Result<Self> {
        Self::build(vocab, config, &mut |s| Tensor::zeros(s))
    }

    /// Build a vocabulary from `corpus` and train on it for the configured
    /// number of epochs. Empty lines are ignored.
    pub fn train<S: AsRef<str>>(corpus: &[S], config: LmConfig, seed: u64) -> Result<Self> {
        let lines = non_empty_token_lists(corpus);
        if lines.is_empty() {
            return Err(Error::Input("language model corpus has no sentences".into()));
        }
        let vocab = Vocabulary::build(lines.iter().map(|t| t.join(" ")), config.max_vocab.max(5))?;
        let mut lm = Self::new(vocab, config, &mut named_rng(seed, "eval-lm.init"))?;
        lm.fit(corpus, seed)?;
        Ok(lm)
    }

    /// Further training passes over `corpus`.
    pub fn fit<S: AsRef<str>>(&mut self, corpus: &[S], seed: u64) -> Result<()> {
        let data: Vec<Vec<usize>> = non_empty_token_lists(corpus)
            .iter()
            .map(|t| t.iter().map(|w| self.vocab.id(w)).collect())
            .collect();
        if data.is_empty() {
            return Err(Error::Input("language model corpus has no sentences".into()));
        }
        let ids: Vec<ParamId> = self.store.ids().collect();
        let adam = AdamConfig {
            learning_rate: self.config.learning_rate,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(&self.store, ids.clone(), adam, Some(5.0));
        let mut rng = named_rng(seed, "eval-lm.shuffle");
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<&[usize]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
                let mut g = Graph::new();
                let b = self.store.bind(&mut g, |_| true);
                let tokens: usize = batch.iter().map(|s| s.len() + 1).sum();
                let loss = self.nll_var(&mut g, &b, &batch, 1.0 / tokens as f64)?;
                if !g.value(loss).item().is_finite() {
                    return Err(Error::Numeric("language model loss is not finite".into()));
                }
                let mut grads = g.backward(loss)?;
                let gs = b.collect_grads(&self.store, &mut grads, &ids);
                opt.step(&mut self.store, gs)?;
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    /// `Σ weight · −log p(token)` over every position of `batch`, with
    /// `<s>`-prefixed inputs and `</s>`-terminated targets.
    fn nll_var(&self, g: &mut Graph, b: &Bound, batch: &[&[usize]], weight: f64) -> Result<Var> {
        let bsz = batch.len();
        let t_max = batch.iter().map(|s| s.len() + 1).max().unwrap_or(0);
        let mut inputs = vec![PAD; t_max * bsz];
        let mut targets = vec![PAD; t_max * bsz];
        let mut weights = vec![0.0; t_max * bsz];
        for (r, s) in batch.iter().enumerate() {
            for t in 0..=s.len() {
                inputs[t * bsz + r] = if t == 0 { BOS } else { s[t - 1] };
                targets[t * bsz + r] = if t == s.len() { EOS } else { s[t] };
                weights[t * bsz + r] = weight;
            }
        }
        let x = g.gather(b[self.ids.emb], &inputs)?;
        let gru = GruWeights {
            w_x: b[self.ids.w_x],
            w_h: b[self.ids.w_h],
            w_hc: b[self.ids.w_hc],
            bias: b[self.ids.bias],
        };
        let xw = project_inputs(g, x, &gru)?;
        let mut state = g.constant(Tensor::zeros(&[bsz, self.config.hidden_dim]));
        let mut outs = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let xw_t = g.slice_rows(xw, t * bsz, bsz)?;
            state = gru_step(g, xw_t, state, &gru)?;
            outs.push(state);
        }
        let hs = if outs.len() == 1 { outs[0] } else { g.concat_rows(&outs)? };
        let logits = g.matmul(hs, b[self.ids.out_w])?;
        let logits = g.add_bias(logits, b[self.ids.out_b])?;
        g.cross_entropy(logits, &targets, &weights)
    }

    /// Total NLL (nats) and token count over the non-empty sentences of
    /// `corpus`; each sentence contributes its words plus `</s>`.
    pub fn score<S: AsRef<str>>(&self, corpus: &[S]) -> Result<(f64, usize)> {
        let data: Vec<Vec<usize>> = non_empty_token_lists(corpus)
            .iter()
            .map(|t| t.iter().map(|w| self.vocab.id(w)).collect())
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        for chunk in data.chunks(SCORE_BATCH) {
            let batch: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
            let mut g = Graph::new();
            let b = self.store.bind(&mut g, |_| false);
            let nll = self.nll_var(&mut g, &b, &batch, 1.0)?;
            total += g.value(nll).item();
            count += batch.iter().map(|s| s.len() + 1).sum::<usize>();
        }
        Ok((total, count))
    }

    /// `exp(total NLL / tokens)`. Empty sentences are skipped; a corpus with
    /// nothing to score is an input error.
    pub fn perplexity<S: AsRef<str>>(&self, corpus: &[S]) -> Result<f64> {
        let (nll, count) = self.score(corpus)?;
        if count == 0 {
            return Err(Error::Input("no scorable tokens".into()));
        }
        Ok((nll / count as f64).exp())
    }
}

/// Perplexity of `n_samples` generated sentences under `lm`.
pub fn forward_ppl(sampler: &mut dyn FnMut(usize) -> Result<Vec<String>>, lm: &EvalLm, n_samples: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Input("n_samples must be at least 1".into()));
    }
    let samples = sampler(n_samples)?;
    lm.perplexity(&samples)
}

/// Train a fresh LM on `n_samples` generated sentences (vocabulary from the
/// samples) and report its perplexity on `test`.
pub fn reverse_ppl<S: AsRef<str>>(
    sampler: &mut dyn FnMut(usize) -> Result<Vec<String>>,
    n_samples: usize,
    test: &[S],
    config: LmConfig,
    seed: u64,
) -> Result<f64> {
    if n_samples < 100 {
        return Err(Error::Input(format!("reverse PPL needs at least 100 samples, got {n_samples}")));
    }
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let samples = sampler(n_samples)?;
    let usable = samples.iter().filter(|s| !s.trim().is_empty()).count();
    if usable < n_samples {
        return Err(Error::Input(format!(
            "sampler produced {usable} non-empty sentences, {n_samples} required"
        )));
    }
    let lm = EvalLm::train(&samples, config, seed)?;
    lm.perplexity(test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LmConfig {
        LmConfig {
            embed_dim: 8,
            hidden_dim: 16,
            epochs: 1,
            batch_size: 4,
            learning_rate: 0.01,
            max_vocab: 100,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let vocab = Vocabulary::build(["a b c d e f"], 100).unwrap();
        let lm = EvalLm::zeroed(vocab.clone(), tiny()).unwrap();
        let ppl = lm.perplexity(&["a b c", "f e"]).unwrap();
        assert!((ppl - vocab.len() as f64).abs() < 1e-9, "{ppl}");
    }

    #[test]
    fn overfits_one_sentence() {
        let corpus = ["the cat sits on the mat"];
        let cfg = LmConfig { epochs: 300, ..tiny() };
        let lm = EvalLm::train(&corpus, cfg, 1).unwrap();
        let ppl = lm.perplexity(&corpus).unwrap();
        assert!(ppl < 1.1, "{ppl}");
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let vocab = Vocabulary::build(["a"], 10).unwrap();
        let lm = EvalLm::zeroed(vocab, tiny()).unwrap();
        assert!(matches!(lm.perplexity(&["", "  "]), Err(Error::Input(_))));
        let mut empty = |n: usize| Ok(vec![String::new(); n]);
        assert!(forward_ppl(&mut empty, &lm, 5).is_err());
    }

    #[test]
    fn order_invariant() {
        let corpus = ["a b c", "b c a a", "c"];
        let lm = EvalLm::train(&corpus, tiny(), 2).unwrap();
        let p1 = lm.perplexity(&corpus).unwrap();
        let p2 = lm.perplexity(&["c", "a b c", "b c a a"]).unwrap();
        assert!((p1 - p2).abs() < 1e-9);
        assert!(p1 >= 1.0);
    }

    #[test]
    fn reverse_ppl_needs_enough_samples() {
        let mut s = |n: usize| Ok(vec!["a b".to_string(); n]);
        assert!(reverse_ppl(&mut s, 50, &["a b"], tiny(), 0).is_err());
        let mut half = |n: usize| Ok((0..n).map(|i| if i % 2 == 0 { "a".to_string() } else { String::new() }).collect());
        assert!(reverse_ppl(&mut half, 100, &["a b"], tiny(), 0).is_err());
    }
}
