//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use dssvae::text::ParseTree;
use rand::Rng;

/// Random tree with exactly `n` nodes, labels drawn from `labels`.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, labels: &[&str]) -> ParseTree {
    assert!(n >= 1);
    let label = labels[rng.random_range(0..labels.len())];
    if n == 1 {
        return ParseTree::leaf(label).unwrap();
    }
    // Split the n - 1 remaining nodes into a random composition.
    let mut rest = n - 1;
    let mut children = Vec::new();
    while rest > 0 {
        let k = rng.random_range(1..=rest);
        children.push(random_tree(rng, k, labels));
        rest -= k;
    }
    ParseTree::node(label, children).unwrap()
}

struct Flat {
    labels: Vec<String>,
    pre: Vec<usize>,
    post: Vec<usize>,
}

fn flatten(t: &ParseTree) -> Flat {
    fn walk(t: &ParseTree, f: &mut Flat, counter: &mut usize) -> usize {
        let me = f.labels.len();
        f.labels.push(t.label().to_string());
        f.pre.push(me);
        f.post.push(0);
        for c in t.children() {
            walk(c, f, counter);
        }
        f.post[me] = *counter;
        *counter += 1;
        me
    }
    let mut f = Flat {
        labels: Vec::new(),
        pre: Vec::new(),
        post: Vec::new(),
    };
    walk(t, &mut f, &mut 0);
    f
}

/// Unit-cost tree edit distance by enumerating every mapping that
/// preserves both preorder and postorder, which are exactly the mappings
/// realisable by an edit script.
pub fn brute_force_ted(a: &ParseTree, b: &ParseTree) -> usize {
    let fa = flatten(a);
    let fb = flatten(b);
    let mut best = fa.labels.len() + fb.labels.len();
    let mut pairs = Vec::new();
    let mut used = vec![false; fb.labels.len()];
    search(&fa, &fb, 0, &mut pairs, &mut used, &mut best);
    best
}

fn consistent(fa: &Flat, fb: &Flat, pairs: &[(usize, usize)], i: usize, j: usize) -> bool {
    pairs.iter().all(|&(p, q)| {
        (fa.pre[p] < fa.pre[i]) == (fb.pre[q] < fb.pre[j]) && (fa.post[p] < fa.post[i]) == (fb.post[q] < fb.post[j])
    })
}

fn search(fa: &Flat, fb: &Flat, i: usize, pairs: &mut Vec<(usize, usize)>, used: &mut [bool], best: &mut usize) {
    if i == fa.labels.len() {
        let renames = pairs.iter().filter(|&&(p, q)| fa.labels[p] != fb.labels[q]).count();
        let cost = fa.labels.len() + fb.labels.len() - 2 * pairs.len() + renames;
        *best = (*best).min(cost);
        return;
    }
    search(fa, fb, i + 1, pairs, used, best);
    for j in 0..fb.labels.len() {
        if !used[j] && consistent(fa, fb, pairs, i, j) {
            used[j] = true;
            pairs.push((i, j));
            search(fa, fb, i + 1, pairs, used, best);
            pairs.pop();
            used[j] = false;
        }
    }
}

/// Fraction of distinct output tokens that also occur in the input.
pub fn bow_overlap(output: &str, input: &str) -> f64 {
    use std::collections::HashSet;
    let out: HashSet<&str> = output.split_whitespace().collect();
    let inp: HashSet<&str> = input.split_whitespace().collect();
    if out.is_empty() {
        return 0.0;
    }
    out.intersection(&inp).count() as f64 / out.len() as f64
}

/// Encoded splits of a freshly generated synthetic corpus.
pub struct Toy {
    pub vocab: dssvae::text::Vocabulary,
    pub syntax_vocab: dssvae::text::SyntaxVocab,
    pub train: Vec<dssvae::model::Example>,
    pub valid: Vec<dssvae::model::Example>,
    pub train_text: Vec<String>,
    pub test_text: Vec<String>,
    pub lm_text: Vec<String>,
}

pub fn toy(n_train: usize, n_test: usize, n_lm: usize, seed: u64) -> Toy {
    use dssvae::corpus::{build_examples, build_vocabs, gen_corpus, SyntheticCorpusSpec};
    let c = gen_corpus(&SyntheticCorpusSpec {
        n_train,
        n_valid: 16,
        n_test: n_test.max(1),
        n_lm,
        seed,
    })
    .unwrap();
    let train: Vec<_> = c.train.iter().map(|s| s.pair()).collect();
    let valid: Vec<_> = c.valid.iter().map(|s| s.pair()).collect();
    let (vocab, syntax_vocab) = build_vocabs(&train, 20_000).unwrap();
    Toy {
        train: build_examples(&train, &vocab, &syntax_vocab).unwrap(),
        valid: build_examples(&valid, &vocab, &syntax_vocab).unwrap(),
        train_text: c.train.iter().map(|s| s.text.clone()).collect(),
        test_text: c.test.iter().map(|s| s.text.clone()).collect(),
        lm_text: c.lm.iter().map(|s| s.text.clone()).collect(),
        vocab,
        syntax_vocab,
    }
}

impl Toy {
    pub fn dims(&self, embed: usize, hidden: usize, latent: usize) -> dssvae::model::ModelDims {
        dssvae::model::ModelDims {
            vocab_size: self.vocab.len(),
            syntax_vocab_size: self.syntax_vocab.len(),
            embed_dim: embed,
            hidden_dim: hidden,
            latent_dim: latent,
            decoder_dim: 2 * latent,
        }
    }
}

/// Random 16-dimensional posterior parameters: `μ ~ N(0, 1)`,
/// `ln σ ~ U(-1, 1)` per coordinate.
pub fn random_gaussian<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::{Distribution, StandardNormal};
    let mu = (0..16).map(|_| StandardNormal.sample(rng)).collect();
    let sigma = (0..16).map(|_| rng.random_range(-1.0f64..1.0).exp()).collect();
    (mu, sigma)
}

/// Monte-Carlo estimate of `E_q[log q(z) - log p(z)]` from `n` draws.
pub fn kl_monte_carlo<R: Rng>(mu: &[f64], sigma: &[f64], n: usize, rng: &mut R) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let mut total = 0.0;
    for _ in 0..n {
        for (m, s) in mu.iter().zip(sigma) {
            let e: f64 = StandardNormal.sample(rng);
            let z = m + s * e;
            total += -s.ln() - 0.5 * e * e + 0.5 * z * z;
        }
    }
    total / n as f64
}
