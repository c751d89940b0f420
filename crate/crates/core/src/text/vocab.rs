use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;
pub const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["<pad>", "<s>", "</s>", "<unk>"];

pub fn is_reserved(id: usize) -> bool {
    id < NUM_RESERVED
}

/// Split pre-tokenized text on whitespace.
pub fn tokenize(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

/// Word vocabulary with the four reserved ids pinned to 0–3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Keep the `max_size − 4` most frequent tokens of `corpus` (one sentence
    /// per item); ties go to the token seen first.
    pub fn build<I, S>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size < NUM_RESERVED + 1 {
            return Err(Error::Input(format!("max_size {max_size} < 5")));
        }
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        let mut sentences = 0;
        for line in corpus {
            sentences += 1;
            for tok in tokenize(line.as_ref()) {
                if RESERVED_TOKENS.contains(&tok) {
                    continue;
                }
                let next = counts.len();
                counts.entry(tok.to_string()).or_insert((0, next)).0 += 1;
            }
        }
        if sentences == 0 {
            return Err(Error::Input("empty corpus".into()));
        }
        let mut ranked: Vec<(String, (usize, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t).take(max_size - NUM_RESERVED))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuild from an id-ordered token list (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != RESERVED_TOKENS {
            return Err(Error::Input("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, line: &str) -> Result<Sentence> {
        Sentence::new(tokenize(line).into_iter().map(|t| self.id(t)).collect())
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Sentence> {
        Sentence::new(tokens.iter().map(|t| self.id(t.as_ref())).collect())
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// SHA-256 over the id-ordered tokens, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// A non-empty sentence body: word ids without `<pad>`, `<s>` or `</s>`.
/// Out-of-vocabulary words appear as `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence(Vec<usize>);

impl Sentence {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Input("empty sentence".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i < UNK) {
            return Err(Error::Input(format!(
                "reserved token {} inside a sentence",
                RESERVED_TOKENS[bad]
            )));
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalized bag-of-words distribution over the vocabulary, ignoring
/// reserved ids.
pub fn bow_target(sentence: &[usize], vocab_size: usize) -> Result<Vec<f64>> {
    let mut t = vec![0.0; vocab_size];
    let mut total = 0usize;
    for &id in sentence {
        if is_reserved(id) {
            continue;
        }
        if id >= vocab_size {
            return Err(Error::Input(format!("token id {id} outside vocabulary")));
        }
        t[id] += 1.0;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Input("sentence has no non-reserved tokens".into()));
    }
    let n = total as f64;
    t.iter_mut().for_each(|v| *v /= n);
    Ok(t)
}

/// Replace each non-reserved id with `<unk>` independently with probability `p`.
/// One uniform draw is consumed per non-reserved position.
pub fn word_dropout<R: Rng + ?Sized>(tokens: &[usize], p: f64, rng: &mut R) -> Vec<usize> {
    assert!((0.0..=1.0).contains(&p), "dropout probability {p} outside [0, 1]");
    tokens
        .iter()
        .map(|&id| {
            if is_reserved(id) {
                id
            } else if rng.random::<f64>() < p {
                UNK
            } else {
                id
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ties_broken_by_first_occurrence() {
        let v = Vocabulary::build(["a b", "a c"], 6).unwrap();
        assert_eq!(v.tokens()[4..], ["a".to_string(), "b".to_string()]);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.id("b"), 5);
    }

    #[test]
    fn large_budget_keeps_everything() {
        let v = Vocabulary::build(["x y z", "z w"], 100).unwrap();
        for t in ["x", "y", "z", "w"] {
            assert_ne!(v.id(t), UNK);
        }
        assert_eq!(v.len(), 8);
    }

    #[test]
    fn deterministic_bytes() {
        let corpus = ["the dog runs", "a cat sits", "the cat runs"];
        let a = serde_json::to_vec(&Vocabulary::build(corpus, 20).unwrap()).unwrap();
        let b = serde_json::to_vec(&Vocabulary::build(corpus, 20).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(Vocabulary::build(Vec::<String>::new(), 10), Err(Error::Input(_))));
        assert!(Vocabulary::build(["a"], 4).is_err());
    }

    #[test]
    fn json_round_trip_and_hash() {
        let v = Vocabulary::build(["a b c", "b c d"], 50).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());
        let other = Vocabulary::build(["a b c", "b c e"], 50).unwrap();
        assert_ne!(other.content_hash(), v.content_hash());
    }

    #[test]
    fn bow_counts() {
        let v = Vocabulary::build(["a b"], 10).unwrap();
        let s = v.encode("a a b").unwrap();
        let t = bow_target(s.ids(), v.len()).unwrap();
        assert!((t[v.id("a")] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t[v.id("b")] - 1.0 / 3.0).abs() < 1e-15);
        let one = bow_target(&[v.id("b")], v.len()).unwrap();
        assert_eq!(one[v.id("b")], 1.0);
        assert!(bow_target(&[UNK, UNK], v.len()).is_err());
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let toks = vec![BOS, 5, 6, 7, EOS];
        assert_eq!(word_dropout(&toks, 0.0, &mut rng), toks);
        assert_eq!(word_dropout(&toks, 1.0, &mut rng), vec![BOS, UNK, UNK, UNK, EOS]);
    }

    #[test]
    fn dropout_rate_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let toks = vec![10usize; 100_000];
        let out = word_dropout(&toks, 0.5, &mut rng);
        let frac = out.iter().filter(|&&t| t == UNK).count() as f64 / toks.len() as f64;
        assert!((0.49..=0.51).contains(&frac), "{frac}");
    }

    #[test]
    fn sentence_rejects_markers() {
        assert!(Sentence::new(vec![]).is_err());
        assert!(Sentence::new(vec![5, EOS]).is_err());
        assert!(Sentence::new(vec![5, UNK]).is_ok());
    }

    proptest! {
        #[test]
        fn bow_is_distribution_and_permutation_invariant(
            mut ids in prop::collection::vec(4usize..30, 1..40),
            seed in any::<u64>(),
        ) {
            let t = bow_target(&ids, 30).unwrap();
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            use rand::seq::SliceRandom;
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(bow_target(&ids, 30).unwrap(), t);
        }

        #[test]
        fn dropout_preserves_length_and_reserved(
            ids in prop::collection::vec(0usize..20, 0..50),
            p in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let out = word_dropout(&ids, p, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(out.len(), ids.len());
            for (a, b) in ids.iter().zip(&out) {
                if is_reserved(*a) {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!(b == a || *b == UNK);
                }
            }
        }
    }
}
