//! Corpus-level BLEU.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram totals for `n = 1..=max_n`.
pub fn ngram_stats<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>], max_n: usize) -> Result<Vec<(usize, usize)>> {
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Input("BLEU needs at least one sentence pair".into()));
    }
    if max_n == 0 {
        return Err(Error::Input("max_n must be at least 1".into()));
    }
    let mut stats = vec![(0, 0); max_n];
    for (h, r) in hypotheses.iter().zip(references) {
        for (n, slot) in (1..=max_n).zip(stats.iter_mut()) {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                slot.0 += c.min(rc.get(g).copied().unwrap_or(0));
                slot.1 += c;
            }
        }
    }
    Ok(stats)
}

/// BLEU on a 0 to 100 scale: geometric mean of modified n-gram precisions
/// times the brevity penalty.
///
/// A zero precision is replaced by `1 / (2 · candidates)` (one half when
/// there are no candidate n-grams at all). A corpus without a single
/// matching unigram scores 0, and a corpus identical to its references
/// scores exactly 100.
pub fn corpus_bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>], max_n: usize) -> Result<f64> {
    let stats = ngram_stats(hypotheses, references, max_n)?;
    if hypotheses.iter().zip(references).all(|(h, r)| h == r) {
        return Ok(100.0);
    }
    if stats[0].0 == 0 {
        return Ok(0.0);
    }
    let log_p: f64 = stats
        .iter()
        .map(|&(m, c)| {
            if m > 0 {
                (m as f64 / c as f64).ln()
            } else {
                (1.0 / (2.0 * c.max(1) as f64)).ln()
            }
        })
        .sum::<f64>()
        / max_n as f64;
    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * log_p.exp())
}

/// BLEU over whitespace-tokenized strings.
pub fn corpus_bleu_text<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<f64> {
    let split = |v: &[S]| -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.as_ref().split_whitespace().map(str::to_string).collect())
            .collect()
    };
    corpus_bleu(&split(hypotheses), &split(references), 4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn hand_counted_example() {
        let b = corpus_bleu(&[toks("a b c d e")], &[toks("a b c d f")], 4).unwrap();
        let expected = 100.0 * (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        assert!((b - expected).abs() < 1e-9);
        assert!((b - 66.87).abs() < 0.01, "{b}");
    }

    #[test]
    fn identity_and_disjoint() {
        let h = vec![toks("the cat sat"), toks("a dog")];
        assert_eq!(corpus_bleu(&h, &h, 4).unwrap(), 100.0);
        let r = vec![toks("x y z"), toks("w v")];
        assert_eq!(corpus_bleu(&h, &r, 4).unwrap(), 0.0);
    }

    #[test]
    fn clipping_and_brevity() {
        // "the the the" against "the cat": unigram 1/3 after clipping.
        let stats = ngram_stats(&[toks("the the the")], &[toks("the cat")], 2).unwrap();
        assert_eq!(stats, vec![(1, 3), (0, 2)]);
        // Short hypothesis is penalised.
        let b = corpus_bleu(&[toks("a b")], &[toks("a b c d")], 2).unwrap();
        assert!((b - 100.0 * (-1.0f64).exp()).abs() < 1e-9, "{b}");
    }

    #[test]
    fn mismatch_and_empty_are_errors() {
        assert!(corpus_bleu::<&str>(&[], &[], 4).is_err());
        assert!(corpus_bleu(&[toks("a")], &[], 4).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let h = vec![toks("a b c d"), toks("e f g"), toks("a c e")];
        let r = vec![toks("a b c e"), toks("e f h"), toks("a c e g")];
        let b1 = corpus_bleu(&h, &r, 4).unwrap();
        let (h2, r2): (Vec<_>, Vec<_>) = [2, 0, 1].iter().map(|&i| (h[i].clone(), r[i].clone())).unzip();
        let b2 = corpus_bleu(&h2, &r2, 4).unwrap();
        assert!((b1 - b2).abs() < 1e-12);
        assert!(b1 < 100.0);
    }
}
