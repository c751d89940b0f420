//! Evaluation: BLEU, language-model perplexity, tree edit distance and the
//! paraphrase and syntax-transfer reports.

mod bleu;
mod lm;
mod ted;

pub use bleu::{corpus_bleu, corpus_bleu_text, ngram_stats};
pub use lm::{forward_ppl, reverse_ppl, EvalLm, LmConfig};
pub use ted::tree_edit_distance;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::ParseTree;

/// Paraphrases scoring at or above this BLEU against their input are too
/// close to a copy to count.
pub const MAX_BLEU_ORI: f64 = 55.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseScores {
    pub bleu_ori: f64,
    pub bleu_ref: f64,
    /// `bleu_ori < 55`.
    pub admissible: bool,
}

/// BLEU of `outputs` against the inputs they paraphrase and against
/// reference paraphrases.
pub fn paraphrase_scores<S: AsRef<str>>(outputs: &[S], originals: &[S], references: &[S]) -> Result<ParaphraseScores> {
    if outputs.len() != originals.len() || outputs.len() != references.len() {
        return Err(Error::Input(format!(
            "{} outputs, {} originals, {} references",
            outputs.len(),
            originals.len(),
            references.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::Input("no paraphrases to score".into()));
    }
    let bleu_ori = corpus_bleu_text(outputs, originals)?;
    let bleu_ref = corpus_bleu_text(outputs, references)?;
    Ok(ParaphraseScores {
        bleu_ori,
        bleu_ref,
        admissible: bleu_ori < MAX_BLEU_ORI,
    })
}

/// A sentence with the tree used for edit distances.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSentence {
    pub text: String,
    pub tree: Option<ParseTree>,
}

impl TreeSentence {
    pub fn new(text: impl Into<String>, tree: ParseTree) -> Self {
        Self {
            text: text.into(),
            tree: Some(tree),
        }
    }

    fn tree(&self) -> Result<&ParseTree> {
        self.tree
            .as_ref()
            .ok_or_else(|| Error::Input(format!("no tree for {:?}", self.text)))
    }
}

/// One syntax-transfer output with its two sources.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferItem {
    pub output: TreeSentence,
    pub ref_sem: TreeSentence,
    pub ref_syn: TreeSentence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub word_bleu_vs_ref_sem: f64,
    pub word_bleu_vs_ref_syn: f64,
    pub delta_word_bleu: f64,
    pub ted_vs_ref_sem: f64,
    pub ted_vs_ref_syn: f64,
    pub delta_ted: f64,
    /// `sqrt(delta_word_bleu · delta_ted)`; absent unless both are positive.
    pub geo_mean: Option<f64>,
}

/// Word BLEU against each source and mean per-sentence tree edit distance
/// to each source's tree. Good transfer keeps the words of the content
/// source (high `delta_word_bleu`) and the tree of the syntax source (high
/// `delta_ted`).
pub fn transfer_report(items: &[TransferItem]) -> Result<TransferReport> {
    if items.is_empty() {
        return Err(Error::Input("no transfer outputs to score".into()));
    }
    let outputs: Vec<&str> = items.iter().map(|i| i.output.text.as_str()).collect();
    let sem: Vec<&str> = items.iter().map(|i| i.ref_sem.text.as_str()).collect();
    let syn: Vec<&str> = items.iter().map(|i| i.ref_syn.text.as_str()).collect();
    let word_bleu_vs_ref_sem = corpus_bleu_text(&outputs, &sem)?;
    let word_bleu_vs_ref_syn = corpus_bleu_text(&outputs, &syn)?;
    let (mut ted_sem, mut ted_syn) = (0usize, 0usize);
    for item in items {
        let out = item.output.tree()?;
        ted_sem += tree_edit_distance(out, item.ref_sem.tree()?);
        ted_syn += tree_edit_distance(out, item.ref_syn.tree()?);
    }
    let n = items.len() as f64;
    let ted_vs_ref_sem = ted_sem as f64 / n;
    let ted_vs_ref_syn = ted_syn as f64 / n;
    let delta_word_bleu = word_bleu_vs_ref_sem - word_bleu_vs_ref_syn;
    let delta_ted = ted_vs_ref_sem - ted_vs_ref_syn;
    let geo_mean = (delta_word_bleu > 0.0 && delta_ted > 0.0).then(|| (delta_word_bleu * delta_ted).sqrt());
    Ok(TransferReport {
        word_bleu_vs_ref_sem,
        word_bleu_vs_ref_syn,
        delta_word_bleu,
        ted_vs_ref_sem,
        ted_vs_ref_syn,
        delta_ted,
        geo_mean,
    })
}

/// Write `report` as one pretty-printed JSON object to `path`.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_bracketed;

    fn ts(text: &str, tree: &str) -> TreeSentence {
        TreeSentence::new(text, parse_bracketed(tree).unwrap())
    }

    #[test]
    fn paraphrase_identity() {
        let o = ["a b c d", "e f g h"];
        let r = ["x b c d", "e f y h"];
        let s = paraphrase_scores(&o, &o, &r).unwrap();
        assert_eq!(s.bleu_ori, 100.0);
        assert!(!s.admissible);
        let s = paraphrase_scores(&r, &o, &r).unwrap();
        assert_eq!(s.bleu_ref, 100.0);
        assert!(paraphrase_scores::<&str>(&[], &[], &[]).is_err());
        assert!(paraphrase_scores(&o, &o[..1], &r).is_err());
    }

    #[test]
    fn transfer_copying_the_content_source() {
        let sem = ts("the cat is in the park", "(S (NP DT NN) (VP VBZ (PP IN (NP DT NN))))");
        let syn = ts("there is a dog", "(S EX (VP VBZ (NP DT NN)))");
        let item = TransferItem {
            output: sem.clone(),
            ref_sem: sem.clone(),
            ref_syn: syn.clone(),
        };
        let r = transfer_report(&[item]).unwrap();
        let d = tree_edit_distance(sem.tree.as_ref().unwrap(), syn.tree.as_ref().unwrap()) as f64;
        assert_eq!(r.ted_vs_ref_sem, 0.0);
        assert_eq!(r.delta_ted, -d);
        assert_eq!(r.delta_word_bleu, 100.0 - r.word_bleu_vs_ref_syn);
        assert!(r.geo_mean.is_none());

        let item = TransferItem {
            output: syn.clone(),
            ref_sem: sem,
            ref_syn: syn,
        };
        let r = transfer_report(&[item]).unwrap();
        assert!(r.delta_word_bleu <= 0.0);
    }

    #[test]
    fn missing_tree_is_an_error() {
        let a = ts("a b", "(S A B)");
        let item = TransferItem {
            output: TreeSentence {
                text: "a b".into(),
                tree: None,
            },
            ref_sem: a.clone(),
            ref_syn: a,
        };
        assert!(matches!(transfer_report(&[item]), Err(Error::Input(_))));
    }

    #[test]
    fn geo_mean_when_both_deltas_positive() {
        let sem = ts("a big cat", "(NP DT JJ NN)");
        let syn = ts("there is x", "(S EX VBZ NN)");
        let out = ts("there is a big cat", "(S EX VBZ NN)");
        let r = transfer_report(&[TransferItem {
            output: out,
            ref_sem: sem,
            ref_syn: syn,
        }])
        .unwrap();
        assert!(r.delta_word_bleu > 0.0 && r.delta_ted > 0.0, "{r:?}");
        assert!((r.geo_mean.unwrap() - (r.delta_word_bleu * r.delta_ted).sqrt()).abs() < 1e-12);
    }
}
