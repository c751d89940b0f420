//! A small templated grammar standing in for a treebank, plus readers for
//! line-aligned sentence and tree files.
//!
//! Every frame carries a fixed preterminal tree, so generated sentences come
//! with exact parses. Frames are grouped in pairs that express the same
//! content with different syntax ("there is a cat in the park" / "the cat is
//! in the park"), which gives paraphrase references for free.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Example;
use crate::seed::{stream_rng, Stream};
use crate::text::{linearize, parse_bracketed, right_branching_tree, tokenize, ParseTree, SyntaxVocab, Vocabulary};

const NOUNS: [&str; 12] = [
    "cat", "dog", "bird", "man", "woman", "boy", "girl", "airplane", "horse", "child", "teacher", "farmer",
];
const PREPS: [&str; 6] = ["in", "on", "near", "under", "behind", "above"];
const PLACES: [&str; 8] = ["park", "sky", "street", "house", "garden", "river", "field", "kitchen"];
const GERUNDS: [&str; 6] = ["running", "sitting", "sleeping", "playing", "waiting", "standing"];
const PRESENT: [&str; 6] = ["runs", "sits", "sleeps", "plays", "waits", "stands"];
const TRANSITIVE: [&str; 4] = ["sees", "chases", "follows", "watches"];
const PARTICIPLES: [&str; 4] = ["seen", "chased", "followed", "watched"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Noun,
    Object,
    Prep,
    Place,
    Gerund,
    Present,
    Transitive,
    Participle,
}

impl Slot {
    fn words(self) -> &'static [&'static str] {
        match self {
            Slot::Noun | Slot::Object => &NOUNS,
            Slot::Prep => &PREPS,
            Slot::Place => &PLACES,
            Slot::Gerund => &GERUNDS,
            Slot::Present => &PRESENT,
            Slot::Transitive => &TRANSITIVE,
            Slot::Participle => &PARTICIPLES,
        }
    }

    fn pick(self, c: &Content) -> usize {
        match self {
            Slot::Noun => c.noun,
            Slot::Object => c.object,
            Slot::Prep => c.prep,
            Slot::Place => c.place,
            Slot::Gerund | Slot::Present | Slot::Transitive | Slot::Participle => c.verb,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Item {
    Word(&'static str),
    Slot(Slot),
}

struct Frame {
    items: &'static [Item],
    tree: &'static str,
    pair: usize,
}

use Item::{Slot as S, Word as W};
use Slot::*;

const FRAMES: [Frame; 8] = [
    Frame {
        items: &[W("there"), W("is"), W("a"), S(Noun), S(Prep), W("the"), S(Place)],
        tree: "(S (NP EX) (VP VBZ (NP (NP DT NN) (PP IN (NP DT NN)))))",
        pair: 1,
    },
    Frame {
        items: &[W("the"), S(Noun), W("is"), S(Prep), W("the"), S(Place)],
        tree: "(S (NP DT NN) (VP VBZ (PP IN (NP DT NN))))",
        pair: 0,
    },
    Frame {
        items: &[W("the"), S(Noun), W("is"), S(Gerund), S(Prep), W("the"), S(Place)],
        tree: "(S (NP DT NN) (VP VBZ (VP VBG (PP IN (NP DT NN)))))",
        pair: 3,
    },
    Frame {
        items: &[W("a"), S(Noun), S(Present), S(Prep), W("the"), S(Place)],
        tree: "(S (NP DT NN) (VP VBZ (PP IN (NP DT NN))))",
        pair: 2,
    },
    Frame {
        items: &[W("is"), W("there"), W("a"), S(Noun), S(Prep), W("the"), S(Place), W("?")],
        tree: "(SQ VBZ (NP EX) (NP (NP DT NN) (PP IN (NP DT NN))) .)",
        pair: 5,
    },
    Frame {
        items: &[W("is"), W("a"), S(Noun), S(Prep), W("the"), S(Place), W("?")],
        tree: "(SQ VBZ (NP (NP DT NN) (PP IN (NP DT NN))) .)",
        pair: 4,
    },
    Frame {
        items: &[W("the"), S(Noun), S(Transitive), W("the"), S(Object)],
        tree: "(S (NP DT NN) (VP VBZ (NP DT NN)))",
        pair: 7,
    },
    Frame {
        items: &[W("the"), S(Object), W("is"), S(Participle), W("by"), W("the"), S(Noun)],
        tree: "(S (NP DT NN) (VP VBZ (VP VBN (PP IN (NP DT NN)))))",
        pair: 6,
    },
];

/// Slot fillers shared between the two frames of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Content {
    noun: usize,
    object: usize,
    prep: usize,
    place: usize,
    verb: usize,
}

fn frame_slots(frame: usize) -> impl Iterator<Item = Slot> {
    FRAMES[frame].items.iter().filter_map(|i| match i {
        Item::Slot(s) => Some(*s),
        Item::Word(_) => None,
    })
}

fn verb_choices(frame: usize) -> usize {
    frame_slots(frame)
        .find(|s| matches!(s, Gerund | Present | Transitive | Participle))
        .map_or(1, |s| s.words().len())
}

fn frame_capacity(frame: usize) -> usize {
    frame_slots(frame).map(|s| s.words().len()).product()
}

fn render(frame: usize, c: &Content) -> String {
    let mut out = String::new();
    for (i, item) in FRAMES[frame].items.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match item {
            Item::Word(w) => out.push_str(w),
            Item::Slot(s) => out.push_str(s.words()[s.pick(c)]),
        }
    }
    out
}

fn frame_tree(frame: usize) -> ParseTree {
    parse_bracketed(FRAMES[frame].tree).expect("frame trees are well formed")
}

/// A generated sentence with its parse and template frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSentence {
    pub text: String,
    pub tree: ParseTree,
    pub frame: usize,
    /// The same content rendered in the paired frame.
    pub paraphrase: String,
}

/// Sizes of the generated splits. `n_lm` sentences are held out for
/// training the evaluation language model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    #[serde(default)]
    pub n_lm: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<TaggedSentence>,
    pub valid: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
    pub lm: Vec<TaggedSentence>,
}

/// Number of distinct sentences the grammar can produce.
pub fn grammar_size() -> usize {
    (0..FRAMES.len()).map(frame_capacity).sum()
}

/// Draw disjoint splits: a uniform frame, then uniform slot fillers, with
/// duplicates rejected.
pub fn gen_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    if spec.n_train == 0 || spec.n_valid == 0 || spec.n_test == 0 {
        return Err(Error::Input("every split needs at least one sentence".into()));
    }
    let total = spec.n_train + spec.n_valid + spec.n_test + spec.n_lm;
    // Rejection sampling stays fast while at most half the grammar is used.
    if 2 * total > grammar_size() {
        return Err(Error::Input(format!(
            "requested {total} distinct sentences; the grammar supports at most {}",
            grammar_size() / 2
        )));
    }
    let mut rng = stream_rng(spec.seed, Stream::Corpus);
    let mut seen = HashSet::new();
    let mut all = Vec::with_capacity(total);
    while all.len() < total {
        let frame = rng.random_range(0..FRAMES.len());
        let c = Content {
            noun: rng.random_range(0..NOUNS.len()),
            object: rng.random_range(0..NOUNS.len()),
            prep: rng.random_range(0..PREPS.len()),
            place: rng.random_range(0..PLACES.len()),
            verb: rng.random_range(0..verb_choices(frame)),
        };
        let c = normalize(frame, c);
        let text = render(frame, &c);
        if seen.insert(text.clone()) {
            all.push(TaggedSentence {
                paraphrase: render(FRAMES[frame].pair, &c),
                tree: frame_tree(frame),
                frame,
                text,
            });
        }
    }
    all.shuffle(&mut rng);
    let lm = all.split_off(spec.n_train + spec.n_valid + spec.n_test);
    let test = all.split_off(spec.n_train + spec.n_valid);
    let valid = all.split_off(spec.n_train);
    Ok(SyntheticCorpus {
        train: all,
        valid,
        test,
        lm,
    })
}

/// Zero the fields a frame does not use so equal sentences have equal content.
fn normalize(frame: usize, c: Content) -> Content {
    let slots: Vec<Slot> = frame_slots(frame).collect();
    let has = |s: &[Slot]| slots.iter().any(|x| s.contains(x));
    Content {
        noun: c.noun,
        object: if has(&[Object]) { c.object } else { 0 },
        prep: if has(&[Prep]) { c.prep } else { 0 },
        place: if has(&[Place]) { c.place } else { 0 },
        verb: if has(&[Gerund, Present, Transitive, Participle]) { c.verb } else { 0 },
    }
}

/// Exact parse of a sentence the grammar can produce, or `None`.
pub fn parse(sentence: &str) -> Option<ParseTree> {
    let toks = tokenize(sentence);
    FRAMES.iter().enumerate().find_map(|(i, f)| {
        let ok = f.items.len() == toks.len()
            && f.items.iter().zip(&toks).all(|(item, tok)| match item {
                Item::Word(w) => w == tok,
                Item::Slot(s) => s.words().contains(tok),
            });
        ok.then(|| frame_tree(i))
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl SyntheticCorpus {
    /// Write `{train,valid,test}.{txt,trees}`, `lm.txt`, `paraphrase.tsv`
    /// (original, reference) and `transfer.tsv` (syntax source, content
    /// source) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            let mut text = String::new();
            let mut trees = String::new();
            for s in split {
                writeln!(text, "{}", s.text).unwrap();
                writeln!(trees, "{}", s.tree).unwrap();
            }
            write_file(&dir.join(format!("{name}.txt")), &text)?;
            write_file(&dir.join(format!("{name}.trees")), &trees)?;
        }
        let lm: String = self.lm.iter().map(|s| format!("{}\n", s.text)).collect();
        write_file(&dir.join("lm.txt"), &lm)?;
        let para: String = self.test.iter().map(|s| format!("{}\t{}\n", s.text, s.paraphrase)).collect();
        write_file(&dir.join("paraphrase.tsv"), &para)?;
        let transfer: String = self
            .transfer_pairs()
            .iter()
            .map(|(a, b)| format!("{a}\t{b}\n"))
            .collect();
        write_file(&dir.join("transfer.tsv"), &transfer)
    }

    /// Test sentences paired with the next test sentence from a frame with a
    /// different tree: (syntax source, content source).
    pub fn transfer_pairs(&self) -> Vec<(String, String)> {
        let n = self.test.len();
        (0..n)
            .filter_map(|i| {
                (1..n).map(|k| &self.test[(i + k) % n]).find(|o| o.tree != self.test[i].tree).map(|o| (self.test[i].text.clone(), o.text.clone()))
            })
            .collect()
    }
}

/// Read a UTF-8 file as lines, dropping a trailing empty line.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Parse a tree line for `sentence`. Trees that still carry the sentence's
/// words as terminals are reduced to their preterminal skeleton.
pub fn tree_for(sentence: &str, line: &str) -> Result<ParseTree> {
    let tree = parse_bracketed(line)?;
    let words = tokenize(sentence);
    let leaves = leaf_labels(&tree);
    if leaves.len() == words.len() && leaves.iter().zip(&words).all(|(a, b)| a == b) && tree.num_nodes() > leaves.len() {
        Ok(tree.collapse_preterminals())
    } else {
        Ok(tree)
    }
}

fn leaf_labels(tree: &ParseTree) -> Vec<&str> {
    if tree.is_leaf() {
        return vec![tree.label()];
    }
    tree.children().iter().flat_map(leaf_labels).collect()
}

/// Sentences with trees from line-aligned files; without a tree file every
/// sentence gets the right-branching fallback.
pub fn load_parallel(sentences: &Path, trees: Option<&Path>) -> Result<Vec<(String, ParseTree)>> {
    let lines: Vec<String> = read_lines(sentences)?.into_iter().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(Error::Input(format!("{} holds no sentences", sentences.display())));
    }
    match trees {
        Some(tp) => {
            let tree_lines: Vec<String> = read_lines(tp)?.into_iter().filter(|l| !l.trim().is_empty()).collect();
            if tree_lines.len() != lines.len() {
                return Err(Error::Input(format!(
                    "{} has {} sentences but {} has {} trees",
                    sentences.display(),
                    lines.len(),
                    tp.display(),
                    tree_lines.len()
                )));
            }
            lines
                .into_iter()
                .zip(tree_lines)
                .enumerate()
                .map(|(i, (s, t))| {
                    let tree = tree_for(&s, &t).map_err(|e| Error::Input(format!("{} line {}: {e}", tp.display(), i + 1)))?;
                    Ok((s, tree))
                })
                .collect()
        }
        None => lines
            .into_iter()
            .map(|s| {
                let tree = right_branching_tree(tokenize(&s).len())?;
                Ok((s, tree))
            })
            .collect(),
    }
}

/// Encode sentences and trees into training examples.
pub fn build_examples(data: &[(String, ParseTree)], vocab: &Vocabulary, syntax_vocab: &SyntaxVocab) -> Result<Vec<Example>> {
    data.iter()
        .map(|(s, t)| Example::new(vocab.encode(s)?, &linearize(t), vocab, syntax_vocab))
        .collect()
}

/// Vocabularies built from training data.
pub fn build_vocabs(train: &[(String, ParseTree)], max_vocab: usize) -> Result<(Vocabulary, SyntaxVocab)> {
    let vocab = Vocabulary::build(train.iter().map(|(s, _)| s.as_str()), max_vocab)?;
    let lins: Vec<_> = train.iter().map(|(_, t)| linearize(t)).collect();
    Ok((vocab, SyntaxVocab::build(lins.iter())))
}

impl TaggedSentence {
    pub fn pair(&self) -> (String, ParseTree) {
        (self.text.clone(), self.tree.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::delinearize;

    fn spec(seed: u64) -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            n_train: 200,
            n_valid: 30,
            n_test: 30,
            n_lm: 100,
            seed,
        }
    }

    #[test]
    fn frame_trees_match_sentence_lengths() {
        for (i, f) in FRAMES.iter().enumerate() {
            assert_eq!(frame_tree(i).num_leaves(), f.items.len(), "frame {i}");
            assert_eq!(FRAMES[f.pair].pair, i);
        }
    }

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let a = gen_corpus(&spec(3)).unwrap();
        let b = gen_corpus(&spec(3)).unwrap();
        assert_eq!(a, b);
        let mut seen = HashSet::new();
        for s in a.train.iter().chain(&a.valid).chain(&a.test).chain(&a.lm) {
            assert!(seen.insert(s.text.clone()));
            assert_eq!(delinearize(linearize(&s.tree).symbols()).unwrap(), s.tree);
            assert_eq!(parse(&s.text).as_ref(), Some(&s.tree));
        }
        assert_ne!(a, gen_corpus(&spec(4)).unwrap());
    }

    #[test]
    fn oversized_request_is_input_error() {
        let s = SyntheticCorpusSpec {
            n_train: grammar_size(),
            n_valid: 1,
            n_test: 1,
            n_lm: 0,
            seed: 0,
        };
        assert!(matches!(gen_corpus(&s), Err(Error::Input(_))));
    }

    #[test]
    fn paraphrases_share_content() {
        let c = gen_corpus(&spec(1)).unwrap();
        for s in &c.test {
            let a: HashSet<&str> = tokenize(&s.text).into_iter().collect();
            let b: HashSet<&str> = tokenize(&s.paraphrase).into_iter().collect();
            assert!(a.intersection(&b).count() >= 2, "{} / {}", s.text, s.paraphrase);
            assert!(parse(&s.paraphrase).is_some());
        }
    }

    #[test]
    fn word_level_trees_collapse() {
        let t = tree_for("the cat", "(NP (DT the) (NN cat))").unwrap();
        assert_eq!(t.to_string(), "(NP DT NN)");
        let t = tree_for("the cat", "(NP DT NN)").unwrap();
        assert_eq!(t.to_string(), "(NP DT NN)");
    }
}
