//! Tree edit distance between the parses of a few sentences.

use dssvae::metrics::tree_edit_distance;
use dssvae::text::parse_bracketed;

fn main() -> dssvae::error::Result<()> {
    let trees = [
        ("the cat is in the park", "(S (NP DT NN) (VP VBZ (PP IN (NP DT NN))))"),
        ("there is a cat in the park", "(S (NP EX) (VP VBZ (NP (NP DT NN) (PP IN (NP DT NN)))))"),
        ("is a cat in the park ?", "(SQ VBZ (NP (NP DT NN) (PP IN (NP DT NN))) .)"),
        ("the dog sees the cat", "(S (NP DT NN) (VP VBZ (NP DT NN)))"),
    ];
    let parsed: Vec<_> = trees.iter().map(|(_, t)| parse_bracketed(t)).collect::<Result<_, _>>()?;
    for (i, (a, _)) in trees.iter().enumerate() {
        for (j, (b, _)) in trees.iter().enumerate().skip(i + 1) {
            println!("{:>2}  {a:<28} | {b}", tree_edit_distance(&parsed[i], &parsed[j]));
        }
    }
    Ok(())
}
