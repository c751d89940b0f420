//! Bracketed trees, their linearized form, and the syntax vocabulary.

use dssvae::text::{delinearize, linearize, parse_bracketed, right_branching_tree, SyntaxVocab};

fn main() -> dssvae::error::Result<()> {
    let treebank = "(S (NP (DT the) (NN cat)) (VP (VBZ sits) (PP (IN on) (NP (DT the) (NN mat)))))";
    let tree = parse_bracketed(treebank)?.collapse_preterminals();
    println!("tree:        {tree}");

    let lin = linearize(&tree);
    let shown: Vec<String> = lin.symbols().iter().map(|s| s.to_string()).collect();
    println!("linearized:  {}", shown.join(" "));
    println!("length {} = 2 x {} internal + {} leaves", lin.len(), tree.num_internal(), tree.num_leaves());

    let vocab = SyntaxVocab::build([&lin]);
    println!("ids:         {:?}", vocab.encode(&lin));
    assert_eq!(delinearize(lin.symbols())?, tree);

    println!("fallback for 5 tokens: {}", right_branching_tree(5)?);

    match parse_bracketed("(S (NP DT NN)") {
        Err(e) => println!("malformed input: {e}"),
        Ok(t) => println!("unexpectedly parsed {t}"),
    }
    Ok(())
}
