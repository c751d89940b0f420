//! Decode the syntactic latent of one sentence with the semantic latent of
//! another, and measure how far the output's tree is from each source.
//!
//!     cargo run --release --example train_toy
//!     cargo run --release --example syntax_transfer [CHECKPOINT]

use std::path::{Path, PathBuf};

use dssvae::metrics::tree_edit_distance;
use dssvae::pipeline::{open_checkpoint, tree_or_fallback, Generator};

fn main() -> dssvae::error::Result<()> {
    let default = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/toy-run");
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or(default);
    let ckpt = open_checkpoint(&path)?;
    let gen = Generator::from_checkpoint(&ckpt, 30);

    let pairs = [
        ("there is a horse in the field", "a girl sleeps under the house"),
        ("is a dog near the street ?", "the teacher is sitting in the kitchen"),
        ("the man is followed by the cat", "the bird is above the sky"),
    ];
    for (syn, sem) in pairs {
        let out = gen.transfer(syn, sem)?;
        let t = tree_or_fallback(&out).0;
        println!("syntax  {syn}\ncontent {sem}\noutput  {out}");
        println!(
            "TED to syntax source {}, to content source {}\n",
            tree_edit_distance(&t, &tree_or_fallback(syn).0),
            tree_edit_distance(&t, &tree_or_fallback(sem).0)
        );
    }
    Ok(())
}
