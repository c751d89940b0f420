//! Paraphrase by keeping the semantic mean and resampling the syntactic
//! latent, at a few temperatures.
//!
//!     cargo run --release --example train_toy
//!     cargo run --release --example paraphrase [CHECKPOINT]

use std::path::{Path, PathBuf};

use dssvae::pipeline::{open_checkpoint, Generator};
use dssvae::seed::{stream_rng, Stream};

fn main() -> dssvae::error::Result<()> {
    let default = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/toy-run");
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or(default);
    let ckpt = open_checkpoint(&path)?;
    let gen = Generator::from_checkpoint(&ckpt, 30);
    let mut rng = stream_rng(0, Stream::Sampling);

    for s in ["the cat is in the park", "a farmer waits near the river", "the boy chases the dog"] {
        println!("{s}");
        for t in [0.0, 0.5, 1.0, 2.0] {
            for _ in 0..if t == 0.0 { 1 } else { 3 } {
                println!("  t={t:<4} {}", gen.paraphrase(s, t, &mut rng)?);
            }
        }
    }
    Ok(())
}
