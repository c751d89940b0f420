//! Train on the bundled synthetic corpus with `configs/toy.json`.
//!
//!     cargo run --release --example train_toy [OUT_DIR] [MAX_STEPS]
//!
//! The checkpoint lands in `OUT_DIR/checkpoint` (default `target/toy-run`),
//! where the `paraphrase`, `syntax_transfer` and `evaluate` examples look
//! for it.

use std::path::{Path, PathBuf};

use dssvae::config::load_config;
use dssvae::pipeline;

fn main() -> dssvae::error::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("target/toy-run"));
    let mut cfg = load_config(&root.join("configs/toy.json"))?;
    if let Some(steps) = args.next() {
        cfg.train.max_steps = steps.parse().expect("MAX_STEPS must be an integer");
    }

    let mut log = Vec::new();
    let summary = pipeline::train(&cfg, &out, &mut log)?;
    for line in String::from_utf8_lossy(&log).lines().filter(|l| l.contains("\"validation\"")) {
        println!("{line}");
    }
    println!(
        "{} steps, best validation -ELBO {:.3}, checkpoint {}",
        summary.steps,
        summary.best_validation_elbo,
        summary.checkpoint.display()
    );

    let ckpt = pipeline::open_checkpoint(&out)?;
    let gen = pipeline::Generator::from_checkpoint(&ckpt, cfg.eval.max_len);
    for s in ["the dog is sleeping in the garden", "is there a bird above the river ?"] {
        println!("{s:<36} -> {}", gen.reconstruct(s)?);
    }
    Ok(())
}
