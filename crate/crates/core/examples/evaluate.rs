//! The three evaluation runs of the command-line tool on a trained toy
//! model: generation, paraphrase and syntax transfer.
//!
//!     cargo run --release --example train_toy
//!     cargo run --release --example evaluate [CHECKPOINT]

use std::path::{Path, PathBuf};

use dssvae::config::load_config;
use dssvae::pipeline;

fn main() -> dssvae::error::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("target/toy-run"));
    let cfg = load_config(&root.join("configs/toy.json"))?;
    let ckpt = pipeline::open_checkpoint_for(&cfg, &path)?;

    let g = pipeline::eval_generation(&cfg, &ckpt)?;
    println!("reconstruction BLEU {:.2}", g.reconstruction_bleu);
    println!("forward PPL {:.2}   reverse PPL {:.2}   ({} samples)", g.forward_ppl, g.reverse_ppl, g.n_samples);

    let p = pipeline::eval_paraphrase(&cfg, &ckpt)?;
    println!(
        "paraphrase BLEU-ori {:.2}  BLEU-ref {:.2}  admissible {}",
        p.scores.bleu_ori, p.scores.bleu_ref, p.scores.admissible
    );

    let t = pipeline::eval_transfer(&cfg, &ckpt)?;
    let r = &t.report;
    println!("transfer word BLEU vs content {:.2}, vs syntax {:.2}", r.word_bleu_vs_ref_sem, r.word_bleu_vs_ref_syn);
    println!("transfer TED vs content {:.2}, vs syntax {:.2}", r.ted_vs_ref_sem, r.ted_vs_ref_syn);
    println!("{} pairs, {} outputs outside the grammar", t.n, t.unparsed_outputs);
    Ok(())
}
