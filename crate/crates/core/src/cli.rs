//! Command-line front end. Logs and results are JSON lines on stdout;
//! errors go to stderr. Exit codes: 0 success, 1 input or config error,
//! 2 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::autodiff::{run_op_suite, GradCheck, OP_TOLERANCE};
use crate::config::load_config;
use crate::corpus::{gen_corpus, read_lines, SyntheticCorpusSpec};
use crate::error::{Error, Result};
use crate::metrics::write_report;
use crate::model::{objective_grad_check, OBJECTIVE_TOLERANCE};
use crate::pipeline::{self, Generator};
use crate::seed::{stream_rng, Stream};
use crate::trainer::write_json_line;

#[derive(Parser, Debug)]
#[command(name = "dssvae", version, about = "Sentence VAE with separate syntactic and semantic latent spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the bundled synthetic corpus (sentences, trees, paraphrase and
    /// transfer pairs).
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_valid: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 2000)]
        n_lm: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a config file; the best checkpoint lands in OUT/checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode each input sentence from its posterior means.
    Reconstruct {
        #[command(flatten)]
        common: GenArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Decode sentences drawn from the prior.
    Sample {
        #[command(flatten)]
        common: GenArgs,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Keep each input's semantics and resample its syntax.
    Paraphrase {
        #[command(flatten)]
        common: GenArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Combine the syntax of the first sentence of each tab-separated line
    /// with the content of the second.
    Transfer {
        #[command(flatten)]
        common: GenArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Reconstruction BLEU, forward and reverse perplexity.
    EvalGeneration(EvalArgs),
    /// BLEU of paraphrases against inputs and references.
    EvalParaphrase(EvalArgs),
    /// Word BLEU and tree edit distance of transfers against both sources.
    EvalTransfer(EvalArgs),
    /// Finite-difference checks of every op and of the full objective.
    Gradcheck,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Checkpoint directory, or a training output directory holding one.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 40)]
    max_len: usize,
    /// Also write plain-text outputs here, one per line.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn input_lines(path: &Path) -> Result<Vec<String>> {
    let lines: Vec<String> = read_lines(path)?;
    if let Some(i) = lines.iter().position(|l| l.trim().is_empty()) {
        return Err(Error::Input(format!("{} line {}: empty sentence", path.display(), i + 1)));
    }
    if lines.is_empty() {
        return Err(Error::Input(format!("{} holds no sentences", path.display())));
    }
    Ok(lines)
}

fn write_plain(path: Option<&Path>, lines: &[String]) -> Result<()> {
    if let Some(p) = path {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenCorpus {
            out: dir,
            n_train,
            n_valid,
            n_test,
            n_lm,
            seed,
        } => {
            let spec = SyntheticCorpusSpec {
                n_train,
                n_valid,
                n_test,
                n_lm,
                seed,
            };
            let corpus = gen_corpus(&spec)?;
            corpus.write(&dir)?;
            write_json_line(out, "corpus", &json!({ "out": dir, "spec": spec }))?;
        }
        Command::Train { config, out: dir } => {
            let cfg = load_config(&config)?;
            let summary = pipeline::train(&cfg, &dir, out)?;
            write_json_line(
                out,
                "done",
                &json!({
                    "steps": summary.steps,
                    "best_validation_elbo": summary.best_validation_elbo,
                    "checkpoint": summary.checkpoint,
                }),
            )?;
        }
        Command::Reconstruct { common, input } => {
            let ckpt = pipeline::open_checkpoint(&common.ckpt)?;
            let gen = Generator::from_checkpoint(&ckpt, common.max_len);
            let mut outputs = Vec::new();
            for (i, line) in input_lines(&input)?.iter().enumerate() {
                let y = gen.reconstruct(line).map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))?;
                write_json_line(out, "reconstruct", &json!({ "index": i, "input": line, "output": y }))?;
                outputs.push(y);
            }
            write_plain(common.output.as_deref(), &outputs)?;
        }
        Command::Sample { common, n, seed } => {
            let ckpt = pipeline::open_checkpoint(&common.ckpt)?;
            let gen = Generator::from_checkpoint(&ckpt, common.max_len);
            let outputs = gen.sample(n, &mut stream_rng(seed, Stream::Sampling))?;
            for (i, y) in outputs.iter().enumerate() {
                write_json_line(out, "sample", &json!({ "index": i, "output": y }))?;
            }
            write_plain(common.output.as_deref(), &outputs)?;
        }
        Command::Paraphrase {
            common,
            input,
            temperature,
            seed,
        } => {
            let ckpt = pipeline::open_checkpoint(&common.ckpt)?;
            let gen = Generator::from_checkpoint(&ckpt, common.max_len);
            let mut rng = stream_rng(seed, Stream::Sampling);
            let mut outputs = Vec::new();
            for (i, line) in input_lines(&input)?.iter().enumerate() {
                let y = gen
                    .paraphrase(line, temperature, &mut rng)
                    .map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))?;
                write_json_line(out, "paraphrase", &json!({ "index": i, "input": line, "output": y }))?;
                outputs.push(y);
            }
            write_plain(common.output.as_deref(), &outputs)?;
        }
        Command::Transfer { common, input } => {
            let ckpt = pipeline::open_checkpoint(&common.ckpt)?;
            let gen = Generator::from_checkpoint(&ckpt, common.max_len);
            let mut outputs = Vec::new();
            for (i, (syn, sem)) in pipeline::read_pairs(&input)?.iter().enumerate() {
                let y = gen.transfer(syn, sem)?;
                write_json_line(
                    out,
                    "transfer",
                    &json!({ "index": i, "syntax_source": syn, "content_source": sem, "output": y }),
                )?;
                outputs.push(y);
            }
            write_plain(common.output.as_deref(), &outputs)?;
        }
        Command::EvalGeneration(a) => {
            let cfg = load_config(&a.config)?;
            let ckpt = pipeline::open_checkpoint_for(&cfg, &a.ckpt)?;
            let report = pipeline::eval_generation(&cfg, &ckpt)?;
            emit_report(out, "eval_generation", &report, a.out.as_deref())?;
        }
        Command::EvalParaphrase(a) => {
            let cfg = load_config(&a.config)?;
            let ckpt = pipeline::open_checkpoint_for(&cfg, &a.ckpt)?;
            let report = pipeline::eval_paraphrase(&cfg, &ckpt)?;
            emit_report(out, "eval_paraphrase", &report, a.out.as_deref())?;
        }
        Command::EvalTransfer(a) => {
            let cfg = load_config(&a.config)?;
            let ckpt = pipeline::open_checkpoint_for(&cfg, &a.ckpt)?;
            let report = pipeline::eval_transfer(&cfg, &ckpt)?;
            emit_report(out, "eval_transfer", &report, a.out.as_deref())?;
        }
        Command::Gradcheck => return gradcheck(out),
    }
    out.flush().map_err(io_err)?;
    Ok(0)
}

fn emit_report<T: serde::Serialize>(out: &mut dyn Write, event: &str, report: &T, path: Option<&Path>) -> Result<()> {
    write_json_line(out, event, report)?;
    if let Some(p) = path {
        write_report(p, report)?;
    }
    Ok(())
}

fn check_json(check: &GradCheck) -> serde_json::Value {
    match check {
        GradCheck::MaxRelativeError(e) => json!(e),
        GradCheck::NotCheckable => json!(null),
    }
}

fn gradcheck(out: &mut dyn Write) -> Result<i32> {
    let mut all = true;
    for (name, check) in run_op_suite()? {
        let pass = check.passes(OP_TOLERANCE);
        all &= pass;
        write_json_line(
            out,
            "gradcheck",
            &json!({ "op": name, "max_relative_error": check_json(&check), "tolerance": OP_TOLERANCE, "pass": pass }),
        )?;
    }
    let check = objective_grad_check(0, 12)?;
    let pass = check.passes(OBJECTIVE_TOLERANCE);
    all &= pass;
    write_json_line(
        out,
        "gradcheck",
        &json!({ "op": "objective", "max_relative_error": check_json(&check), "tolerance": OBJECTIVE_TOLERANCE, "pass": pass }),
    )?;
    out.flush().map_err(io_err)?;
    Ok(if all { 0 } else { 2 })
}
