use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dssvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dssvae")).args(args).output().unwrap()
}

fn json_lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
        .collect()
}

fn write_config(dir: &Path, data: &Path, extra_train: &str) -> String {
    let d = data.display();
    let text = format!(
        r#"{{
  "preset": "ptb",
  "seed": 3,
  "data": {{
    "train": "{d}/train.txt", "train_trees": "{d}/train.trees",
    "valid": "{d}/valid.txt", "valid_trees": "{d}/valid.trees",
    "test": "{d}/test.txt", "test_trees": "{d}/test.trees",
    "lm": "{d}/lm.txt", "paraphrase": "{d}/paraphrase.tsv", "transfer": "{d}/transfer.tsv"
  }},
  "model": {{ "embed_dim": 8, "hidden_dim": 12, "latent_dim": 4 }},
  "train": {{ "max_steps": 30, "checkpoint_every": 10, "log_every": 10 {extra_train} }},
  "eval": {{ "lm": {{ "embed_dim": 8, "hidden_dim": 8, "epochs": 1 }}, "n_samples": 100, "max_len": 12 }}
}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(dssvae(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(dssvae(&["train"]).status.code(), Some(1));
    assert_eq!(dssvae(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_passes() {
    let out = dssvae(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let lines = json_lines(&out);
    assert!(lines.len() > 20);
    assert!(lines.iter().all(|l| l["pass"] == true));
    assert!(lines.iter().any(|l| l["op"] == "objective"));
}

#[test]
fn bad_configs_are_rejected_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(dssvae(&["gen-corpus", "--out", data.to_str().unwrap(), "--n-train", "50", "--n-valid", "10", "--n-test", "10", "--n-lm", "10"]).status.success());

    let cfg = write_config(tmp.path(), &data, r#", "learning_rat": 0.1"#);
    let run = tmp.path().join("run");
    let out = dssvae(&["train", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
    assert!(!run.exists());

    let cfg = write_config(tmp.path(), &tmp.path().join("nowhere"), "");
    let out = dssvae(&["train", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.train"));
}

#[test]
fn full_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    assert!(dssvae(&["gen-corpus", "--out", d, "--n-train", "80", "--n-valid", "10", "--n-test", "10", "--n-lm", "40"]).status.success());
    let cfg = write_config(tmp.path(), &data, "");

    let mut artifacts = Vec::new();
    for name in ["a", "b"] {
        let run = tmp.path().join(name);
        let r = run.to_str().unwrap();
        let out = dssvae(&["train", "--config", &cfg, "--out", r]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let lines = json_lines(&out);
        assert_eq!(lines.last().unwrap()["event"], "done");
        assert_eq!(lines.last().unwrap()["steps"], 30);

        let mut bytes = Vec::new();
        let mut files: Vec<_> = fs::read_dir(run.join("checkpoint")).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files {
            bytes.push(fs::read(f).unwrap());
        }
        for cmd in ["eval-generation", "eval-paraphrase", "eval-transfer"] {
            let out = dssvae(&[cmd, "--config", &cfg, "--ckpt", r]);
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
            bytes.push(out.stdout);
        }
        // The final line names the run directory; everything before it must match.
        let log: Vec<String> = lines[..lines.len() - 1].iter().map(|l| l.to_string()).collect();
        artifacts.push((log, bytes));
    }
    assert_eq!(artifacts[0], artifacts[1]);

    let run = tmp.path().join("a");
    let r = run.to_str().unwrap();
    let input = format!("{d}/test.txt");
    let out = dssvae(&["reconstruct", "--ckpt", r, "--input", &input]);
    assert!(out.status.success());
    assert_eq!(json_lines(&out).len(), 10);
    let written = tmp.path().join("samples.txt");
    let out = dssvae(&["sample", "--ckpt", r, "--n", "4", "--output", written.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&written).unwrap().lines().count(), 4);
    let out = dssvae(&["paraphrase", "--ckpt", r, "--input", &input, "--temperature", "0"]);
    assert!(out.status.success());
    let out = dssvae(&["transfer", "--ckpt", &format!("{r}/checkpoint"), "--input", &format!("{d}/transfer.tsv")]);
    assert!(out.status.success());

    // Input errors: empty line, unusable checkpoint.
    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "the cat\n\nthe dog\n").unwrap();
    assert_eq!(dssvae(&["reconstruct", "--ckpt", r, "--input", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(dssvae(&["sample", "--ckpt", d, "--n", "2"]).status.code(), Some(1));
}
