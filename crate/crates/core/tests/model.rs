mod common;

use std::fs;

use dssvae::autodiff::ParamGroup;
use dssvae::error::Error;
use dssvae::generate::reconstruct;
use dssvae::model::{objective_grad_check, Batch, DssVae, LatentPair, LossWeights, OBJECTIVE_TOLERANCE};
use dssvae::seed::{stream_rng, Stream};
use dssvae::text::Vocabulary;
use dssvae::trainer::{load_checkpoint, load_checkpoint_for, save_checkpoint, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 500;

fn config(weights: LossWeights, seed: u64) -> TrainConfig {
    TrainConfig {
        weights,
        batch_size: 8,
        word_dropout: 0.0,
        gru_dropout: 0.0,
        max_steps: 1_000_000,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn objective_matches_finite_differences() {
    let check = objective_grad_check(11, 12).unwrap();
    assert!(check.passes(OBJECTIVE_TOLERANCE), "{check:?}");
}

#[test]
fn zero_parameters_give_standard_posterior() {
    let t = common::toy(8, 1, 0, 0);
    let m = DssVae::zeroed(t.dims(6, 8, 3)).unwrap();
    let (sem, syn) = m.encode(t.train[0].sentence.ids()).unwrap();
    for p in [sem, syn] {
        assert!(p.mu.iter().chain(&p.log_sigma).all(|&v| v == 0.0));
    }
}

#[test]
fn phases_touch_only_their_own_group() {
    let t = common::toy(32, 1, 0, 1);
    let model = DssVae::new(t.dims(8, 12, 4), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut tr = Trainer::new(model, config(LossWeights::ptb(), 3)).unwrap();
    for _ in 0..10 {
        let batch = tr.next_batch(&t.train).unwrap();
        let eps = tr.sample_noise(batch.len());
        let main = tr.model().store().fingerprint(ParamGroup::Main);
        let adv = tr.model().store().fingerprint(ParamGroup::Adversary);
        tr.phase_a(&batch, &eps).unwrap();
        assert_eq!(main, tr.model().store().fingerprint(ParamGroup::Main));
        assert_ne!(adv, tr.model().store().fingerprint(ParamGroup::Adversary));
        let adv = tr.model().store().fingerprint(ParamGroup::Adversary);
        tr.phase_b(&batch, &eps).unwrap();
        assert_eq!(adv, tr.model().store().fingerprint(ParamGroup::Adversary));
        assert_ne!(main, tr.model().store().fingerprint(ParamGroup::Main));
    }
}

#[test]
fn training_is_deterministic() {
    let t = common::toy(32, 1, 0, 1);
    let run = || {
        let model = DssVae::new(t.dims(8, 12, 4), &mut stream_rng(5, Stream::Init)).unwrap();
        let mut cfg = config(LossWeights::ptb(), 5);
        cfg.word_dropout = 0.3;
        cfg.gru_dropout = 0.2;
        let mut tr = Trainer::new(model, cfg).unwrap();
        let mut totals = Vec::new();
        for _ in 0..15 {
            let batch = tr.next_batch(&t.train).unwrap();
            totals.push(tr.train_step(&batch).unwrap().total.to_bits());
        }
        (totals, tr.model().store().fingerprint(ParamGroup::Main), tr.model().store().fingerprint(ParamGroup::Adversary))
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_round_trip() {
    let t = common::toy(16, 1, 0, 2);
    let m = DssVae::new(t.dims(8, 12, 4), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    save_checkpoint(&path, &m, &t.vocab, &t.syntax_vocab, &LossWeights::ptb(), 42, 1.5).unwrap();
    let c = load_checkpoint(&path).unwrap();
    assert_eq!(c.manifest.step, 42);
    assert_eq!(c.vocab, t.vocab);
    assert_eq!(c.model.param_tensors(), m.param_tensors());
    let x = t.train[3].sentence.ids();
    assert_eq!(reconstruct(&c.model, x, 12).unwrap(), reconstruct(&m, x, 12).unwrap());

    // Overwriting replaces the snapshot atomically.
    save_checkpoint(&path, &m, &t.vocab, &t.syntax_vocab, &LossWeights::ptb(), 43, 1.4).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().manifest.step, 43);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let t = common::toy(16, 1, 0, 2);
    let m = DssVae::new(t.dims(8, 12, 4), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let save = |name: &str| {
        let p = dir.path().join(name);
        save_checkpoint(&p, &m, &t.vocab, &t.syntax_vocab, &LossWeights::ptb(), 1, 1.0).unwrap();
        p
    };

    let p = save("truncated");
    let blob = fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|e| e == "bin")).unwrap();
    let bytes = fs::read(&blob).unwrap();
    fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Corruption(_))));

    let p = save("garbled");
    fs::write(p.join("manifest.json"), "{ not json").unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Corruption(_))));

    let p = save("future");
    let text = fs::read_to_string(p.join("manifest.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 99.into();
    fs::write(p.join("manifest.json"), v.to_string()).unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Incompatible(_))));

    let p = save("vocab");
    let other = Vocabulary::build(["a b c"], 100).unwrap();
    assert!(matches!(load_checkpoint_for(&p, &other), Err(Error::Incompatible(_))));
    assert!(load_checkpoint_for(&p, &t.vocab).is_ok());

    assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn autoencoder_overfits_small_corpus() {
    let t = common::toy(16, 1, 0, 4);
    let model = DssVae::with_init_scale(t.dims(16, 32, 8), 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut cfg = config(LossWeights::vae_only(0.0), 1);
    cfg.batch_size = 16;
    cfg.adam.learning_rate = 0.01;
    let mut tr = Trainer::new(model, cfg).unwrap();
    let batch = Batch::new(t.train.iter().collect()).unwrap();
    for _ in 0..STEPS {
        tr.train_step(&batch).unwrap();
    }
    let m = tr.model();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut nll = 0.0;
    let mut tokens = 0;
    let mut exact = 0;
    for e in &t.train {
        let x = e.sentence.ids();
        let (sem, syn) = m.encode(x).unwrap();
        nll += m.reconstruction_nll(&LatentPair::means(&sem, &syn), x, 0.0, &mut rng).unwrap();
        tokens += x.len() + 1;
        exact += usize::from(reconstruct(m, x, 20).unwrap() == x);
    }
    let per_token = nll / tokens as f64;
    assert!(per_token < 0.1, "NLL per token {per_token}");
    assert_eq!(exact, 16);
}
