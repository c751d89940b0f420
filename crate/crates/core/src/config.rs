//! Run configuration files.
//!
//! A config is a strict JSON object: unknown keys anywhere are rejected.
//! `preset` selects the loss weights, batch size and GRU dropout of one of
//! the two reference settings; every other section may override them.
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::metrics::LmConfig;
use crate::model::{LossWeights, ModelDims};
use crate::trainer::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ptb,
    Quora,
}

impl Preset {
    pub fn weights(self) -> LossWeights {
        match self {
            Preset::Ptb => LossWeights::ptb(),
            Preset::Quora => LossWeights::quora(),
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Preset::Ptb => 32,
            Preset::Quora => 50,
        }
    }

    pub fn gru_dropout(self) -> f64 {
        match self {
            Preset::Ptb => 0.1,
            Preset::Quora => 0.3,
        }
    }
}

/// Line-aligned sentence and tree files. Tree files are optional; without
/// one, sentences get right-branching trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    #[serde(default)]
    pub train_trees: Option<PathBuf>,
    pub valid: PathBuf,
    #[serde(default)]
    pub valid_trees: Option<PathBuf>,
    pub test: PathBuf,
    #[serde(default)]
    pub test_trees: Option<PathBuf>,
    /// Corpus for the evaluation language model; must not overlap `train`.
    #[serde(default)]
    pub lm: Option<PathBuf>,
    /// Tab-separated (input, reference paraphrase) pairs.
    #[serde(default)]
    pub paraphrase: Option<PathBuf>,
    /// Tab-separated (syntax source, content source) pairs.
    #[serde(default)]
    pub transfer: Option<PathBuf>,
}

impl DataPaths {
    fn all_mut(&mut self) -> Vec<(&'static str, &mut PathBuf)> {
        let mut v: Vec<(&'static str, &mut PathBuf)> = vec![("train", &mut self.train), ("valid", &mut self.valid), ("test", &mut self.test)];
        let optional = [
            ("train_trees", &mut self.train_trees),
            ("valid_trees", &mut self.valid_trees),
            ("test_trees", &mut self.test_trees),
            ("lm", &mut self.lm),
            ("paraphrase", &mut self.paraphrase),
            ("transfer", &mut self.transfer),
        ];
        for (name, p) in optional {
            if let Some(p) = p.as_mut() {
                v.push((name, p));
            }
        }
        v
    }
}

/// Layer sizes; vocabulary sizes come from the training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "ModelConfig::default_embed")]
    pub embed_dim: usize,
    #[serde(default = "ModelConfig::default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "ModelConfig::default_latent")]
    pub latent_dim: usize,
    /// Defaults to `2 · latent_dim`, the width of `[z_sem; z_syn]`.
    #[serde(default)]
    pub decoder_dim: Option<usize>,
    #[serde(default = "ModelConfig::default_max_vocab")]
    pub max_vocab: usize,
    /// Weights start uniform in `[-init_scale, init_scale]`.
    #[serde(default = "ModelConfig::default_init_scale")]
    pub init_scale: f64,
}

impl ModelConfig {
    fn default_embed() -> usize {
        300
    }
    fn default_hidden() -> usize {
        200
    }
    fn default_latent() -> usize {
        100
    }
    fn default_max_vocab() -> usize {
        20_000
    }
    fn default_init_scale() -> f64 {
        crate::model::DEFAULT_INIT_SCALE
    }

    pub fn dims(&self, vocab_size: usize, syntax_vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            syntax_vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            decoder_dim: self.decoder_dim.unwrap_or(2 * self.latent_dim),
        }
    }

    fn validate(&self) -> Result<()> {
        let named = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("decoder_dim", self.decoder_dim.unwrap_or(1)),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "model.hidden_dim must be even to split into two spaces, got {}",
                self.hidden_dim
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config(format!("model.init_scale must be positive, got {}", self.init_scale)));
        }
        if self.max_vocab < 5 {
            return Err(Error::Config("model.max_vocab must be at least 5".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: Self::default_embed(),
            hidden_dim: Self::default_hidden(),
            latent_dim: Self::default_latent(),
            decoder_dim: None,
            max_vocab: Self::default_max_vocab(),
            init_scale: Self::default_init_scale(),
        }
    }
}

/// Optimisation overrides; absent fields take the preset or the defaults of
/// [`TrainConfig`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub gru_dropout: Option<f64>,
    pub word_dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub clip_norm: Option<f64>,
    pub max_steps: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub log_every: Option<u64>,
    pub anneal_midpoint: Option<u64>,
    pub anneal_steepness: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub lm: LmConfig,
    /// Prior samples for forward and reverse perplexity.
    #[serde(default = "EvalConfig::default_samples")]
    pub n_samples: usize,
    #[serde(default = "EvalConfig::default_max_len")]
    pub max_len: usize,
    #[serde(default = "EvalConfig::default_temperature")]
    pub syn_temperature: f64,
}

impl EvalConfig {
    fn default_samples() -> usize {
        10_000
    }
    fn default_max_len() -> usize {
        40
    }
    fn default_temperature() -> f64 {
        1.0
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            n_samples: Self::default_samples(),
            max_len: Self::default_max_len(),
            syn_temperature: Self::default_temperature(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Preset,
    #[serde(default)]
    seed: u64,
    data: DataPaths,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default)]
    weights: Option<LossWeights>,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: EvalConfig,
}

/// A fully resolved and validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub data: DataPaths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Strict parse and validation without touching the file system.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("config is empty".into()));
        }
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.model.validate()?;
        let t = &raw.train;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            weights: raw.weights.unwrap_or_else(|| raw.preset.weights()),
            anneal_midpoint: t.anneal_midpoint.unwrap_or(defaults.anneal_midpoint),
            anneal_steepness: t.anneal_steepness.unwrap_or(defaults.anneal_steepness),
            adam: AdamConfig {
                learning_rate: t.learning_rate.unwrap_or(defaults.adam.learning_rate),
                beta1: t.beta1.unwrap_or(defaults.adam.beta1),
                beta2: t.beta2.unwrap_or(defaults.adam.beta2),
                ..defaults.adam
            },
            clip_norm: t.clip_norm.unwrap_or(defaults.clip_norm),
            batch_size: t.batch_size.unwrap_or(raw.preset.batch_size()),
            gru_dropout: t.gru_dropout.unwrap_or(raw.preset.gru_dropout()),
            word_dropout: t.word_dropout.unwrap_or(defaults.word_dropout),
            max_steps: t.max_steps.unwrap_or(defaults.max_steps),
            checkpoint_every: t.checkpoint_every.unwrap_or(defaults.checkpoint_every),
            log_every: t.log_every.unwrap_or(defaults.log_every),
            seed: raw.seed,
        };
        train.validate()?;
        raw.eval.lm.validate()?;
        if raw.eval.max_len == 0 || raw.eval.n_samples == 0 {
            return Err(Error::Config("eval.max_len and eval.n_samples must be positive".into()));
        }
        if !(raw.eval.syn_temperature >= 0.0) || !raw.eval.syn_temperature.is_finite() {
            return Err(Error::Config("eval.syn_temperature must be finite and >= 0".into()));
        }
        Ok(Self {
            preset: raw.preset,
            seed: raw.seed,
            data: raw.data,
            model: raw.model,
            train,
            eval: raw.eval,
        })
    }
}

/// Read, validate and resolve a config file. Every data path must exist.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for (name, p) in cfg.data.all_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if !p.exists() {
            return Err(Error::Config(format!("data.{name}: {} does not exist", p.display())));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"preset": "ptb", "data": {"train": "a", "valid": "b", "test": "c"}}"#;

    #[test]
    fn ptb_preset() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.train.weights, LossWeights::ptb());
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.gru_dropout, 0.1);
        assert_eq!(c.model.embed_dim, 300);
        assert_eq!(c.model.latent_dim, 100);
    }

    #[test]
    fn quora_preset() {
        let c = RunConfig::from_json(&MINIMAL.replace("ptb", "quora")).unwrap();
        assert_eq!(c.train.weights, LossWeights::quora());
        assert_eq!(c.train.batch_size, 50);
        assert_eq!(c.train.gru_dropout, 0.3);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace(r#""preset""#, r#""learnin_rate": 1, "preset""#);
        match RunConfig::from_json(&text) {
            Err(Error::Config(m)) => assert!(m.contains("learnin_rate"), "{m}"),
            other => panic!("{other:?}"),
        }
        let nested = MINIMAL.replace(r#""test": "c""#, r#""test": "c", "dev": "d""#);
        assert!(matches!(RunConfig::from_json(&nested), Err(Error::Config(m)) if m.contains("dev")));
    }

    #[test]
    fn rejections() {
        assert!(matches!(RunConfig::from_json(""), Err(Error::Config(_))));
        let odd = MINIMAL.replace(r#""preset""#, r#""model": {"hidden_dim": 7}, "preset""#);
        assert!(matches!(RunConfig::from_json(&odd), Err(Error::Config(_))));
        let mut w = serde_json::to_value(LossWeights::ptb()).unwrap();
        w["adv_sem"] = (-0.5).into();
        let neg = MINIMAL.replace(r#""preset""#, &format!(r#""weights": {w}, "preset""#));
        assert!(matches!(RunConfig::from_json(&neg), Err(Error::Config(_))));
        let bad_preset = MINIMAL.replace("ptb", "snli");
        assert!(matches!(RunConfig::from_json(&bad_preset), Err(Error::Config(_))));
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a", "b"] {
            fs::write(dir.path().join(f), "x\n").unwrap();
        }
        let path = dir.path().join("c.json");
        fs::write(&path, MINIMAL).unwrap();
        match load_config(&path) {
            Err(Error::Config(m)) => assert!(m.contains("data.test"), "{m}"),
            other => panic!("{other:?}"),
        }
        fs::write(dir.path().join("c"), "x\n").unwrap();
        let c = load_config(&path).unwrap();
        assert_eq!(c.data.train, dir.path().join("a"));
    }
}
