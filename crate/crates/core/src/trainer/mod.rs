//! Alternating adversary / VAE training with KL annealing, validation and
//! checkpointing.

mod checkpoint;
mod schedule;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, Manifest, ParamEntry, FORMAT_VERSION};
pub use schedule::{kl_weight, AnnealSchedule};

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{standard_normal, Adam, AdamConfig, ParamGroup, ParamId, Tensor};
use crate::error::{Error, Result};
use crate::model::{AdversaryLosses, Batch, DssVae, Example, Forward, LossTerms, LossWeights, Noise};
use crate::seed::{stream_rng, Stream};
use crate::text::{SyntaxVocab, Vocabulary};

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub anneal_midpoint: u64,
    pub anneal_steepness: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub gru_dropout: f64,
    pub word_dropout: f64,
    pub max_steps: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::ptb(),
            anneal_midpoint: 2000,
            anneal_steepness: 1.0 / 200.0,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            batch_size: 32,
            gru_dropout: 0.1,
            word_dropout: 0.5,
            max_steps: 10_000,
            checkpoint_every: 500,
            log_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let probs = [("gru_dropout", self.gru_dropout), ("word_dropout", self.word_dropout)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.gru_dropout >= 1.0 {
            return Err(Error::Config("gru_dropout must be below 1".into()));
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size, checkpoint_every and log_every must be positive".into()));
        }
        if !(self.anneal_steepness > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("anneal_steepness and clip_norm must be positive".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam settings".into()));
        }
        Ok(())
    }

    pub fn kl_schedules(&self) -> [AnnealSchedule; 2] {
        [
            AnnealSchedule::new(self.weights.kl_sem, self.anneal_midpoint, self.anneal_steepness),
            AnnealSchedule::new(self.weights.kl_syn, self.anneal_midpoint, self.anneal_steepness),
        ]
    }
}

/// Progress counters. Random streams and optimizer moments live in the
/// [`Trainer`] next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    pub seed: u64,
    /// Lowest validation negated ELBO saved so far (`inf` before the first save).
    pub best_validation_elbo: f64,
}

/// Everything measured during one [`Trainer::train_step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: u64,
    pub total: f64,
    pub terms: LossTerms,
    pub adversary: AdversaryLosses,
    pub kl_weight_sem: f64,
    pub kl_weight_syn: f64,
    pub grad_norm_main: f64,
    pub grad_norm_adversary: f64,
}

/// Result of a validation pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub step: u64,
    pub elbo: f64,
    pub saved: bool,
}

/// Where and with which vocabularies checkpoints are written.
#[derive(Clone, Debug)]
pub struct CheckpointTarget {
    pub dir: PathBuf,
    pub vocab: Vocabulary,
    pub syntax_vocab: SyntaxVocab,
}

pub struct Trainer {
    model: DssVae,
    config: TrainConfig,
    state: TrainState,
    main_opt: Adam,
    adv_opt: Adam,
    main_ids: Vec<ParamId>,
    adv_ids: Vec<ParamId>,
    dropout_rng: ChaCha8Rng,
    sampling_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(model: DssVae, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let main_ids = model.store().ids_in(ParamGroup::Main);
        let adv_ids = model.store().ids_in(ParamGroup::Adversary);
        let clip = Some(config.clip_norm);
        let main_opt = Adam::new(model.store(), main_ids.clone(), config.adam, clip);
        let adv_opt = Adam::new(model.store(), adv_ids.clone(), config.adam, clip);
        let seed = config.seed;
        Ok(Self {
            model,
            state: TrainState {
                step: 0,
                epoch: 0,
                seed,
                best_validation_elbo: f64::INFINITY,
            },
            config,
            main_opt,
            adv_opt,
            main_ids,
            adv_ids,
            dropout_rng: stream_rng(seed, Stream::Dropout),
            sampling_rng: stream_rng(seed, Stream::Sampling),
            shuffle_rng: stream_rng(seed, Stream::Shuffle),
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn model(&self) -> &DssVae {
        &self.model
    }

    pub fn into_model(self) -> DssVae {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn main_optimizer(&self) -> &Adam {
        &self.main_opt
    }

    pub fn adversary_optimizer(&self) -> &Adam {
        &self.adv_opt
    }

    /// Annealed KL coefficients at the current step.
    pub fn kl_weights(&self) -> [f64; 2] {
        let [s, y] = self.config.kl_schedules();
        [s.weight(self.state.step), y.weight(self.state.step)]
    }

    /// Fresh standard-normal noise for both spaces.
    pub fn sample_noise(&mut self, batch_len: usize) -> [Tensor; 2] {
        let shape = [batch_len, self.model.dims().latent_dim];
        [
            standard_normal(&shape, &mut self.sampling_rng),
            standard_normal(&shape, &mut self.sampling_rng),
        ]
    }

    fn apply(&mut self, fwd: Forward, group: ParamGroup) -> Result<f64> {
        let mut grads = fwd.graph.backward(fwd.loss)?;
        let (opt, ids) = match group {
            ParamGroup::Main => (&mut self.main_opt, &self.main_ids),
            ParamGroup::Adversary => (&mut self.adv_opt, &self.adv_ids),
        };
        let g = fwd.bound.collect_grads(self.model.store(), &mut grads, ids);
        let norm = opt.step(self.model.store_mut(), g)?;
        self.model.store_mut().snap_to_f32(ids);
        Ok(norm)
    }

    /// Phase A: train the four adversaries on detached latents.
    pub fn phase_a(&mut self, batch: &Batch, eps: &[Tensor; 2]) -> Result<(AdversaryLosses, f64)> {
        let fwd = self.model.adversary_forward(batch, eps)?;
        let adv = fwd.adversary;
        let named = [("adversary.bow", adv.bow), ("adversary.syntax", adv.syntax), ("adversary.rec_sem", adv.rec_sem), ("adversary.rec_syn", adv.rec_syn)];
        if let Some((name, v)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("{name} is {v} at step {}", self.state.step)));
        }
        let norm = self.apply(fwd, ParamGroup::Adversary)?;
        Ok((adv, norm))
    }

    /// Phase B: update the main network on the full objective with frozen
    /// adversaries.
    pub fn phase_b(&mut self, batch: &Batch, eps: &[Tensor; 2]) -> Result<(LossTerms, f64, f64)> {
        let kl = self.kl_weights();
        let mut noise = Noise {
            gru_dropout: self.config.gru_dropout,
            word_dropout: self.config.word_dropout,
            rng: &mut self.dropout_rng,
        };
        let fwd = self.model.main_forward(batch, eps, &self.config.weights, kl, Some(&mut noise))?;
        let terms = fwd.terms;
        if let Some(name) = terms.first_non_finite() {
            return Err(Error::Numeric(format!("loss term {name} is not finite at step {}", self.state.step)));
        }
        let total = fwd.graph.value(fwd.loss).item();
        if !total.is_finite() {
            return Err(Error::Numeric(format!("total loss is {total} at step {}", self.state.step)));
        }
        let norm = self.apply(fwd, ParamGroup::Main)?;
        Ok((terms, total, norm))
    }

    /// One adversary update followed by one main update on the same batch
    /// and the same latent noise.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepReport> {
        let eps = self.sample_noise(batch.len());
        let kl = self.kl_weights();
        let (adversary, grad_norm_adversary) = self.phase_a(batch, &eps)?;
        let (terms, total, grad_norm_main) = self.phase_b(batch, &eps)?;
        self.state.step += 1;
        Ok(StepReport {
            step: self.state.step,
            epoch: self.state.epoch,
            total,
            terms,
            adversary,
            kl_weight_sem: kl[0],
            kl_weight_syn: kl[1],
            grad_norm_main,
            grad_norm_adversary,
        })
    }

    /// Next batch of a shuffled pass over `data`; a new permutation is drawn
    /// at the start of each epoch.
    pub fn next_batch<'a>(&mut self, data: &'a [Example]) -> Result<Batch<'a>> {
        if data.is_empty() {
            return Err(Error::Input("empty training set".into()));
        }
        if self.order.len() != data.len() || self.cursor >= self.order.len() {
            if self.order.len() == data.len() {
                self.state.epoch += 1;
            }
            self.order = (0..data.len()).collect();
            self.order.shuffle(&mut self.shuffle_rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].iter().map(|&i| &data[i]).collect();
        self.cursor = end;
        Batch::new(batch)
    }

    /// Mean negated ELBO per validation sentence at posterior means.
    pub fn validation_elbo(&self, valid: &[Example]) -> Result<f64> {
        if valid.is_empty() {
            return Err(Error::Input("empty validation set".into()));
        }
        let mut total = 0.0;
        for chunk in valid.chunks(self.config.batch_size) {
            total += self.model.negative_elbo_sum(&Batch::new(chunk.iter().collect())?)?;
        }
        Ok(total / valid.len() as f64)
    }

    /// Compute the validation ELBO and save a checkpoint if it improved.
    pub fn validate_and_checkpoint(&mut self, valid: &[Example], target: Option<&CheckpointTarget>) -> Result<Validation> {
        let elbo = self.validation_elbo(valid)?;
        if !elbo.is_finite() {
            return Err(Error::Numeric(format!("validation ELBO is {elbo}")));
        }
        let better = elbo < self.state.best_validation_elbo;
        if better {
            if let Some(t) = target {
                save_checkpoint(&t.dir, &self.model, &t.vocab, &t.syntax_vocab, &self.config.weights, self.state.step, elbo)?;
            }
            self.state.best_validation_elbo = elbo;
        }
        Ok(Validation {
            step: self.state.step,
            elbo,
            saved: better,
        })
    }

    /// Train until `max_steps` or until `stop` returns true. Every
    /// `checkpoint_every` steps, and after the final step, the validation
    /// ELBO is computed and the best model saved. Step reports and
    /// validation results are written to `log` as JSON lines.
    pub fn fit(
        &mut self,
        train: &[Example],
        valid: &[Example],
        target: Option<&CheckpointTarget>,
        log: &mut dyn Write,
        mut stop: impl FnMut(&Self, &StepReport) -> Result<bool>,
    ) -> Result<Option<StepReport>> {
        let mut last = None;
        let mut validated_at = None;
        while self.state.step < self.config.max_steps {
            let batch = self.next_batch(train)?;
            let report = self.train_step(&batch)?;
            if report.step % self.config.log_every == 0 {
                write_json_line(log, "step", &report)?;
            }
            if report.step % self.config.checkpoint_every == 0 {
                self.validate_logged(valid, target, log)?;
                validated_at = Some(report.step);
            }
            let done = stop(self, &report)?;
            last = Some(report);
            if done {
                break;
            }
        }
        if !valid.is_empty() && validated_at != Some(self.state.step) {
            self.validate_logged(valid, target, log)?;
        }
        Ok(last)
    }

    fn validate_logged(&mut self, valid: &[Example], target: Option<&CheckpointTarget>, log: &mut dyn Write) -> Result<()> {
        if valid.is_empty() {
            return Ok(());
        }
        match self.validate_and_checkpoint(valid, target) {
            Ok(v) => write_json_line(log, "validation", &v),
            Err(e) if e.is_retryable() => {
                let msg = serde_json::json!({ "step": self.state.step, "error": e.to_string() });
                write_json_line(log, "checkpoint_error", &msg)
            }
            Err(e) => Err(e),
        }
    }
}

/// Write `{"event": event, ...fields}` followed by a newline.
pub fn write_json_line<T: Serialize>(out: &mut dyn Write, event: &str, value: &T) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("event".into(), event.into());
    match serde_json::to_value(value)? {
        serde_json::Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("value".into(), other);
        }
    }
    let line = serde_json::to_string(&serde_json::Value::Object(obj))?;
    writeln!(out, "{line}").map_err(|e| Error::io("<log>", e))
}
