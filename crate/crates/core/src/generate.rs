//! Inference procedures over a trained model: reconstruction, prior
//! sampling, paraphrasing and syntax transfer.
//!
//! Every procedure ends in the same greedy decoder, and every "mean" latent
//! comes from the same single-sentence encoder call, so the limiting cases
//! (paraphrase at temperature 0, transfer of a sentence onto itself) agree
//! with reconstruction bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::standard_normal;
use crate::error::{Error, Result};
use crate::model::{DssVae, LatentPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reconstruct,
    Sample,
    Paraphrase,
    Transfer,
}

impl Mode {
    /// Number of input sentences a request of this mode carries.
    pub fn arity(self) -> usize {
        match self {
            Mode::Sample => 0,
            Mode::Reconstruct | Mode::Paraphrase => 1,
            Mode::Transfer => 2,
        }
    }
}

/// One generation call. For `Transfer` the inputs are ordered
/// `(syntax source, content source)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub mode: Mode,
    pub inputs: Vec<Vec<usize>>,
    pub max_len: usize,
    pub seed: u64,
    pub syn_temperature: f64,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.mode.arity() {
            return Err(Error::Input(format!(
                "{:?} takes {} input sentence(s), got {}",
                self.mode,
                self.mode.arity(),
                self.inputs.len()
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Input("max_len must be at least 1".into()));
        }
        check_temperature(self.syn_temperature)
    }

    /// Run the request. `rng` feeds prior samples and paraphrase noise.
    pub fn run<R: Rng + ?Sized>(&self, model: &DssVae, rng: &mut R) -> Result<Vec<usize>> {
        self.validate()?;
        match self.mode {
            Mode::Reconstruct => reconstruct(model, &self.inputs[0], self.max_len),
            Mode::Sample => Ok(sample_prior(model, 1, self.max_len, rng)?.remove(0)),
            Mode::Paraphrase => paraphrase(model, &self.inputs[0], self.max_len, self.syn_temperature, rng),
            Mode::Transfer => syntax_transfer(model, &self.inputs[0], &self.inputs[1], self.max_len),
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Input(format!("syn_temperature must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Posterior means of one sentence.
pub fn posterior_mean(model: &DssVae, x: &[usize]) -> Result<LatentPair> {
    let (sem, syn) = model.encode(x)?;
    Ok(LatentPair::means(&sem, &syn))
}

fn decode_one(model: &DssVae, z: LatentPair, max_len: usize) -> Result<Vec<usize>> {
    Ok(model.decode_greedy(&[z], max_len)?.remove(0))
}

/// Greedy decode from both posterior means.
pub fn reconstruct(model: &DssVae, x: &[usize], max_len: usize) -> Result<Vec<usize>> {
    decode_one(model, posterior_mean(model, x)?, max_len)
}

/// `n` independent latent pairs from the standard normal prior.
pub fn prior_latents<R: Rng + ?Sized>(latent_dim: usize, n: usize, rng: &mut R) -> Vec<LatentPair> {
    (0..n)
        .map(|_| {
            let z_sem = standard_normal(&[latent_dim], rng).data().to_vec();
            let z_syn = standard_normal(&[latent_dim], rng).data().to_vec();
            LatentPair { z_sem, z_syn }
        })
        .collect()
}

/// Decode `n` prior samples.
pub fn sample_prior<R: Rng + ?Sized>(model: &DssVae, n: usize, max_len: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let z = prior_latents(model.dims().latent_dim, n, rng);
    model.decode_greedy(&z, max_len)
}

/// Keep the semantic mean, draw the syntactic latent from its posterior with
/// the standard deviation scaled by `syn_temperature`, and decode. At
/// temperature 0 no noise is drawn.
pub fn paraphrase<R: Rng + ?Sized>(
    model: &DssVae,
    x: &[usize],
    max_len: usize,
    syn_temperature: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_temperature(syn_temperature)?;
    let (sem, syn) = model.encode(x)?;
    let mut z = LatentPair::means(&sem, &syn);
    if syn_temperature > 0.0 {
        let eps = standard_normal(&[syn.mu.len()], rng);
        for ((z, s), e) in z.z_syn.iter_mut().zip(syn.sigma()).zip(eps.data()) {
            *z += syn_temperature * s * e;
        }
    }
    decode_one(model, z, max_len)
}

/// Syntax from `ref_syn`, content from `ref_sem`.
pub fn syntax_transfer(model: &DssVae, ref_syn: &[usize], ref_sem: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let syn = posterior_mean(model, ref_syn)?;
    let sem = posterior_mean(model, ref_sem)?;
    decode_one(
        model,
        LatentPair {
            z_sem: sem.z_sem,
            z_syn: syn.z_syn,
        },
        max_len,
    )
}
