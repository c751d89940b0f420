//! The two-space sentence VAE.
//!
//! A GRU encoder summarises a sentence into `r = [r_sem; r_syn]`; each half
//! feeds a Gaussian head producing `(μ, log σ)`. The reconstruction decoder
//! starts from `z = [z_sem; z_syn]`. Auxiliary predictors push semantics
//! (bag of words) into `z_sem` and syntax (linearized tree) into `z_syn`,
//! while adversaries penalise each space for carrying the other's content or
//! for reconstructing the sentence alone.

mod batch;
mod check;
mod network;

pub use batch::{Batch, Example};
pub use check::{objective_grad_check, MINI_DIMS, OBJECTIVE_TOLERANCE};
pub use network::{
    AdversaryLosses, DssVae, DEFAULT_INIT_SCALE, Forward, GaussianPosterior, LatentPair, LatentVars, ModelDims, Noise, TermVars,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight weights of the overall objective. The KL entries are annealing
/// targets; the trainer turns them into per-step coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub kl_sem: f64,
    pub kl_syn: f64,
    pub mul_sem: f64,
    pub mul_syn: f64,
    pub adv_sem: f64,
    pub adv_syn: f64,
    pub rec_sem: f64,
    pub rec_syn: f64,
}

impl LossWeights {
    /// Small-treebank setting: KL weights 1.0, every auxiliary weight 0.5.
    pub fn ptb() -> Self {
        Self {
            kl_sem: 1.0,
            kl_syn: 1.0,
            mul_sem: 0.5,
            mul_syn: 0.5,
            adv_sem: 0.5,
            adv_syn: 0.5,
            rec_sem: 0.5,
            rec_syn: 0.5,
        }
    }

    /// Question-pair setting.
    pub fn quora() -> Self {
        Self {
            kl_sem: 1.0 / 3.0,
            kl_syn: 2.0 / 3.0,
            mul_sem: 5.0,
            mul_syn: 1.0,
            adv_sem: 0.5,
            adv_syn: 0.5,
            rec_sem: 1.0,
            rec_syn: 0.05,
        }
    }

    /// Plain two-space VAE: only the KL weights are set.
    pub fn vae_only(kl: f64) -> Self {
        Self {
            kl_sem: kl,
            kl_syn: kl,
            mul_sem: 0.0,
            mul_syn: 0.0,
            adv_sem: 0.0,
            adv_syn: 0.0,
            rec_sem: 0.0,
            rec_syn: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ptb" => Some(Self::ptb()),
            "quora" => Some(Self::quora()),
            _ => None,
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("kl_sem", self.kl_sem),
            ("kl_syn", self.kl_syn),
            ("mul_sem", self.mul_sem),
            ("mul_syn", self.mul_syn),
            ("adv_sem", self.adv_sem),
            ("adv_syn", self.adv_syn),
            ("rec_sem", self.rec_sem),
            ("rec_syn", self.rec_syn),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Values of the nine objective terms for one batch (means over sentences).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub nll: f64,
    pub kl_sem: f64,
    pub kl_syn: f64,
    pub mul_sem: f64,
    pub mul_syn: f64,
    pub adv_sem: f64,
    pub adv_syn: f64,
    pub rec_sem: f64,
    pub rec_syn: f64,
}

impl LossTerms {
    pub fn named(&self) -> [(&'static str, f64); 9] {
        [
            ("nll", self.nll),
            ("kl_sem", self.kl_sem),
            ("kl_syn", self.kl_syn),
            ("mul_sem", self.mul_sem),
            ("mul_syn", self.mul_syn),
            ("adv_sem", self.adv_sem),
            ("adv_syn", self.adv_syn),
            ("rec_sem", self.rec_sem),
            ("rec_syn", self.rec_syn),
        ]
    }

    /// First non-finite term, by name.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.named().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }
}

/// Coefficient applied to each term: the KL entries come from the annealing
/// schedule, the rest straight from `weights`.
pub fn term_coefficients(weights: &LossWeights, kl: [f64; 2]) -> [f64; 9] {
    [
        1.0,
        kl[0],
        kl[1],
        weights.mul_sem,
        weights.mul_syn,
        weights.adv_sem,
        weights.adv_syn,
        weights.rec_sem,
        weights.rec_syn,
    ]
}

/// Weighted objective from already computed term values. `kl` holds the
/// annealed KL coefficients for (sem, syn).
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, kl: [f64; 2]) -> Result<f64> {
    weights.validate()?;
    if kl.iter().any(|&k| !(k >= 0.0)) {
        return Err(Error::Config(format!("KL coefficients must be >= 0, got {kl:?}")));
    }
    if let Some(name) = terms.first_non_finite() {
        return Err(Error::Numeric(format!("loss term {name} is not finite")));
    }
    let coef = term_coefficients(weights, kl);
    Ok(terms
        .named()
        .iter()
        .zip(coef)
        .filter(|(_, c)| *c != 0.0)
        .map(|((_, v), c)| c * v)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms() -> LossTerms {
        LossTerms {
            nll: 12.5,
            kl_sem: 1.0,
            kl_syn: 2.0,
            mul_sem: 3.0,
            mul_syn: 4.0,
            adv_sem: -5.0,
            adv_syn: -6.0,
            rec_sem: -7.0,
            rec_syn: -8.0,
        }
    }

    #[test]
    fn zero_weights_leave_the_nll() {
        let w = LossWeights::vae_only(0.0);
        assert_eq!(total_loss(&terms(), &w, [0.0, 0.0]).unwrap(), 12.5);
    }

    #[test]
    fn full_combination() {
        let w = LossWeights::ptb();
        let expected = 12.5 + 1.0 + 2.0 + 0.5 * (3.0 + 4.0 - 5.0 - 6.0 - 7.0 - 8.0);
        assert!((total_loss(&terms(), &w, [1.0, 1.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        let p = LossWeights::ptb();
        assert_eq!((p.kl_sem, p.kl_syn), (1.0, 1.0));
        for (name, v) in p.named().into_iter().skip(2) {
            assert_eq!(v, 0.5, "{name}");
        }
        let q = LossWeights::quora();
        assert_eq!((q.kl_sem, q.kl_syn), (1.0 / 3.0, 2.0 / 3.0));
        assert_eq!((q.mul_sem, q.mul_syn), (5.0, 1.0));
        assert_eq!((q.adv_sem, q.adv_syn), (0.5, 0.5));
        assert_eq!((q.rec_sem, q.rec_syn), (1.0, 0.05));
    }

    #[test]
    fn negative_weight_is_config_error() {
        let mut w = LossWeights::ptb();
        w.adv_syn = -0.1;
        assert!(matches!(total_loss(&terms(), &w, [1.0, 1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_term_is_named() {
        let mut t = terms();
        t.mul_syn = f64::NAN;
        match total_loss(&t, &LossWeights::ptb(), [1.0, 1.0]) {
            Err(Error::Numeric(m)) => assert!(m.contains("mul_syn")),
            other => panic!("{other:?}"),
        }
    }
}
