//! Diagonal-Gaussian helpers: reparameterized sampling and the closed-form KL
//! divergence to the standard normal prior.

use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_sigma(sigma: &[f64]) -> Result<()> {
    match sigma.iter().position(|&s| !(s > 0.0)) {
        Some(i) => Err(Error::Domain(format!(
            "sigma[{i}] = {} is not positive",
            sigma[i]
        ))),
        None => Ok(()),
    }
}

/// `mu + sigma ⊙ epsilon`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != epsilon.len() {
        return Err(Error::Shape(format!(
            "reparameterize lengths {}, {}, {}",
            mu.len(),
            sigma.len(),
            epsilon.len()
        )));
    }
    check_sigma(sigma)?;
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// `KL(N(mu, diag sigma²) ‖ N(0, I)) = Σ ½(μ² + σ² − 1 − 2 ln σ)`.
pub fn kl_standard_gaussian(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::Shape("kl_standard_gaussian length mismatch".into()));
    }
    check_sigma(sigma)?;
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum())
}

/// Standard-normal noise of the given shape.
pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from caller")
}

/// Graph version of the reparameterization: `mu + exp(log_sigma) ⊙ eps`, with
/// `eps` entering as a constant so no gradient reaches it.
pub fn reparameterize_var(g: &mut Graph, mu: Var, log_sigma: Var, eps: Tensor) -> Result<Var> {
    let eps = g.constant(eps);
    let sigma = g.exp(log_sigma);
    let noise = g.mul(sigma, eps)?;
    g.add(mu, noise)
}
