//! Central finite-difference checks of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Result of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradCheck {
    /// Largest `|analytic − numeric| / max(floor, |analytic| + |numeric|)`.
    MaxRelativeError(f64),
    /// The closure records a non-differentiable operation.
    NotCheckable,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        matches!(*self, GradCheck::MaxRelativeError(e) if e < tolerance)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many coordinates of each input (chosen at random).
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator; coordinates whose
    /// gradients are smaller are effectively compared in absolute terms.
    pub denominator_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_input: None,
            seed: 0,
            denominator_floor: 1e-8,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let value = g.value(out);
    if value.len() != 1 {
        return Err(Error::Contract("gradient check needs a scalar output".into()));
    }
    if !value.item().is_finite() {
        return Err(Error::Numeric(format!("non-finite output {}", value.item())));
    }
    Ok(value.item())
}

/// Compare reverse-mode gradients of `f` against central differences at every
/// coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with(
        f,
        inputs,
        GradCheckOptions {
            eps,
            ..Default::default()
        },
    )
}

pub fn grad_check_with<F>(f: F, inputs: &[Tensor], options: GradCheckOptions) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(options.eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.has_nondifferentiable() {
        return Ok(GradCheck::NotCheckable);
    }
    if !g.value(out).is_finite() {
        return Err(Error::Numeric("non-finite output".into()));
    }
    let mut grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst = 0.0f64;
    let mut perturbed = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match options.max_coords_per_input {
            Some(k) if k < input.len() => sample(&mut rng, input.len(), k).into_vec(),
            _ => (0..input.len()).collect(),
        };
        for j in coords {
            let original = input.data()[j];
            perturbed[i].data_mut()[j] = original + options.eps;
            let plus = evaluate(&f, &perturbed)?;
            perturbed[i].data_mut()[j] = original - options.eps;
            let minus = evaluate(&f, &perturbed)?;
            perturbed[i].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * options.eps);
            let a = analytic[i].data()[j];
            if !a.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at input {i}[{j}]")));
            }
            worst = worst.max(relative_error(a, numeric, options.denominator_floor));
        }
    }
    Ok(GradCheck::MaxRelativeError(worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_op_is_exact() {
        let w = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, -3.0, 0.5, 0.0, 4.0]).unwrap();
        let check = grad_check(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                Ok(g.sum(y))
            },
            &[x, w],
            1e-5,
        )
        .unwrap();
        match check {
            GradCheck::MaxRelativeError(e) => assert!(e < 1e-10, "{e}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sigmoid_composition_within_tolerance() {
        let x = Tensor::vector(vec![0.3, -1.7, 2.2, 0.05]);
        let check = grad_check(
            |g, v| {
                let s = g.sigmoid(v[0]);
                let t = g.mul(s, v[0])?;
                let u = g.sigmoid(t);
                Ok(g.sum(u))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(check.passes(1e-4), "{check:?}");
    }

    #[test]
    fn argmax_is_not_checkable() {
        let x = Tensor::matrix(1, 3, vec![0.1, 0.9, 0.3]).unwrap();
        let check = grad_check(
            |g, v| {
                let a = g.argmax_one_hot(v[0]);
                let y = g.mul(a, v[0])?;
                Ok(g.sum(y))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(check, GradCheck::NotCheckable);
    }

    #[test]
    fn non_finite_output_is_numeric_error() {
        let x = Tensor::vector(vec![800.0]);
        let err = grad_check(
            |g, v| {
                let e = g.exp(v[0]);
                Ok(g.sum(e))
            },
            &[x],
            1e-5,
        );
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
