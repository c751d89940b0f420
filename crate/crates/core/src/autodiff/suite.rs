//! Finite-difference checks for every differentiable graph op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gaussian::reparameterize_var;
use super::gradcheck::{grad_check, GradCheck};
use super::graph::{Graph, Var};
use super::gru::{gru_cell, GruWeights};
use super::tensor::Tensor;
use crate::error::Result;

/// Tolerance every op must meet.
pub const OP_TOLERANCE: f64 = 1e-4;

type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// A named scalar function of some inputs, built around one op.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub f: OpFn,
}

/// `Σ y ⊙ R` for a fixed pseudo-random `R`, so every output element gets a
/// distinct upstream gradient.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let r = Tensor::uniform(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let r = g.constant(r);
    let p = g.mul(y, r)?;
    Ok(g.sum(p))
}

fn case(name: &'static str, inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        name,
        inputs,
        f: Box::new(move |g, v| {
            let y = f(g, v)?;
            project(g, y, 99)
        }),
    }
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, rng).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

pub fn op_cases() -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut u = |shape: &[usize]| Tensor::uniform(shape, 1.0, &mut rng);
    let probs = Tensor::matrix(2, 4, vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.5, 0.5, 0.0]).unwrap();
    let mut cases = vec![
        case("matmul", vec![u(&[3, 4]), u(&[4, 2])], |g, v| g.matmul(v[0], v[1])),
        case("add_bias", vec![u(&[3, 4]), u(&[4])], |g, v| g.add_bias(v[0], v[1])),
        case("add", vec![u(&[2, 3]), u(&[2, 3])], |g, v| g.add(v[0], v[1])),
        case("sub", vec![u(&[2, 3]), u(&[2, 3])], |g, v| g.sub(v[0], v[1])),
        case("mul", vec![u(&[2, 3]), u(&[2, 3])], |g, v| g.mul(v[0], v[1])),
        case("scale", vec![u(&[2, 3])], |g, v| Ok(g.scale(v[0], -1.7))),
        case("weighted_sum", vec![u(&[2, 3]), u(&[2, 3]), u(&[2, 3])], |g, v| {
            g.weighted_sum(&[(v[0], 0.5), (v[1], -2.0), (v[2], 1.25)])
        }),
        case("sigmoid", vec![u(&[2, 3]).map(|x| 3.0 * x)], |g, v| Ok(g.sigmoid(v[0]))),
        case("tanh", vec![u(&[2, 3]).map(|x| 2.0 * x)], |g, v| Ok(g.tanh(v[0]))),
        case("exp", vec![u(&[2, 3])], |g, v| Ok(g.exp(v[0]))),
        case("sum", vec![u(&[2, 3])], |g, v| Ok(g.sum(v[0]))),
        case("concat_cols", vec![u(&[2, 3]), u(&[2, 1])], |g, v| g.concat_cols(&[v[0], v[1]])),
        case("slice_cols", vec![u(&[2, 5])], |g, v| g.slice_cols(v[0], 1, 3)),
        case("concat_rows", vec![u(&[2, 3]), u(&[1, 3])], |g, v| g.concat_rows(&[v[0], v[1]])),
        case("slice_rows", vec![u(&[4, 2])], |g, v| g.slice_rows(v[0], 1, 2)),
        case("gather", vec![u(&[5, 3])], |g, v| g.gather(v[0], &[4, 0, 4, 2])),
        case("select_rows", vec![u(&[3, 2]), u(&[3, 2])], |g, v| g.select_rows(&[true, false, true], v[0], v[1])),
        case("gru_mix", vec![u(&[2, 3]).map(|x| 0.5 + 0.4 * x), u(&[2, 3]), u(&[2, 3])], |g, v| g.gru_mix(v[0], v[1], v[2])),
        case("cross_entropy", vec![u(&[3, 4]).map(|x| 2.0 * x)], |g, v| g.cross_entropy(v[0], &[1, 3, 0], &[0.5, 1.0, 0.0])),
        case("soft_cross_entropy", vec![u(&[2, 4])], move |g, v| g.soft_cross_entropy(v[0], probs.clone())),
        case("kl_standard_gaussian", vec![u(&[2, 3]), u(&[2, 3])], |g, v| g.kl_standard_gaussian(v[0], v[1])),
    ];
    let eps = u(&[2, 3]);
    cases.push(case("reparameterize", vec![u(&[2, 3]), u(&[2, 3])], move |g, v| {
        reparameterize_var(g, v[0], v[1], eps.clone())
    }));
    cases.push(case(
        "gru_cell",
        vec![u(&[2, 3]), u(&[2, 4]), u(&[3, 12]), u(&[4, 8]), u(&[4, 4]), u(&[12])],
        |g, v| {
            let w = GruWeights {
                w_x: v[2],
                w_h: v[3],
                w_hc: v[4],
                bias: v[5],
            };
            gru_cell(g, v[0], v[1], &w)
        },
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    cases.push(case("relu", vec![away_from_zero(&[2, 3], &mut rng)], |g, v| Ok(g.relu(v[0]))));
    cases
}

/// Run every op case; returns `(name, result)` in registration order.
pub fn run_op_suite() -> Result<Vec<(&'static str, GradCheck)>> {
    op_cases()
        .into_iter()
        .map(|c| Ok((c.name, grad_check(&c.f, &c.inputs, 1e-6)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes() {
        for (name, check) in run_op_suite().unwrap() {
            assert!(check.passes(OP_TOLERANCE), "{name}: {check:?}");
        }
    }
}
