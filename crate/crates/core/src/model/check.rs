//! End-to-end gradient check of the full objective on a miniature model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, DssVae, Example, LossWeights, ModelDims};
use crate::autodiff::{grad_check_with, standard_normal, Bound, GradCheck, GradCheckOptions, Tensor};
use crate::error::Result;

pub const MINI_DIMS: ModelDims = ModelDims {
    vocab_size: 20,
    syntax_vocab_size: 10,
    embed_dim: 8,
    hidden_dim: 8,
    latent_dim: 4,
    decoder_dim: 8,
};

pub const OBJECTIVE_TOLERANCE: f64 = 1e-3;

/// Compare the analytic gradient of the weighted objective (all nine terms,
/// fixed latent noise, no dropout) with central differences at
/// `coords_per_param` random coordinates of every parameter.
///
/// Weights are drawn from `[-0.5, 0.5]` rather than the training
/// initialisation so that most gradients stand well clear of rounding and
/// truncation noise; entries below `1e-6` are compared in absolute terms.
pub fn objective_grad_check(seed: u64, coords_per_param: usize) -> Result<GradCheck> {
    let dims = MINI_DIMS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = DssVae::new(dims, &mut rng)?;
    let ids: Vec<_> = model.store().ids().collect();
    for id in ids {
        let shape = model.store().get(id).shape().to_vec();
        model.store_mut().set(id, Tensor::uniform(&shape, 0.5, &mut rng))?;
    }
    let (v, s) = (dims.vocab_size, dims.syntax_vocab_size);
    let examples = [
        Example::from_ids(vec![4, 5, 6, 7], vec![4, 5, 6, 7, 8], v)?,
        Example::from_ids(vec![8, 9, 10], vec![4, 9, 5], v)?,
        Example::from_ids(vec![11, 12, 13, 14, 19, 4], vec![4, 5, 6, 5, 9, s - 1], v)?,
    ];
    let batch = Batch::new(examples.iter().collect())?;
    let eps = [
        standard_normal(&[batch.len(), dims.latent_dim], &mut rng),
        standard_normal(&[batch.len(), dims.latent_dim], &mut rng),
    ];
    let weights = LossWeights::ptb();
    let f = |g: &mut crate::autodiff::Graph, vars: &[crate::autodiff::Var]| {
        let b = Bound::from_vars(vars.to_vec());
        let (loss, _) = model.main_loss(g, &b, &batch, Some(&eps), &weights, [0.7, 0.3], None)?;
        Ok(loss)
    };
    grad_check_with(
        f,
        &model.param_tensors(),
        GradCheckOptions {
            eps: 1e-5,
            max_coords_per_input: Some(coords_per_param),
            seed,
            denominator_floor: 1e-6,
        },
    )
}
