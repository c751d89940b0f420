//! Numeric substrate: dense tensors, a reverse-mode tape, GRU cells,
//! diagonal-Gaussian helpers and the Adam optimizer.

pub mod gaussian;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod optim;
pub mod params;
pub mod suite;
pub mod tensor;

pub use gaussian::{kl_standard_gaussian, reparameterize, reparameterize_var, standard_normal};
pub use gradcheck::{grad_check, grad_check_with, GradCheck, GradCheckOptions};
pub use graph::{argmax, Gradients, Graph, Var};
pub use gru::{gru_cell, gru_step, project_inputs, GruWeights};
pub use optim::{adam_step, clip_global_norm, Adam, AdamConfig, OptimizerState};
pub use params::{Bound, ParamGroup, ParamId, ParamStore};
pub use suite::{op_cases, run_op_suite, OpCase, OP_TOLERANCE};
pub use tensor::Tensor;
