//! Gated recurrent unit with the update convention
//! `h_t = (1 − u_t) ⊙ h_{t−1} + u_t ⊙ c_t`, where
//! `u_t = σ(x W_xu + h W_hu + b_u)`, `r_t = σ(x W_xr + h W_hr + b_r)` and
//! `c_t = tanh(x W_xc + (r_t ⊙ h) W_hc + b_c)`.
//!
//! Weights are packed: `w_x` is `[input, 3H]` with column blocks (u, r, c),
//! `w_h` is `[H, 2H]` with blocks (u, r), `w_hc` is `[H, H]` and `bias` is `[3H]`.

use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Graph handles for one GRU layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    pub w_x: Var,
    pub w_h: Var,
    pub w_hc: Var,
    pub bias: Var,
}

impl GruWeights {
    pub fn hidden_size(&self, g: &Graph) -> usize {
        g.value(self.w_hc).cols()
    }

    pub fn input_size(&self, g: &Graph) -> usize {
        g.value(self.w_x).rows()
    }

    fn check(&self, g: &Graph) -> Result<usize> {
        let h = self.hidden_size(g);
        let ok = g.value(self.w_x).cols() == 3 * h
            && g.value(self.w_h).rows_cols() == (h, 2 * h)
            && g.value(self.w_hc).rows_cols() == (h, h)
            && g.value(self.bias).len() == 3 * h;
        if ok {
            Ok(h)
        } else {
            Err(Error::Shape("inconsistent GRU weight shapes".into()))
        }
    }
}

/// Input projection for all timesteps at once: `x W_x + b`, shape `[rows, 3H]`.
pub fn project_inputs(g: &mut Graph, x: Var, w: &GruWeights) -> Result<Var> {
    w.check(g)?;
    let xw = g.matmul(x, w.w_x)?;
    g.add_bias(xw, w.bias)
}

/// One recurrence step given the precomputed input projection `xw` (`[B, 3H]`).
pub fn gru_step(g: &mut Graph, xw: Var, h_prev: Var, w: &GruWeights) -> Result<Var> {
    let h = w.hidden_size(g);
    if g.value(xw).cols() != 3 * h || g.value(h_prev).cols() != h {
        return Err(Error::Shape(format!(
            "gru_step: xw has {} columns, h_prev has {}, hidden {h}",
            g.value(xw).cols(),
            g.value(h_prev).cols()
        )));
    }
    if g.value(xw).rows() != g.value(h_prev).rows() {
        return Err(Error::Shape("gru_step batch mismatch".into()));
    }
    let hh = g.matmul(h_prev, w.w_h)?;
    let xu = g.slice_cols(xw, 0, h)?;
    let xr = g.slice_cols(xw, h, h)?;
    let xc = g.slice_cols(xw, 2 * h, h)?;
    let hu = g.slice_cols(hh, 0, h)?;
    let hr = g.slice_cols(hh, h, h)?;
    let u_pre = g.add(xu, hu)?;
    let u = g.sigmoid(u_pre);
    let r_pre = g.add(xr, hr)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h_prev)?;
    let rhw = g.matmul(rh, w.w_hc)?;
    let c_pre = g.add(xc, rhw)?;
    let c = g.tanh(c_pre);
    g.gru_mix(u, h_prev, c)
}

/// Single GRU update from raw input `x_t` (`[B, input]` or `[input]`).
pub fn gru_cell(g: &mut Graph, x_t: Var, h_prev: Var, w: &GruWeights) -> Result<Var> {
    if g.value(x_t).cols() != w.input_size(g) {
        return Err(Error::Shape(format!(
            "gru_cell input width {} != {}",
            g.value(x_t).cols(),
            w.input_size(g)
        )));
    }
    let xw = project_inputs(g, x_t, w)?;
    gru_step(g, xw, h_prev, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn zero_weights(g: &mut Graph, input: usize, hidden: usize) -> GruWeights {
        GruWeights {
            w_x: g.leaf(Tensor::zeros(&[input, 3 * hidden])),
            w_h: g.leaf(Tensor::zeros(&[hidden, 2 * hidden])),
            w_hc: g.leaf(Tensor::zeros(&[hidden, hidden])),
            bias: g.leaf(Tensor::zeros(&[3 * hidden])),
        }
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let mut g = Graph::new();
        let w = zero_weights(&mut g, 1, 1);
        let x = g.constant(Tensor::vector(vec![0.7]));
        let h = g.constant(Tensor::vector(vec![2.0]));
        let out = gru_cell(&mut g, x, h, &w).unwrap();
        assert_eq!(g.value(out).data(), &[1.0]);
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut g = Graph::new();
        let mut bias = vec![0.0; 9];
        bias[..3].iter_mut().for_each(|b| *b = -1000.0);
        let w = GruWeights {
            w_x: g.leaf(Tensor::uniform(&[2, 9], 0.5, &mut rand::rng())),
            w_h: g.leaf(Tensor::uniform(&[3, 6], 0.5, &mut rand::rng())),
            w_hc: g.leaf(Tensor::uniform(&[3, 3], 0.5, &mut rand::rng())),
            bias: g.leaf(Tensor::vector(bias)),
        };
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let h = g.constant(Tensor::vector(vec![0.25, -1.5, 3.0]));
        let out = gru_cell(&mut g, x, h, &w).unwrap();
        assert_eq!(g.value(out).data(), &[0.25, -1.5, 3.0]);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let mut g = Graph::new();
        let w = zero_weights(&mut g, 2, 3);
        let x = g.constant(Tensor::vector(vec![0.0; 4]));
        let h = g.constant(Tensor::vector(vec![0.0; 3]));
        assert!(matches!(gru_cell(&mut g, x, h, &w), Err(Error::Shape(_))));
        let x = g.constant(Tensor::vector(vec![0.0; 2]));
        let h = g.constant(Tensor::vector(vec![0.0; 5]));
        assert!(matches!(gru_cell(&mut g, x, h, &w), Err(Error::Shape(_))));
    }
}
