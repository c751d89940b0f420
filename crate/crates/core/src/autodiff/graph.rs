//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Graph`]; operands always precede
//! the nodes that use them, so a single reverse sweep visits each node once.
//! Leaves are either trainable (`leaf`) or constants (`constant`); gradients
//! are only propagated along paths that reach a trainable leaf.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    WeightedSum(Vec<(Var, f64)>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    SelectRows(Vec<bool>, Var, Var),
    GruMix(Var, Var, Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Tensor,
    },
    SoftCrossEntropy {
        logits: Var,
        targets: Tensor,
        probs: Tensor,
    },
    KlGaussian(Var, Var),
    NonDifferentiable,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The recorded computation: an append-only list of nodes in topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    has_nondifferentiable: bool,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise numerically stable softmax; returns probabilities and per-row
/// log-sum-exp.
fn softmax_rows(logits: &Tensor) -> (Tensor, Vec<f64>) {
    let (rows, cols) = logits.rows_cols();
    let mut probs = vec![0.0; rows * cols];
    let mut lse = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut probs[r * cols..(r + 1) * cols];
        let mut total = 0.0;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (x - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        lse.push(max + total.ln());
    }
    (Tensor::from_parts(vec![rows, cols], probs), lse)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copy of `v` cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Whether a non-differentiable op has been recorded.
    pub fn has_nondifferentiable(&self) -> bool {
        self.has_nondifferentiable
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).rows_cols();
        let (k2, n) = self.value(b).rows_cols();
        if k != k2 {
            return Err(shape_err(format!(
                "matmul [{m}, {k}] x [{k2}, {n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).rows_cols();
        let b = self.value(bias);
        if b.len() != cols {
            return Err(shape_err(format!(
                "bias of length {} for {cols} columns",
                b.len()
            )));
        }
        let mut out = self.value(x).data().to_vec();
        for r in 0..rows {
            for (o, bv) in out[r * cols..(r + 1) * cols].iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddBias(x, bias), rg))
    }

    /// Elementwise operands must agree as matrices; `[n]` and `[1, n]` match.
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).rows_cols() != self.value(b).rows_cols() {
            return Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_parts(shape, data), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, c), rg)
    }

    /// `Σ c_i · x_i` over same-shaped terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Contract("weighted_sum of no terms".into()));
        };
        let shape = self.value(first).shape().to_vec();
        let mut out = vec![0.0; self.value(first).len()];
        for &(v, c) in terms {
            if self.value(v).shape() != shape.as_slice() {
                return Err(shape_err("weighted_sum terms differ in shape".into()));
            }
            for (o, x) in out.iter_mut().zip(self.value(v).data()) {
                *o += c * x;
            }
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.rg(&vars);
        Ok(self.push(Tensor::from_parts(shape, out), Op::WeightedSum(terms.to_vec()), rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat_cols row mismatch".into()));
            }
            cols += self.value(p).cols();
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).rows_cols();
        if len == 0 || start + len > cols {
            return Err(shape_err(format!(
                "slice_cols {start}..{} of {cols}",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![rows, len], out),
            Op::SliceCols(x, start),
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(shape_err("concat_rows column mismatch".into()));
            }
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / cols;
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).rows_cols();
        if len == 0 || start + len > rows {
            return Err(shape_err(format!(
                "slice_rows {start}..{} of {rows}",
                start + len
            )));
        }
        let out = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![len, cols], out),
            Op::SliceRows(x, start),
            rg,
        ))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(table).rows_cols();
        if ids.is_empty() {
            return Err(shape_err("gather of no ids".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(shape_err(format!("gather id {id} >= {rows} rows")));
            }
            out.extend_from_slice(self.value(table).row(id));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), cols], out),
            Op::Gather(table, ids.to_vec()),
            rg,
        ))
    }

    /// Row `r` is taken from `if_true` where `mask[r]`, else from `if_false`.
    pub fn select_rows(&mut self, mask: &[bool], if_true: Var, if_false: Var) -> Result<Var> {
        self.same_shape(if_true, if_false, "select_rows")?;
        let (rows, cols) = self.value(if_true).rows_cols();
        if mask.len() != rows {
            return Err(shape_err("select_rows mask length".into()));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { if_true } else { if_false };
            out.extend_from_slice(self.value(src).row(r));
        }
        let shape = self.value(if_true).shape().to_vec();
        let rg = self.rg(&[if_true, if_false]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::SelectRows(mask.to_vec(), if_true, if_false),
            rg,
        ))
    }

    /// GRU state interpolation `(1 − u) ⊙ h + u ⊙ c`.
    pub fn gru_mix(&mut self, u: Var, h: Var, c: Var) -> Result<Var> {
        self.same_shape(u, h, "gru_mix")?;
        self.same_shape(u, c, "gru_mix")?;
        let (vu, vh, vc) = (self.value(u), self.value(h), self.value(c));
        let data = vu
            .data()
            .iter()
            .zip(vh.data())
            .zip(vc.data())
            .map(|((&u, &h), &c)| (1.0 - u) * h + u * c)
            .collect();
        let shape = vu.shape().to_vec();
        let rg = self.rg(&[u, h, c]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::GruMix(u, h, c), rg))
    }

    /// `Σ_r weights[r] · −log softmax(logits_r)[targets[r]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let (rows, cols) = self.value(logits).rows_cols();
        if targets.len() != rows || weights.len() != rows {
            return Err(shape_err(format!(
                "cross_entropy: {rows} rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::Domain(format!("target class {t} >= {cols}")));
        }
        let (probs, lse) = softmax_rows(self.value(logits));
        let mut total = 0.0;
        for r in 0..rows {
            if weights[r] != 0.0 {
                total += weights[r] * (lse[r] - self.value(logits).row(r)[targets[r]]);
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `Σ_r Σ_c −t_rc · log softmax(logits_r)_c` against probability rows `targets`.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: Tensor) -> Result<Var> {
        let (rows, cols) = self.value(logits).rows_cols();
        if targets.rows_cols() != (rows, cols) {
            return Err(shape_err("soft_cross_entropy target shape".into()));
        }
        for r in 0..rows {
            let row = targets.row(r);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|&t| !(t >= 0.0)) {
                return Err(Error::Domain(format!(
                    "target row {r} is not a distribution (sum {s})"
                )));
            }
        }
        let (probs, lse) = softmax_rows(self.value(logits));
        let mut total = 0.0;
        for r in 0..rows {
            for (c, &t) in targets.row(r).iter().enumerate() {
                if t != 0.0 {
                    total += t * (lse[r] - self.value(logits).row(r)[c]);
                }
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::SoftCrossEntropy {
                logits,
                targets,
                probs,
            },
            rg,
        ))
    }

    /// `Σ ½(μ² + σ² − 1 − 2 log σ)` with `σ = exp(log_sigma)`: KL from the
    /// diagonal Gaussian to the standard normal, summed over all rows.
    pub fn kl_standard_gaussian(&mut self, mu: Var, log_sigma: Var) -> Result<Var> {
        self.same_shape(mu, log_sigma, "kl_standard_gaussian")?;
        let total = self
            .value(mu)
            .data()
            .iter()
            .zip(self.value(log_sigma).data())
            .map(|(&m, &ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
            .sum();
        let rg = self.rg(&[mu, log_sigma]);
        Ok(self.push(Tensor::scalar(total), Op::KlGaussian(mu, log_sigma), rg))
    }

    /// One-hot row-wise argmax (ties to the lowest index). Not differentiable;
    /// marks the graph so gradient checks refuse to report on it.
    pub fn argmax_one_hot(&mut self, x: Var) -> Var {
        let (rows, cols) = self.value(x).rows_cols();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let best = argmax(self.value(x).row(r));
            out[r * cols + best] = 1.0;
        }
        self.has_nondifferentiable = true;
        self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::NonDifferentiable,
            false,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let shape = self.nodes[v.0].value.shape();
        let g = if g.shape() == shape {
            g
        } else {
            Tensor::from_parts(shape.to_vec(), g.into_data())
        };
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::NonDifferentiable => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).rows_cols();
                let n = self.value(b).cols();
                if self.wants(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(b).data(), true, 0.0, &mut da);
                    let shape = self.value(a).shape().to_vec();
                    self.accumulate(grads, a, Tensor::from_parts(shape, da));
                }
                if self.wants(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(a).data(), true, g.data(), false, 0.0, &mut db);
                    let shape = self.value(b).shape().to_vec();
                    self.accumulate(grads, b, Tensor::from_parts(shape, db));
                }
            }
            &Op::AddBias(x, bias) => {
                if self.wants(x) {
                    self.accumulate(grads, x, g.clone());
                }
                if self.wants(bias) {
                    let (rows, cols) = g.rows_cols();
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    let shape = self.value(bias).shape().to_vec();
                    self.accumulate(grads, bias, Tensor::from_parts(shape, db));
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                if self.wants(b) {
                    self.accumulate(grads, b, g.map(|v| -v));
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    let d = zip_map(g, self.value(b), |gv, bv| gv * bv);
                    self.accumulate(grads, a, d);
                }
                if self.wants(b) {
                    let d = zip_map(g, self.value(a), |gv, av| gv * av);
                    self.accumulate(grads, b, d);
                }
            }
            &Op::Scale(x, c) => self.accumulate(grads, x, g.map(|v| v * c)),
            Op::WeightedSum(terms) => {
                for &(v, c) in terms {
                    if self.wants(v) {
                        self.accumulate(grads, v, g.map(|x| x * c));
                    }
                }
            }
            &Op::Sigmoid(x) => {
                let d = zip_map(g, out, |gv, s| gv * s * (1.0 - s));
                self.accumulate(grads, x, d);
            }
            &Op::Tanh(x) => {
                let d = zip_map(g, out, |gv, t| gv * (1.0 - t * t));
                self.accumulate(grads, x, d);
            }
            &Op::Relu(x) => {
                let d = zip_map(g, self.value(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, x, d);
            }
            &Op::Exp(x) => {
                let d = zip_map(g, out, |gv, e| gv * e);
                self.accumulate(grads, x, d);
            }
            &Op::Sum(x) => {
                let shape = self.value(x).shape();
                self.accumulate(grads, x, Tensor::filled(shape, g.item()));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.wants(p) {
                        let mut d = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        let shape = self.value(p).shape().to_vec();
                        self.accumulate(grads, p, Tensor::from_parts(shape, d));
                    }
                    offset += pc;
                }
            }
            &Op::SliceCols(x, start) => {
                let (rows, cols) = self.value(x).rows_cols();
                let len = g.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                let shape = self.value(x).shape().to_vec();
                self.accumulate(grads, x, Tensor::from_parts(shape, d));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.wants(p) {
                        let d = g.data()[offset..offset + n].to_vec();
                        let shape = self.value(p).shape().to_vec();
                        self.accumulate(grads, p, Tensor::from_parts(shape, d));
                    }
                    offset += n;
                }
            }
            &Op::SliceRows(x, start) => {
                let cols = g.cols();
                let mut d = vec![0.0; self.value(x).len()];
                d[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                let shape = self.value(x).shape().to_vec();
                self.accumulate(grads, x, Tensor::from_parts(shape, d));
            }
            Op::Gather(table, ids) => {
                let cols = g.cols();
                let mut d = vec![0.0; self.value(*table).len()];
                for (i, &id) in ids.iter().enumerate() {
                    for (dv, gv) in d[id * cols..(id + 1) * cols].iter_mut().zip(g.row(i)) {
                        *dv += gv;
                    }
                }
                let shape = self.value(*table).shape().to_vec();
                self.accumulate(grads, *table, Tensor::from_parts(shape, d));
            }
            Op::SelectRows(mask, a, b) => {
                let cols = g.cols();
                let shape = g.shape().to_vec();
                let mut da = vec![0.0; g.len()];
                let mut db = vec![0.0; g.len()];
                for (r, &m) in mask.iter().enumerate() {
                    let dst = if m { &mut da } else { &mut db };
                    dst[r * cols..(r + 1) * cols].copy_from_slice(g.row(r));
                }
                if self.wants(*a) {
                    self.accumulate(grads, *a, Tensor::from_parts(shape.clone(), da));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, Tensor::from_parts(shape, db));
                }
            }
            &Op::GruMix(u, h, c) => {
                let (vu, vh, vc) = (self.value(u), self.value(h), self.value(c));
                if self.wants(u) {
                    let d = g
                        .data()
                        .iter()
                        .zip(vh.data().iter().zip(vc.data()))
                        .map(|(gv, (hv, cv))| gv * (cv - hv))
                        .collect();
                    self.accumulate(grads, u, Tensor::from_parts(g.shape().to_vec(), d));
                }
                if self.wants(h) {
                    let d = zip_map(g, vu, |gv, uv| gv * (1.0 - uv));
                    self.accumulate(grads, h, d);
                }
                if self.wants(c) {
                    let d = zip_map(g, vu, |gv, uv| gv * uv);
                    self.accumulate(grads, c, d);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let scale = g.item();
                let cols = probs.cols();
                let mut d = probs.data().to_vec();
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    let row = &mut d[r * cols..(r + 1) * cols];
                    if w == 0.0 {
                        row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    row[t] -= 1.0;
                    let k = scale * w;
                    row.iter_mut().for_each(|v| *v *= k);
                }
                let shape = self.value(*logits).shape().to_vec();
                self.accumulate(grads, *logits, Tensor::from_parts(shape, d));
            }
            Op::SoftCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item();
                let (rows, cols) = probs.rows_cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let mass: f64 = targets.row(r).iter().sum();
                    for c in 0..cols {
                        d[r * cols + c] = scale * (probs.row(r)[c] * mass - targets.row(r)[c]);
                    }
                }
                let shape = self.value(*logits).shape().to_vec();
                self.accumulate(grads, *logits, Tensor::from_parts(shape, d));
            }
            &Op::KlGaussian(mu, log_sigma) => {
                let scale = g.item();
                if self.wants(mu) {
                    let d = self.value(mu).map(|m| scale * m);
                    self.accumulate(grads, mu, d);
                }
                if self.wants(log_sigma) {
                    let d = self.value(log_sigma).map(|ls| scale * ((2.0 * ls).exp() - 1.0));
                    self.accumulate(grads, log_sigma, d);
                }
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(b.shape().to_vec(), data)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_is_parameter_itself() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::scalar(3.5));
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(p).unwrap().item(), 1.0);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_parameter() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_and_detached_values_get_no_gradient() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let d = g.detach(p);
        let a = g.mul(p, c).unwrap();
        let b = g.mul(a, d).unwrap();
        let loss = g.sum(b);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert!(grads.get(d).is_none());
        // d/dp (p * c * d) with d held fixed = c * d
        assert_eq!(grads.get(p).unwrap().data(), &[3.0, 8.0]);
    }

    #[test]
    fn backward_is_deterministic() {
        let build = || {
            let mut g = Graph::new();
            let w = g.leaf(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap());
            let x = g.constant(Tensor::matrix(1, 2, vec![0.7, -1.1]).unwrap());
            let h = g.matmul(x, w).unwrap();
            let t = g.tanh(h);
            let loss = g.cross_entropy(t, &[2], &[1.0]).unwrap();
            let grads = g.backward(loss).unwrap();
            grads.get(w).unwrap().clone()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_k() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[1, 7]));
        let loss = g.cross_entropy(x, &[3], &[1.0]).unwrap();
        assert!((g.value(loss).item() - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_is_near_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(1, 2, vec![10.0, -10.0]).unwrap());
        let loss = g.cross_entropy(x, &[0], &[1.0]).unwrap();
        assert!(g.value(loss).item() < 1e-4);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_target() {
        let mut g = Graph::new();
        let logits = vec![0.3, -1.2, 2.0, 0.1];
        let x = g.leaf(Tensor::matrix(1, 4, logits.clone()).unwrap());
        let loss = g.cross_entropy(x, &[1], &[1.0]).unwrap();
        let grads = g.backward(loss).unwrap();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for (c, gv) in grads.get(x).unwrap().data().iter().enumerate() {
            let t = if c == 1 { 1.0 } else { 0.0 };
            assert!((gv - (logits[c].exp() / z - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_cross_entropy_rejects_non_distribution() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[1, 3]));
        let bad = Tensor::matrix(1, 3, vec![0.5, 0.4, 0.0]).unwrap();
        assert!(matches!(g.soft_cross_entropy(x, bad), Err(Error::Domain(_))));
        let x2 = g.leaf(Tensor::zeros(&[1, 3]));
        assert!(matches!(g.cross_entropy(x2, &[3], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn soft_cross_entropy_bounded_below_by_entropy() {
        let mut g = Graph::new();
        let t = vec![0.2, 0.5, 0.3];
        let entropy: f64 = t.iter().map(|p: &f64| -p * p.ln()).sum();
        for logits in [[0.0, 0.0, 0.0], [1.0, -3.0, 0.5], [0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()]] {
            let x = g.leaf(Tensor::matrix(1, 3, logits.to_vec()).unwrap());
            let loss = g.soft_cross_entropy(x, Tensor::matrix(1, 3, t.clone()).unwrap()).unwrap();
            assert!(g.value(loss).item() >= entropy - 1e-12);
        }
    }

    #[test]
    fn select_rows_routes_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = g.leaf(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let s = g.select_rows(&[true, false], a, b).unwrap();
        assert_eq!(g.value(s).data(), &[1.0, 4.0]);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
