//! Define-by-run reverse-mode differentiation over dense row-major matrices.
//!
//! Every value in the graph is a 2-D `f64` matrix; vectors are `1 × n` rows
//! and scalars are `1 × 1`. A [`Graph`] is built fresh for every forward pass
//! and discarded after [`Graph::backward`].

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis selector for concatenation and slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Rows,
    Cols,
}

/// The generic forward operations exposed through [`Graph::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardOp {
    /// `a · b`
    MatMul,
    /// `a + b`, with `b` optionally a `1 × cols` row broadcast over `a`.
    Add,
    Concat(Dim),
    /// Row-wise softmax.
    SoftmaxLastDim,
    Sigmoid,
    Tanh,
    /// `max(0, x·w + b)` with inputs `[x, w, b]`.
    ReluAffine,
    /// Row-wise layer normalisation with inputs `[x, gain, bias]`.
    LayerNorm,
    Slice {
        dim: Dim,
        start: usize,
        len: usize,
    },
    /// Sum of all entries, producing a `1 × 1` scalar.
    Sum,
}

#[derive(Debug)]
enum Op {
    Input,
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    Softmax(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    BceLogits {
        logits: Var,
        targets: Matrix,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// A single forward pass worth of recorded operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn shape_str(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn softmax_row_in_place(mut row: ndarray::ArrayViewMut1<f64>, valid: usize) {
    let max = row.iter().take(valid).copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if j < valid {
            *v = (*v - max).exp();
            total += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut().take(valid) {
        *v /= total;
    }
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A differentiable leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.param_vars.insert(id, v);
        v
    }

    /// Dispatches one of the generic forward operations.
    pub fn apply(&mut self, op: ForwardOp, inputs: &[Var]) -> Result<Var> {
        let want = match op {
            ForwardOp::MatMul | ForwardOp::Add => 2,
            ForwardOp::ReluAffine | ForwardOp::LayerNorm => 3,
            ForwardOp::Concat(_) => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != want {
            return Err(Error::invalid(format!(
                "{op:?} expects {want} inputs, got {}",
                inputs.len()
            )));
        }
        match op {
            ForwardOp::MatMul => self.matmul(inputs[0], inputs[1]),
            ForwardOp::Add => self.add(inputs[0], inputs[1]),
            ForwardOp::Concat(Dim::Cols) => self.concat_cols(inputs),
            ForwardOp::Concat(Dim::Rows) => self.concat_rows(inputs),
            ForwardOp::SoftmaxLastDim => Ok(self.softmax(inputs[0])),
            ForwardOp::Sigmoid => Ok(self.sigmoid(inputs[0])),
            ForwardOp::Tanh => Ok(self.tanh(inputs[0])),
            ForwardOp::ReluAffine => self.relu_affine(inputs[0], inputs[1], inputs[2]),
            ForwardOp::LayerNorm => self.layer_norm(inputs[0], inputs[1], inputs[2]),
            ForwardOp::Slice {
                dim: Dim::Rows,
                start,
                len,
            } => self.slice_rows(inputs[0], start, len),
            ForwardOp::Slice {
                dim: Dim::Cols,
                start,
                len,
            } => self.slice_cols(inputs[0], start, len),
            ForwardOp::Sum => Ok(self.sum(inputs[0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(Error::shape("matmul", format!("{} · {}", shape_str(av), shape_str(bv))));
        }
        let out = av.dot(bv);
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), needs))
    }

    fn check_same_or_row(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        let same = av.dim() == bv.dim();
        let row = bv.nrows() == 1 && bv.ncols() == av.ncols();
        if same || row {
            Ok(())
        } else {
            Err(Error::shape(op, format!("{} vs {}", shape_str(av), shape_str(bv))))
        }
    }

    /// `a + b`; `b` may be a `1 × cols` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_or_row("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    /// `a - b`; `b` may be a broadcast row as in [`Graph::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_or_row("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dim() != bv.dim() {
            return Err(Error::shape("mul", format!("{} vs {}", shape_str(av), shape_str(bv))));
        }
        let out = av * bv;
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    /// Scales every row of `x` (`r × c`) by the matching entry of `col` (`r × 1`).
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xv, cv) = (self.value(x), self.value(col));
        if cv.ncols() != 1 || cv.nrows() != xv.nrows() {
            return Err(Error::shape(
                "mul_col",
                format!("{} by {}", shape_str(xv), shape_str(cv)),
            ));
        }
        let out = xv * cv;
        let needs = self.needs(&[x, col]);
        Ok(self.push(out, Op::MulCol(x, col), needs))
    }

    /// `a·x + b` elementwise with scalar constants.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let out = self.value(x).mapv(|v| a * v + b);
        let needs = self.needs(&[x]);
        self.push(out, Op::Affine(x, a), needs)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::invalid("concat of zero inputs"));
        }
        let rows = self.value(vars[0]).nrows();
        if vars.iter().any(|v| self.value(*v).nrows() != rows) {
            let shapes: Vec<_> = vars.iter().map(|v| shape_str(self.value(*v))).collect();
            return Err(Error::shape("concat_cols", shapes.join(", ")));
        }
        let views: Vec<_> = vars.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("checked shapes");
        let needs = self.needs(vars);
        Ok(self.push(out, Op::ConcatCols(vars.to_vec()), needs))
    }

    pub fn concat_rows(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::invalid("concat of zero inputs"));
        }
        let cols = self.value(vars[0]).ncols();
        if vars.iter().any(|v| self.value(*v).ncols() != cols) {
            let shapes: Vec<_> = vars.iter().map(|v| shape_str(self.value(*v))).collect();
            return Err(Error::shape("concat_rows", shapes.join(", ")));
        }
        let views: Vec<_> = vars.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("checked shapes");
        let needs = self.needs(vars);
        Ok(self.push(out, Op::ConcatRows(vars.to_vec()), needs))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if len == 0 || start + len > xv.nrows() {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {}", start + len, shape_str(xv)),
            ));
        }
        let out = xv.slice(s![start..start + len, ..]).to_owned();
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::SliceRows(x, start), needs))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if len == 0 || start + len > xv.ncols() {
            return Err(Error::shape(
                "slice_cols",
                format!("cols {start}..{} of {}", start + len, shape_str(xv)),
            ));
        }
        let out = xv.slice(s![.., start..start + len]).to_owned();
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::SliceCols(x, start), needs))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        self.slice_rows(x, i, 1)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).t().to_owned();
        let needs = self.needs(&[x]);
        self.push(out, Op::Transpose(x), needs)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let cols = out.ncols();
        for row in out.rows_mut() {
            softmax_row_in_place(row, cols);
        }
        let needs = self.needs(&[x]);
        self.push(out, Op::Softmax(x), needs)
    }

    /// Row-wise softmax where entry `(i, j)` with `j > i` is treated as a
    /// `-inf` logit and receives exactly zero probability.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.nrows() != xv.ncols() {
            return Err(Error::shape("causal_softmax", shape_str(xv)));
        }
        let mut out = xv.clone();
        for (i, row) in out.rows_mut().into_iter().enumerate() {
            softmax_row_in_place(row, i + 1);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::Softmax(x), needs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(sigmoid_scalar);
        let needs = self.needs(&[x]);
        self.push(out, Op::Sigmoid(x), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::tanh);
        let needs = self.needs(&[x]);
        self.push(out, Op::Tanh(x), needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        let needs = self.needs(&[x]);
        self.push(out, Op::Relu(x), needs)
    }

    /// `max(0, x·w + b)`.
    pub fn relu_affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        let z = self.add(xw, b)?;
        Ok(self.relu(z))
    }

    /// `x·w + b` with `b` a broadcast row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Normalises each row to zero mean and unit variance, then applies the
    /// `1 × cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.ncols();
        for p in [gain, bias] {
            let pv = self.value(p);
            if pv.dim() != (1, cols) {
                return Err(Error::shape(
                    "layer_norm",
                    format!("input {} with affine {}", shape_str(xv), shape_str(pv)),
                ));
            }
        }
        let n = cols as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| v * is);
            inv_std.push(is);
        }
        let out = &(&xhat * self.value(gain)) + self.value(bias);
        let needs = self.needs(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let needs = self.needs(&[x]);
        self.push(Array2::from_elem((1, 1), total), Op::Sum(x), needs)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if let Some(bad) = ids.iter().find(|&&i| i >= tv.nrows()) {
            return Err(Error::shape("gather", format!("row {bad} of {}", shape_str(tv))));
        }
        let mut out = Array2::zeros((ids.len(), tv.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&tv.row(id));
        }
        let needs = self.needs(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Sum over rows of the mean over columns of the binary cross entropy
    /// between `sigmoid(logits)` and `targets` (entries in `[0, 1]`).
    pub fn bce_with_logits(&mut self, logits: Var, targets: Matrix) -> Result<Var> {
        let lv = self.value(logits);
        if lv.dim() != targets.dim() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} vs targets {}", shape_str(lv), shape_str(&targets)),
            ));
        }
        let cols = lv.ncols() as f64;
        let mut total = 0.0;
        Zip::from(lv).and(&targets).for_each(|&z, &y| {
            total += softplus(z) - y * z;
        });
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Array2::from_elem((1, 1), total / cols),
            Op::BceLogits { logits, targets },
            needs,
        ))
    }

    /// Mean over rows of `-ln softmax(logits)[row, target[row]]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.nrows() != targets.len() || targets.iter().any(|&t| t >= lv.ncols()) {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} with {} targets", shape_str(lv), targets.len()),
            ));
        }
        let mut probs = lv.clone();
        let cols = probs.ncols();
        let mut total = 0.0;
        for (row, (lrow, &t)) in probs.rows_mut().into_iter().zip(lv.rows().into_iter().zip(targets)) {
            let max = lrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lrow.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - lrow[t];
            softmax_row_in_place(row, cols);
        }
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Array2::from_elem((1, 1), total / targets.len() as f64),
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Reverse pass from a `1 × 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(Error::shape("backward", format!("loss is {}", shape_str(lv))));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &gout, &mut grads);
            if matches!(node.op, Op::Input | Op::Param) {
                grads[i] = Some(gout);
            }
        }

        let mut params: Vec<_> = self.param_vars.iter().map(|(id, v)| (*id, *v)).collect();
        params.sort();
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, op: &Op, out: &Matrix, gout: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Input | Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let g = gout.dot(&self.value(*b).t());
                    self.accumulate(grads, *a, g);
                }
                if self.wants(*b) {
                    let g = self.value(*a).t().dot(gout);
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(*a) {
                    self.accumulate(grads, *a, gout.clone());
                }
                if self.wants(*b) {
                    let g = if self.value(*b).dim() == gout.dim() {
                        gout * sign
                    } else {
                        gout.sum_axis(Axis(0)).insert_axis(Axis(0)) * sign
                    };
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, gout * self.value(*b));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, gout * self.value(*a));
                }
            }
            Op::MulCol(x, col) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, gout * self.value(*col));
                }
                if self.wants(*col) {
                    let g = (gout * self.value(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    self.accumulate(grads, *col, g);
                }
            }
            Op::Affine(x, a) => self.accumulate(grads, *x, gout * *a),
            Op::ConcatCols(vars) => {
                let mut start = 0;
                for v in vars {
                    let w = self.value(*v).ncols();
                    if self.wants(*v) {
                        let g = gout.slice(s![.., start..start + w]).to_owned();
                        self.accumulate(grads, *v, g);
                    }
                    start += w;
                }
            }
            Op::ConcatRows(vars) => {
                let mut start = 0;
                for v in vars {
                    let h = self.value(*v).nrows();
                    if self.wants(*v) {
                        let g = gout.slice(s![start..start + h, ..]).to_owned();
                        self.accumulate(grads, *v, g);
                    }
                    start += h;
                }
            }
            Op::SliceRows(x, start) => {
                let mut g = Array2::zeros(self.value(*x).dim());
                g.slice_mut(s![*start..*start + gout.nrows(), ..]).assign(gout);
                self.accumulate(grads, *x, g);
            }
            Op::SliceCols(x, start) => {
                let mut g = Array2::zeros(self.value(*x).dim());
                g.slice_mut(s![.., *start..*start + gout.ncols()]).assign(gout);
                self.accumulate(grads, *x, g);
            }
            Op::Transpose(x) => self.accumulate(grads, *x, gout.t().to_owned()),
            Op::Softmax(x) => {
                let mut g = gout * out;
                for (mut grow, yrow) in g.rows_mut().into_iter().zip(out.rows()) {
                    let dot = grow.sum();
                    Zip::from(&mut grow).and(&yrow).for_each(|gv, &y| *gv -= y * dot);
                }
                self.accumulate(grads, *x, g);
            }
            Op::Sigmoid(x) => {
                let g = Zip::from(gout).and(out).map_collect(|&g, &y| g * y * (1.0 - y));
                self.accumulate(grads, *x, g);
            }
            Op::Tanh(x) => {
                let g = Zip::from(gout).and(out).map_collect(|&g, &y| g * (1.0 - y * y));
                self.accumulate(grads, *x, g);
            }
            Op::Relu(x) => {
                let g = Zip::from(gout)
                    .and(out)
                    .map_collect(|&g, &y| if y > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *x, g);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                if self.wants(*bias) {
                    self.accumulate(grads, *bias, gout.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.wants(*gain) {
                    let g = (gout * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(grads, *gain, g);
                }
                if self.wants(*x) {
                    let dxhat = gout * self.value(*gain);
                    let n = xhat.ncols() as f64;
                    let mut g = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dr = dxhat.row(r);
                        let xr = xhat.row(r);
                        let sum_d = dr.sum();
                        let sum_dx = dr.dot(&xr);
                        let is = inv_std[r];
                        for c in 0..xhat.ncols() {
                            g[[r, c]] = is / n * (n * dr[c] - sum_d - xr[c] * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, g);
                }
            }
            Op::Sum(x) => {
                let g = Array2::from_elem(self.value(*x).dim(), gout[[0, 0]]);
                self.accumulate(grads, *x, g);
            }
            Op::Gather { table, ids } => {
                let mut g = Array2::zeros(self.value(*table).dim());
                for (r, &id) in ids.iter().enumerate() {
                    let mut dst = g.row_mut(id);
                    dst += &gout.row(r);
                }
                self.accumulate(grads, *table, g);
            }
            Op::BceLogits { logits, targets } => {
                let lv = self.value(*logits);
                let scale = gout[[0, 0]] / lv.ncols() as f64;
                let g = Zip::from(lv)
                    .and(targets)
                    .map_collect(|&z, &y| scale * (sigmoid_scalar(z) - y));
                self.accumulate(grads, *logits, g);
            }
            Op::SoftmaxCe { logits, targets, probs } => {
                let scale = gout[[0, 0]] / targets.len() as f64;
                let mut g = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    g[[r, t]] -= 1.0;
                }
                g *= scale;
                self.accumulate(grads, *logits, g);
            }
        }
    }
}

/// Gradients produced by one reverse pass.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to an input leaf or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Iterates over `(parameter, gradient)` pairs reached by the pass.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params.iter().filter_map(|(id, v)| self.wrt(*v).map(|g| (*id, g)))
    }
}
