//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values live on the
//! tape and are addressed by [`Var`] handles; [`Tape::backward`] walks the
//! recording in reverse and accumulates gradients for every node that
//! (transitively) depends on a leaf created with `requires_grad = true`.
//!
//! The tape is meant to be rebuilt for each forward pass. Running `backward`
//! a second time on the same tape is rejected with [`Error::BackwardTwice`].
//!
//! Every forward op checks its output for NaN/Inf and fails with
//! [`Error::NonFinite`] instead of silently propagating it.
//!
//! ```
//! use conjoint::autodiff::Tape;
//! use conjoint::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::new(1, 2, vec![1.0, -2.0]).unwrap());
//! let x = tape.constant(Tensor::new(2, 1, vec![3.0, 0.5]).unwrap());
//! let y = tape.matmul(w, x).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.value(y).item(), 2.0);
//! assert_eq!(tape.grad(w).unwrap().data(), &[3.0, 0.5]);
//! ```

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Assignment of rows (edges) to segments (neighborhoods).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    count: usize,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&s| s >= count) {
            return Err(Error::Argument(format!(
                "segment id {bad} out of range for {count} segments"
            )));
        }
        Ok(Segments { ids, count })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &s in &self.ids {
            sizes[s] += 1;
        }
        sizes
    }

    fn first_empty(&self) -> Option<usize> {
        self.sizes().iter().position(|&n| n == 0)
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    ScaleBy { x: Var, s: Var },
    RowScale { x: Var, w: Var },
    Exp(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<Segments>),
    SegmentSoftmax(Var, Arc<Segments>),
    Dropout(Var, Vec<f64>),
    LogSoftmax(Var),
    Nll { x: Var, picks: Vec<(usize, usize)> },
    Sum(Var),
    SumSquares(Var),
    RowSum(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recording of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the backward root with respect to `v`, if `v` took part.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("same shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, &[a, b], Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push("transpose", out, &[a], Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push("add", out, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push("sub", out, &[a, b], Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push("mul", out, &[a, b], Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let out = self.zip_map(a, b, |x, y| x / y);
        self.push("div", out, &[a, b], Op::Div(a, b))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, &[a], Op::Scale(a, c))
    }

    /// Multiplication of every entry of `x` by the `1 × 1` value `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::shape(
                "scale_by",
                format!("scale must be 1x1, got {:?}", self.value(s).shape()),
            ));
        }
        let k = self.value(s).item();
        let out = self.value(x).map(|v| v * k);
        self.push("scale_by", out, &[x, s], Op::ScaleBy { x, s })
    }

    /// Row `r` of `x` multiplied by `w[r]`, with `w` a column vector.
    pub fn row_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.cols() != 1 || tw.rows() != tx.rows() {
            return Err(Error::shape(
                "row_scale",
                format!("{:?} rows scaled by {:?}", tx.shape(), tw.shape()),
            ));
        }
        let mut out = tx.clone();
        for r in 0..out.rows() {
            let k = tw.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= k);
        }
        self.push("row_scale", out, &[x, w], Op::RowScale { x, w })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push("exp", out, &[a], Op::Exp(a))
    }

    /// `x` for `x > 0`, `slope·x` otherwise. The derivative at exactly zero is
    /// taken from the negative branch (`slope`).
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        if !(slope >= 0.0) {
            return Err(Error::Argument(format!(
                "leaky_relu slope must be >= 0, got {slope}"
            )));
        }
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", out, &[a], Op::LeakyRelu(a, slope))
    }

    /// ELU with unit scale: `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push("elu", out, &[a], Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, &[a], Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Argument("concat_cols needs at least one input".into()));
        };
        let rows = self.value(first).rows();
        if let Some(bad) = parts.iter().find(|v| self.value(**v).rows() != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {rows}", self.value(*bad).rows()),
            ));
        }
        let cols: usize = parts.iter().map(|v| self.value(*v).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in parts {
                data.extend_from_slice(self.value(*v).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        self.push("concat_cols", out, parts, Op::ConcatCols(parts.to_vec()))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("range {start}..{end} of {} rows", t.rows()),
            ));
        }
        let cols = t.cols();
        let out = Tensor::new(end - start, cols, t.data()[start * cols..end * cols].to_vec())?;
        self.push("slice_rows", out, &[a], Op::SliceRows(a, start))
    }

    /// Output row `e` is row `index[e]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("index {bad} out of range for {} rows", t.rows()),
            ));
        }
        let cols = t.cols();
        let src = t.data();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::new(index.len(), cols, data)?;
        self.push("gather_rows", out, &[a], Op::GatherRows(a, index))
    }

    /// Row sums grouped by segment; empty segments yield zero rows.
    pub fn segment_sum(&mut self, a: Var, segments: Arc<Segments>) -> Result<Var> {
        let t = self.value(a);
        check_segment_rows("segment_sum", t, &segments)?;
        let out = segment_sum_values(t, &segments);
        self.push("segment_sum", out, &[a], Op::SegmentSum(a, segments))
    }

    /// Softmax of each column taken independently inside every segment,
    /// stabilized by subtracting the per-segment maximum.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<Segments>) -> Result<Var> {
        let t = self.value(a);
        check_segment_rows("segment_softmax", t, &segments)?;
        if let Some(segment) = segments.first_empty() {
            return Err(Error::EmptySegment {
                op: "segment_softmax",
                segment,
            });
        }
        let out = segment_softmax_values(t, &segments);
        self.push("segment_softmax", out, &[a], Op::SegmentSoftmax(a, segments))
    }

    /// Inverted dropout: entries are zeroed with probability `p` and survivors
    /// scaled by `1 / (1 - p)`. Identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout rate must be in [0, 1), got {p}")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(t.rows(), t.cols(), data)?;
        self.push("dropout", out, &[a], Op::Dropout(a, mask))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push("log_softmax", out, &[a], Op::LogSoftmax(a))
    }

    /// Mean negative log-likelihood `-(1/|rows|) Σ_r logp[r, target[r]]` over
    /// the listed rows.
    pub fn nll(&mut self, log_probs: Var, rows: &[usize], targets: &[usize]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Argument("nll needs at least one row".into()));
        }
        let t = self.value(log_probs);
        let mut picks = Vec::with_capacity(rows.len());
        let mut total = 0.0;
        for &r in rows {
            let c = targets[r];
            if r >= t.rows() || c >= t.cols() {
                return Err(Error::shape(
                    "nll",
                    format!("pick ({r}, {c}) outside {:?}", t.shape()),
                ));
            }
            total -= t.get(r, c);
            picks.push((r, c));
        }
        let out = Tensor::scalar(total / rows.len() as f64);
        self.push("nll", out, &[log_probs], Op::Nll { x: log_probs, picks })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, &[a], Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().map(|v| v * v).sum());
        self.push("sum_squares", out, &[a], Op::SumSquares(a))
    }

    /// Column vector of row sums.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let sums = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        self.push("row_sum", Tensor::column(sums), &[a], Op::RowSum(a))
    }

    /// `Σ (a - target)²` against a constant target.
    pub fn squared_error(&mut self, a: Var, target: Tensor) -> Result<Var> {
        let t = self.constant(target);
        let d = self.sub(a, t)?;
        self.sum_squares(d)
    }

    /// Propagates gradients from the `1 × 1` value `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("root must be 1x1, got {shape:?}"),
            ));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g)?;
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, i: usize, g: &Tensor) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut pending: Vec<(Var, Tensor)> = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    pending.push((*a, g.matmul_t(self.value(*b))?));
                }
                if self.wants(*b) {
                    pending.push((*b, self.value(*a).t_matmul(g)?));
                }
            }
            Op::Transpose(a) => pending.push((*a, g.transpose())),
            Op::Add(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                pending.push((*a, zip(g, tb, |g, y| g * y)));
                pending.push((*b, zip(g, ta, |g, x| g * x)));
            }
            Op::Div(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                pending.push((*a, zip(g, tb, |g, y| g / y)));
                let ratio = zip(ta, tb, |x, y| -x / (y * y));
                pending.push((*b, zip(g, &ratio, |g, r| g * r)));
            }
            Op::Scale(a, c) => pending.push((*a, g.map(|v| v * c))),
            Op::ScaleBy { x, s } => {
                let k = self.value(*s).item();
                pending.push((*x, g.map(|v| v * k)));
                let ds: f64 = g.data().iter().zip(self.value(*x).data()).map(|(g, x)| g * x).sum();
                pending.push((*s, Tensor::scalar(ds)));
            }
            Op::RowScale { x, w } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let mut dx = g.clone();
                let mut dw = Vec::with_capacity(tw.rows());
                for r in 0..g.rows() {
                    let k = tw.get(r, 0);
                    dx.row_mut(r).iter_mut().for_each(|v| *v *= k);
                    dw.push(g.row(r).iter().zip(tx.row(r)).map(|(g, x)| g * x).sum());
                }
                pending.push((*x, dx));
                pending.push((*w, Tensor::column(dw)));
            }
            Op::Exp(a) => pending.push((*a, zip(g, out, |g, y| g * y))),
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                let d = zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { g * slope });
                pending.push((*a, d));
            }
            Op::Elu(a) => {
                let d = zip(self.value(*a), out, |x, y| if x > 0.0 { 1.0 } else { y + 1.0 });
                pending.push((*a, zip(g, &d, |g, d| g * d)));
            }
            Op::Sigmoid(a) => pending.push((*a, zip(g, out, |g, y| g * y * (1.0 - y)))),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for v in parts {
                    let cols = self.value(*v).cols();
                    let mut d = Tensor::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    pending.push((*v, d));
                }
            }
            Op::SliceRows(a, start) => {
                let t = self.value(*a);
                let mut d = Tensor::zeros(t.rows(), t.cols());
                let cols = t.cols();
                d.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                pending.push((*a, d));
            }
            Op::GatherRows(a, index) => {
                let t = self.value(*a);
                let cols = t.cols().max(1);
                let mut d = vec![0.0; t.len()];
                for (row, &src) in g.data().chunks_exact(cols).zip(index.iter()) {
                    for (o, v) in d[src * cols..(src + 1) * cols].iter_mut().zip(row) {
                        *o += v;
                    }
                }
                pending.push((*a, Tensor::new(t.rows(), t.cols(), d)?));
            }
            Op::SegmentSum(a, segments) => {
                let cols = g.cols();
                let src = g.data();
                let mut d = Vec::with_capacity(segments.len() * cols);
                for &s in segments.ids() {
                    d.extend_from_slice(&src[s * cols..(s + 1) * cols]);
                }
                pending.push((*a, Tensor::new(segments.len(), cols, d)?));
            }
            Op::SegmentSoftmax(a, segments) => {
                // dx = y ⊙ (dy − Σ_seg dy ⊙ y)
                let gy = zip(g, out, |g, y| g * y);
                let sums = segment_sum_values(&gy, segments);
                let mut d = gy;
                let cols = out.cols().max(1);
                let sums = sums.data();
                for ((drow, yrow), &s) in d
                    .data_mut()
                    .chunks_exact_mut(cols)
                    .zip(out.data().chunks_exact(cols))
                    .zip(segments.ids())
                {
                    for ((dv, yv), sv) in drow.iter_mut().zip(yrow).zip(&sums[s * cols..(s + 1) * cols]) {
                        *dv -= yv * sv;
                    }
                }
                pending.push((*a, d));
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                pending.push((*a, Tensor::new(g.rows(), g.cols(), data)?));
            }
            Op::LogSoftmax(a) => {
                let mut d = g.clone();
                for r in 0..g.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    for (dv, y) in d.row_mut(r).iter_mut().zip(out.row(r)) {
                        *dv -= y.exp() * gsum;
                    }
                }
                pending.push((*a, d));
            }
            Op::Nll { x, picks } => {
                let t = self.value(*x);
                let mut d = Tensor::zeros(t.rows(), t.cols());
                let w = -g.item() / picks.len() as f64;
                for &(r, c) in picks {
                    d.set(r, c, d.get(r, c) + w);
                }
                pending.push((*x, d));
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                pending.push((*a, Tensor::filled(t.rows(), t.cols(), g.item())));
            }
            Op::SumSquares(a) => {
                let k = 2.0 * g.item();
                pending.push((*a, self.value(*a).map(|v| k * v)));
            }
            Op::RowSum(a) => {
                let t = self.value(*a);
                let mut d = Tensor::zeros(t.rows(), t.cols());
                for r in 0..t.rows() {
                    let gv = g.get(r, 0);
                    d.row_mut(r).iter_mut().for_each(|v| *v = gv);
                }
                pending.push((*a, d));
            }
        }
        for (v, d) in pending {
            self.accumulate(v, d);
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

fn check_segment_rows(op: &'static str, t: &Tensor, segments: &Segments) -> Result<()> {
    if t.rows() != segments.len() {
        return Err(Error::shape(
            op,
            format!("{} rows but {} segment ids", t.rows(), segments.len()),
        ));
    }
    Ok(())
}

fn segment_sum_values(t: &Tensor, segments: &Segments) -> Tensor {
    let cols = t.cols();
    let mut out = vec![0.0; segments.count() * cols];
    for (row, &s) in t.data().chunks_exact(cols.max(1)).zip(segments.ids()) {
        for (o, v) in out[s * cols..(s + 1) * cols].iter_mut().zip(row) {
            *o += v;
        }
    }
    Tensor::new(segments.count(), cols, out).expect("length matches shape")
}

fn segment_softmax_values(t: &Tensor, segments: &Segments) -> Tensor {
    let cols = t.cols().max(1);
    let mut max = vec![f64::NEG_INFINITY; segments.count() * cols];
    for (row, &s) in t.data().chunks_exact(cols).zip(segments.ids()) {
        for (m, v) in max[s * cols..(s + 1) * cols].iter_mut().zip(row) {
            *m = m.max(*v);
        }
    }
    let mut out = t.clone();
    let mut sums = vec![0.0; segments.count() * cols];
    for (row, &s) in out.data_mut().chunks_exact_mut(cols).zip(segments.ids()) {
        let range = s * cols..(s + 1) * cols;
        for ((o, m), z) in row.iter_mut().zip(&max[range.clone()]).zip(&mut sums[range]) {
            *o = (*o - m).exp();
            *z += *o;
        }
    }
    for (row, &s) in out.data_mut().chunks_exact_mut(cols).zip(segments.ids()) {
        for (o, z) in row.iter_mut().zip(&sums[s * cols..(s + 1) * cols]) {
            *o /= z;
        }
    }
    out
}
