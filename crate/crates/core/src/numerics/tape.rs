//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the record once in reverse and
//! accumulates gradients into the parameter leaves created by [`Tape::bind`].

use super::tensor::{dot, log_softmax_unchecked, softmax_unchecked, Tensor};
use super::{NumericsError, ParamSet};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Recip(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    SliceCols(Var, usize, usize),
    ConcatRows(Vec<Var>),
    GatherCols(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of evaluated primitives.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed by parameter slot.
#[derive(Debug, Clone)]
pub struct Gradients {
    slots: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self { slots: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.slots[slot]
    }

    pub fn slots(&self) -> &[Tensor] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Tensor] {
        &mut self.slots
    }

    pub fn global_norm(&self) -> f64 {
        self.slots.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.slots {
            g.scale_assign(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().all(Tensor::is_finite)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records one leaf per parameter slot; gradients flow back to these.
    pub fn bind(&mut self, params: &ParamSet) -> Vec<Var> {
        params
            .tensors()
            .iter()
            .enumerate()
            .map(|(slot, t)| self.push(t.clone(), Op::Param(slot)))
            .collect()
    }

    /// Copies the value of `v` into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.val(v).clone();
        self.constant(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (x, y) = (self.val(a), self.val(b));
        if x.shape() != y.shape() {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.val(a).matmul_t(self.val(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let out = self.val(a).zip_map(self.val(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a length-`n` row vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (x, r) = (self.val(a), self.val(row));
        let n = x.cols();
        if r.len() != n {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                left: x.shape().to_vec(),
                right: r.shape().to_vec(),
            });
        }
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += r.data()[i % n];
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let out = self.val(a).zip_map(self.val(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let out = self.val(a).zip_map(self.val(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Multiplies each row of an `[m, n]` matrix by the matching entry of an `[m, 1]` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NumericsError> {
        let (x, c) = (self.val(a), self.val(col));
        if c.len() != x.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "mul_col",
                left: x.shape().to_vec(),
                right: c.shape().to_vec(),
            });
        }
        let n = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= c.data()[i / n];
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    /// Elementwise minimum. Ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("min", a, b)?;
        let out = self.val(a).zip_map(self.val(b), f64::min);
        Ok(self.push(out, Op::Min(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.val(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.val(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a))
    }

    /// Clamp into `[lo, hi]`; zero gradient outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.val(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.val(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.val(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.val(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| 1.0 / x);
        self.push(out, Op::Recip(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let n = x.cols();
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            data.extend(softmax_unchecked(x.row(r)));
        }
        let out = Tensor::new(vec![x.rows(), n], data).expect("softmax shape");
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let n = x.cols();
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            data.extend(log_softmax_unchecked(x.row(r)));
        }
        let out = Tensor::new(vec![x.rows(), n], data).expect("log_softmax shape");
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// `[m, n] → [m, 1]` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let data: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let out = Tensor::new(vec![x.rows(), 1], data).expect("sum_rows shape");
        self.push(out, Op::SumRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.val(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        let x = self.val(a);
        if x.is_empty() {
            return Err(NumericsError::Empty("mean"));
        }
        let out = Tensor::scalar(x.sum() / x.len() as f64);
        Ok(self.push(out, Op::Mean(a)))
    }

    /// Columns `[start, end)` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let x = self.val(a);
        if start > end || end > x.cols() {
            return Err(NumericsError::ShapeMismatch {
                op: "slice_cols",
                left: x.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(x.rows() * (end - start));
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..end]);
        }
        let out = Tensor::new(vec![x.rows(), end - start], data)?;
        Ok(self.push(out, Op::SliceCols(a, start, end)))
    }

    /// Stacks matrices with equal column count on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::Empty("concat_rows"))?;
        let cols = self.val(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.val(p);
            if x.cols() != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    left: vec![rows, cols],
                    right: x.shape().to_vec(),
                });
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Picks column `index[r]` from row `r`, giving an `[m, 1]` column.
    pub fn gather_cols(&mut self, a: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let x = self.val(a);
        if index.len() != x.rows() || index.iter().any(|&i| i >= x.cols()) {
            return Err(NumericsError::ShapeMismatch {
                op: "gather_cols",
                left: x.shape().to_vec(),
                right: vec![index.len()],
            });
        }
        let data: Vec<f64> = index.iter().enumerate().map(|(r, &c)| x.row(r)[c]).collect();
        let out = Tensor::new(vec![index.len(), 1], data)?;
        Ok(self.push(out, Op::GatherCols(a, index.to_vec())))
    }

    /// Averages the rows of `a` that share a group id, giving `[groups, n]`.
    pub fn segment_mean(
        &mut self,
        a: Var,
        group_of_row: &[usize],
        groups: usize,
    ) -> Result<Var, NumericsError> {
        let x = self.val(a);
        if group_of_row.len() != x.rows() || group_of_row.iter().any(|&g| g >= groups) {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_mean",
                left: x.shape().to_vec(),
                right: vec![group_of_row.len(), groups],
            });
        }
        let n = x.cols();
        let counts = group_counts(group_of_row, groups);
        if counts.contains(&0) {
            return Err(NumericsError::Empty("segment_mean group"));
        }
        let mut data = vec![0.0; groups * n];
        for (r, &g) in group_of_row.iter().enumerate() {
            for (j, v) in x.row(r).iter().enumerate() {
                data[g * n + j] += v / counts[g] as f64;
            }
        }
        let out = Tensor::new(vec![groups, n], data)?;
        Ok(self.push(out, Op::SegmentMean(a, group_of_row.to_vec(), groups)))
    }

    /// Reverse pass from a scalar node. Every recorded op is visited once,
    /// last to first.
    pub fn backward(&self, output: Var, params: &ParamSet) -> Result<Gradients, NumericsError> {
        if self.nodes.is_empty() || output.0 >= self.nodes.len() {
            return Err(NumericsError::NoForward);
        }
        if self.nodes[output.0].value.len() != 1 {
            return Err(NumericsError::NonScalarOutput(
                self.nodes[output.0].value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(self.nodes[output.0].value.shape(), 1.0));
        let mut out = Gradients::zeros_like(params);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => {
                    let acc = out.slots.get_mut(*slot).ok_or(NumericsError::NoForward)?;
                    acc.add_assign(&g);
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; n * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g.data()[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let arow = av.row(i);
                            let brow = bv.row(j);
                            for t in 0..k {
                                ga[i * k + t] += gij * brow[t];
                                gb[j * k + t] += gij * arow[t];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                    accumulate(&mut grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let rv = self.val(*row);
                    let n = rv.len();
                    let mut gr = vec![0.0; n];
                    for (i, v) in g.data().iter().enumerate() {
                        gr[i % n] += v;
                    }
                    accumulate(&mut grads, *row, Tensor::new(rv.shape().to_vec(), gr)?);
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.val(*b), |gv, bv| gv * bv);
                    let gb = g.zip_map(self.val(*a), |gv, av| gv * av);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.val(*a), self.val(*col));
                    let n = av.cols();
                    let mut ga = g.clone();
                    let mut gc = vec![0.0; cv.len()];
                    for (i, v) in ga.data_mut().iter_mut().enumerate() {
                        gc[i / n] += *v * av.data()[i];
                        *v *= cv.data()[i / n];
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *col, Tensor::new(cv.shape().to_vec(), gc)?);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    for i in 0..av.len() {
                        if av.data()[i] <= bv.data()[i] {
                            gb.data_mut()[i] = 0.0;
                        } else {
                            ga.data_mut()[i] = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|v| v * k)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.val(*a), |gv, x| {
                        if x < *lo || x > *hi {
                            0.0
                        } else {
                            gv
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |gv, y| gv * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.val(*a), |gv, x| gv / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.val(*a), |gv, x| 2.0 * gv * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Recip(a) => {
                    let ga = g.zip_map(&node.value, |gv, y| -gv * y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let n = y.cols();
                    let mut ga = g.clone();
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = dot(yr, gr);
                        for j in 0..n {
                            ga.data_mut()[r * n + j] = yr[j] * (gr[j] - inner);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let n = y.cols();
                    let mut ga = g.clone();
                    for r in 0..y.rows() {
                        let gr = g.row(r);
                        let total: f64 = gr.iter().sum();
                        for (j, (gj, yj)) in gr.iter().zip(y.row(r)).enumerate() {
                            ga.data_mut()[r * n + j] = gj - yj.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let av = self.val(*a);
                    let n = av.cols();
                    let data = (0..av.len()).map(|i| g.data()[i / n]).collect();
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), data)?);
                }
                Op::Sum(a) => {
                    let av = self.val(*a);
                    accumulate(&mut grads, *a, Tensor::filled(av.shape(), g.item()));
                }
                Op::Mean(a) => {
                    let av = self.val(*a);
                    let k = g.item() / av.len() as f64;
                    accumulate(&mut grads, *a, Tensor::filled(av.shape(), k));
                }
                Op::SliceCols(a, start, end) => {
                    let av = self.val(*a);
                    let (n, w) = (av.cols(), end - start);
                    let mut ga = Tensor::zeros(&[av.rows(), n]);
                    for r in 0..av.rows() {
                        ga.data_mut()[r * n + start..r * n + end]
                            .copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga.into_data())?);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.val(p);
                        let len = pv.len();
                        let part = g.data()[offset..offset + len].to_vec();
                        accumulate(&mut grads, p, Tensor::new(pv.shape().to_vec(), part)?);
                        offset += len;
                    }
                }
                Op::GatherCols(a, index) => {
                    let av = self.val(*a);
                    let n = av.cols();
                    let mut ga = Tensor::zeros(av.shape());
                    for (r, &c) in index.iter().enumerate() {
                        ga.data_mut()[r * n + c] = g.data()[r];
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, group_of_row, groups) => {
                    let av = self.val(*a);
                    let n = av.cols();
                    let counts = group_counts(group_of_row, *groups);
                    let mut ga = Tensor::zeros(av.shape());
                    for (r, &grp) in group_of_row.iter().enumerate() {
                        for j in 0..n {
                            ga.data_mut()[r * n + j] = g.data()[grp * n + j] / counts[grp] as f64;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(out)
    }
}

fn group_counts(group_of_row: &[usize], groups: usize) -> Vec<usize> {
    let mut counts = vec![0usize; groups];
    for &g in group_of_row {
        counts[g] += 1;
    }
    counts
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
