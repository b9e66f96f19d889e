//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one training step in topological
//! order (define-by-run); [`Tensor`] is a cheap handle into the tape. Calling
//! [`Tensor::backward`] on a scalar walks the recorded operations once in
//! reverse and accumulates gradients into every reachable tensor that
//! requires them. Tapes are rebuilt from scratch each step and are confined
//! to a single thread.
//!
//! Anything that must not receive gradients (Sinkhorn targets, negative-pair
//! weights, prototype renormalization) is computed on raw [`Matrix`] values
//! and enters the tape only as a constant.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{PgclError, Result};
use crate::matrix::Matrix;

/// Pooling flavor used by [`Tensor::segment_pool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Sum,
    Mean,
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRowBroadcast(usize, usize),
    MulConst(usize, Rc<Matrix>),
    Exp(usize),
    Log(usize),
    Relu(usize),
    Neg(usize),
    Scale(usize, f64),
    ClampMin(usize, f64),
    RowSoftmax { x: usize, temperature: f64 },
    SumRows(usize),
    SumCols(usize),
    SumAll(usize),
    Mean(usize),
    L2NormalizeRows(usize),
    L2NormalizeCols(usize),
    NeighborSum { x: usize, neighbors: Rc<Vec<Vec<usize>>> },
    SegmentPool { x: usize, segments: Rc<Vec<(usize, usize)>>, kind: PoolKind },
    ConcatCols(Vec<usize>),
    SliceRows { x: usize, start: usize, len: usize },
    DiagCol(usize),
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// The gradient tape for one training step.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// A handle to one recorded matrix value on a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Tensor(id={}, shape={}x{})", self.id, r, c)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A trainable leaf: participates in backward().
    pub fn var(&self, value: Matrix) -> Tensor {
        self.push(value, true, Op::Leaf)
    }

    /// A constant leaf: never receives gradients.
    pub fn constant(&self, value: Matrix) -> Tensor {
        self.push(value, false, Op::Leaf)
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, requires_grad: bool, op: Op) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor {
            tape: self.clone(),
            id,
        }
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Concatenate tensors side by side (all with equal row counts).
    pub fn concat_cols(&self, parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = parts[0].rows();
        let mut cols = 0;
        for p in parts {
            assert!(self.same_tape(&p.tape), "tensors from different tapes");
            if p.rows() != rows {
                return Err(shape_err("concat_cols", (rows, cols), p.shape()));
            }
            cols += p.cols();
        }
        let inner = self.inner.borrow();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let v = &inner.nodes[p.id].value;
            for i in 0..rows {
                out.row_mut(i)[offset..offset + v.cols()].copy_from_slice(v.row(i));
            }
            offset += v.cols();
        }
        let requires = parts.iter().any(|p| p.requires_grad());
        drop(inner);
        Ok(self.push(out, requires, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> PgclError {
    PgclError::ShapeMismatch {
        op,
        lhs: format!("{}x{}", lhs.0, lhs.1),
        rhs: format!("{}x{}", rhs.0, rhs.1),
    }
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        let inner = self.tape.inner.borrow();
        inner.nodes[self.id].value.shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    /// Identifier of this tensor's node on the tape.
    pub fn tape_id(&self) -> usize {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    /// Copy of the stored value.
    pub fn value(&self) -> Matrix {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    /// Run `f` against the stored value without copying it.
    pub fn with_value<R>(&self, f: impl FnOnce(&Matrix) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.id].value)
    }

    /// Accumulated gradient, if backward() has reached this tensor.
    pub fn grad(&self) -> Option<Matrix> {
        self.tape.inner.borrow().nodes[self.id].grad.clone()
    }

    /// Value of a 1×1 tensor.
    pub fn scalar_value(&self) -> f64 {
        self.with_value(|v| v.scalar_value())
    }

    fn unary(&self, value: Matrix, op: Op) -> Tensor {
        self.tape.push(value, self.requires_grad(), op)
    }

    fn binary(&self, other: &Tensor, value: Matrix, op: Op) -> Tensor {
        assert!(
            self.tape.same_tape(&other.tape),
            "tensors from different tapes"
        );
        self.tape
            .push(value, self.requires_grad() || other.requires_grad(), op)
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.shape();
        let (k2, n) = other.shape();
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let value = self.with_value(|a| other.with_value(|b| a.matmul(b)));
        Ok(self.binary(other, value, Op::Matmul(self.id, other.id)))
    }

    pub fn transpose(&self) -> Tensor {
        let value = self.with_value(|v| v.transpose());
        self.unary(value, Op::Transpose(self.id))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err("add", self.shape(), other.shape()));
        }
        let value = self.with_value(|a| other.with_value(|b| a.add(b)));
        Ok(self.binary(other, value, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err("sub", self.shape(), other.shape()));
        }
        let value = self.with_value(|a| other.with_value(|b| a.sub(b)));
        Ok(self.binary(other, value, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err("mul", self.shape(), other.shape()));
        }
        let value = self.with_value(|a| other.with_value(|b| a.mul_elem(b)));
        Ok(self.binary(other, value, Op::Mul(self.id, other.id)))
    }

    /// Elementwise quotient; every divisor entry must be nonzero.
    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err("div", self.shape(), other.shape()));
        }
        let ok = other.with_value(|b| b.data().iter().all(|&x| x != 0.0));
        if !ok {
            return Err(PgclError::NumericDomain {
                op: "div",
                detail: "division by zero entry".into(),
            });
        }
        let value = self.with_value(|a| other.with_value(|b| a.div_elem(b)));
        Ok(self.binary(other, value, Op::Div(self.id, other.id)))
    }

    /// Add a 1×cols row vector to every row of `self`.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (r, c) = row.shape();
        if r != 1 || c != self.cols() {
            return Err(shape_err("add_row", self.shape(), (r, c)));
        }
        let value = self.with_value(|a| row.with_value(|b| a.add_row_broadcast(b)));
        Ok(self.binary(row, value, Op::AddRowBroadcast(self.id, row.id)))
    }

    /// Elementwise product with an off-tape constant matrix.
    pub fn mul_const(&self, m: &Matrix) -> Result<Tensor> {
        if self.shape() != m.shape() {
            return Err(shape_err("mul_const", self.shape(), m.shape()));
        }
        let value = self.with_value(|a| a.mul_elem(m));
        Ok(self.unary(value, Op::MulConst(self.id, Rc::new(m.clone()))))
    }

    pub fn exp(&self) -> Tensor {
        let value = self.with_value(|v| v.map(f64::exp));
        self.unary(value, Op::Exp(self.id))
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&self) -> Result<Tensor> {
        let ok = self.with_value(|v| v.data().iter().all(|&x| x > 0.0));
        if !ok {
            return Err(PgclError::NumericDomain {
                op: "log",
                detail: "operand has entries <= 0".into(),
            });
        }
        let value = self.with_value(|v| v.map(f64::ln));
        Ok(self.unary(value, Op::Log(self.id)))
    }

    pub fn relu(&self) -> Tensor {
        let value = self.with_value(|v| v.map(|x| x.max(0.0)));
        self.unary(value, Op::Relu(self.id))
    }

    pub fn neg(&self) -> Tensor {
        let value = self.with_value(|v| v.scale(-1.0));
        self.unary(value, Op::Neg(self.id))
    }

    /// Multiply every entry by a constant.
    pub fn scale(&self, c: f64) -> Tensor {
        let value = self.with_value(|v| v.scale(c));
        self.unary(value, Op::Scale(self.id, c))
    }

    /// Elementwise `max(x, c)`; gradient passes through unclamped entries.
    pub fn clamp_min(&self, c: f64) -> Tensor {
        let value = self.with_value(|v| v.map(|x| x.max(c)));
        self.unary(value, Op::ClampMin(self.id, c))
    }

    /// Row-wise softmax of `self / temperature`, max-subtracted for stability.
    pub fn row_softmax(&self, temperature: f64) -> Result<Tensor> {
        if temperature <= 0.0 {
            return Err(PgclError::NumericDomain {
                op: "row_softmax",
                detail: format!("temperature {temperature} must be positive"),
            });
        }
        let value = self.with_value(|v| v.row_softmax(temperature));
        Ok(self.unary(
            value,
            Op::RowSoftmax {
                x: self.id,
                temperature,
            },
        ))
    }

    /// Sum each row, producing an n×1 column.
    pub fn sum_rows(&self) -> Tensor {
        let value = self.with_value(|v| {
            Matrix::from_vec(v.rows(), 1, v.row_sums())
        });
        self.unary(value, Op::SumRows(self.id))
    }

    /// Sum each column, producing a 1×k row.
    pub fn sum_cols(&self) -> Tensor {
        let value = self.with_value(|v| Matrix::from_vec(1, v.cols(), v.col_sums()));
        self.unary(value, Op::SumCols(self.id))
    }

    /// Sum of all entries, as a 1×1 tensor.
    pub fn sum_all(&self) -> Tensor {
        let value = self.with_value(|v| Matrix::scalar(v.sum()));
        self.unary(value, Op::SumAll(self.id))
    }

    /// Mean of all entries, as a 1×1 tensor.
    pub fn mean(&self) -> Tensor {
        let value = self.with_value(|v| Matrix::scalar(v.mean()));
        self.unary(value, Op::Mean(self.id))
    }

    /// Scale each row to unit L2 norm (zero rows pass through unchanged).
    pub fn l2_normalize_rows(&self) -> Tensor {
        let value = self.with_value(|v| v.l2_normalize_rows().0);
        self.unary(value, Op::L2NormalizeRows(self.id))
    }

    /// Scale each column to unit L2 norm (zero columns pass through unchanged).
    pub fn l2_normalize_cols(&self) -> Tensor {
        let value = self.with_value(|v| v.l2_normalize_cols().0);
        self.unary(value, Op::L2NormalizeCols(self.id))
    }

    /// Row v of the output is the sum of the rows listed in `neighbors[v]`.
    pub fn neighbor_sum(&self, neighbors: Rc<Vec<Vec<usize>>>) -> Result<Tensor> {
        let (n, c) = self.shape();
        if neighbors.len() != n {
            return Err(shape_err("neighbor_sum", (n, c), (neighbors.len(), 0)));
        }
        let value = self.with_value(|v| {
            let mut out = Matrix::zeros(n, c);
            for (vtx, nbrs) in neighbors.iter().enumerate() {
                for &u in nbrs {
                    let src = v.row(u);
                    for (o, s) in out.row_mut(vtx).iter_mut().zip(src) {
                        *o += s;
                    }
                }
            }
            out
        });
        Ok(self.unary(
            value,
            Op::NeighborSum {
                x: self.id,
                neighbors,
            },
        ))
    }

    /// Pool contiguous row ranges; `segments[s]` is the half-open node range
    /// of segment s. Produces one output row per segment.
    pub fn segment_pool(&self, segments: Rc<Vec<(usize, usize)>>, kind: PoolKind) -> Result<Tensor> {
        let (n, c) = self.shape();
        for &(start, end) in segments.iter() {
            if start >= end || end > n {
                return Err(PgclError::Contract(format!(
                    "segment_pool: bad range {start}..{end} for {n} rows"
                )));
            }
        }
        let value = self.with_value(|v| {
            let mut out = Matrix::zeros(segments.len(), c);
            for (s, &(start, end)) in segments.iter().enumerate() {
                for i in start..end {
                    let src = v.row(i);
                    for (o, x) in out.row_mut(s).iter_mut().zip(src) {
                        *o += x;
                    }
                }
                if kind == PoolKind::Mean {
                    let inv = 1.0 / (end - start) as f64;
                    for o in out.row_mut(s) {
                        *o *= inv;
                    }
                }
            }
            out
        });
        Ok(self.unary(
            value,
            Op::SegmentPool {
                x: self.id,
                segments,
                kind,
            },
        ))
    }

    /// Rows `start..start+len` as a new tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let (n, c) = self.shape();
        if start + len > n {
            return Err(PgclError::Contract(format!(
                "slice_rows: {start}..{} out of {n} rows",
                start + len
            )));
        }
        let value = self.with_value(|v| {
            let mut out = Matrix::zeros(len, c);
            for i in 0..len {
                out.row_mut(i).copy_from_slice(v.row(start + i));
            }
            out
        });
        Ok(self.unary(
            value,
            Op::SliceRows {
                x: self.id,
                start,
                len,
            },
        ))
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diag_col(&self) -> Result<Tensor> {
        let (n, c) = self.shape();
        if n != c {
            return Err(shape_err("diag_col", (n, c), (n, n)));
        }
        let value = self.with_value(|v| {
            Matrix::from_vec(n, 1, (0..n).map(|i| v.get(i, i)).collect())
        });
        Ok(self.unary(value, Op::DiagCol(self.id)))
    }

    /// Backpropagate from a scalar. Each call propagates a fresh unit seed
    /// and adds the result into the stored gradients, so repeated calls on
    /// the same tape accumulate.
    pub fn backward(&self) -> Result<()> {
        {
            let inner = self.tape.inner.borrow();
            let v = &inner.nodes[self.id].value;
            if !v.is_scalar() {
                return Err(PgclError::Contract(format!(
                    "backward requires a 1x1 loss, got {}x{}",
                    v.rows(),
                    v.cols()
                )));
            }
        }
        let mut inner = self.tape.inner.borrow_mut();
        let nodes = &mut inner.nodes;
        let mut pass: Vec<Option<Matrix>> = vec![None; nodes.len()];
        if nodes[self.id].requires_grad {
            pass[self.id] = Some(Matrix::scalar(1.0));
        }
        for id in (0..=self.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(grad) = pass[id].clone() else {
                continue;
            };
            step_backward(nodes, &mut pass, id, &grad);
        }
        for (node, grad) in nodes.iter_mut().zip(pass) {
            if let Some(g) = grad {
                match &mut node.grad {
                    Some(old) => old.add_assign(&g),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// Add `delta` into this pass's gradient slot of `id` if the node wants
/// gradients.
fn accumulate(nodes: &[Node], pass: &mut [Option<Matrix>], id: usize, delta: &Matrix) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut pass[id] {
        Some(g) => g.add_assign(delta),
        None => pass[id] = Some(delta.clone()),
    }
}

fn step_backward(nodes: &[Node], pass: &mut [Option<Matrix>], id: usize, g: &Matrix) {
    // Ops are recorded append-only, so inputs always precede `id`.
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (a, b) = (*a, *b);
            let ga = g.matmul(&nodes[b].value.transpose());
            let gb = nodes[a].value.transpose().matmul(g);
            accumulate(nodes, pass, a, &ga);
            accumulate(nodes, pass, b, &gb);
        }
        Op::Transpose(x) => {
            let x = *x;
            let gx = g.transpose();
            accumulate(nodes, pass, x, &gx);
        }
        Op::Add(a, b) => {
            let (a, b) = (*a, *b);
            accumulate(nodes, pass, a, g);
            accumulate(nodes, pass, b, g);
        }
        Op::Sub(a, b) => {
            let (a, b) = (*a, *b);
            accumulate(nodes, pass, a, g);
            let gb = g.scale(-1.0);
            accumulate(nodes, pass, b, &gb);
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            let ga = g.mul_elem(&nodes[b].value);
            let gb = g.mul_elem(&nodes[a].value);
            accumulate(nodes, pass, a, &ga);
            accumulate(nodes, pass, b, &gb);
        }
        Op::Div(a, b) => {
            let (a, b) = (*a, *b);
            let ga = g.div_elem(&nodes[b].value);
            // d(a/b)/db = -a / b^2 = -(a/b) / b
            let gb = g
                .mul_elem(&nodes[id].value)
                .div_elem(&nodes[b].value)
                .scale(-1.0);
            accumulate(nodes, pass, a, &ga);
            accumulate(nodes, pass, b, &gb);
        }
        Op::AddRowBroadcast(x, row) => {
            let (x, row) = (*x, *row);
            accumulate(nodes, pass, x, g);
            let grow = Matrix::from_vec(1, g.cols(), g.col_sums());
            accumulate(nodes, pass, row, &grow);
        }
        Op::MulConst(x, m) => {
            let x = *x;
            let gx = g.mul_elem(m);
            accumulate(nodes, pass, x, &gx);
        }
        Op::Exp(x) => {
            let x = *x;
            let gx = g.mul_elem(&nodes[id].value);
            accumulate(nodes, pass, x, &gx);
        }
        Op::Log(x) => {
            let x = *x;
            let gx = g.zip(&nodes[x].value, |gv, xv| gv / xv);
            accumulate(nodes, pass, x, &gx);
        }
        Op::Relu(x) => {
            let x = *x;
            let gx = g.zip(&nodes[x].value, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
            accumulate(nodes, pass, x, &gx);
        }
        Op::Neg(x) => {
            let x = *x;
            let gx = g.scale(-1.0);
            accumulate(nodes, pass, x, &gx);
        }
        Op::Scale(x, c) => {
            let (x, c) = (*x, *c);
            let gx = g.scale(c);
            accumulate(nodes, pass, x, &gx);
        }
        Op::ClampMin(x, c) => {
            let (x, c) = (*x, *c);
            let gx = g.zip(&nodes[x].value, |gv, xv| if xv >= c { gv } else { 0.0 });
            accumulate(nodes, pass, x, &gx);
        }
        Op::RowSoftmax { x, temperature } => {
            let (x, temp) = (*x, *temperature);
            let y = &nodes[id].value;
            let mut gx = Matrix::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let yr = y.row(i);
                let gr = g.row(i);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..y.cols() {
                    gx.set(i, j, yr[j] * (gr[j] - dot) / temp);
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::SumRows(x) => {
            let x = *x;
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for i in 0..n {
                let gi = g.get(i, 0);
                for v in gx.row_mut(i) {
                    *v = gi;
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::SumCols(x) => {
            let x = *x;
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for i in 0..n {
                gx.row_mut(i).copy_from_slice(g.row(0));
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::SumAll(x) => {
            let x = *x;
            let (n, c) = nodes[x].value.shape();
            let gx = Matrix::filled(n, c, g.scalar_value());
            accumulate(nodes, pass, x, &gx);
        }
        Op::Mean(x) => {
            let x = *x;
            let (n, c) = nodes[x].value.shape();
            let gx = Matrix::filled(n, c, g.scalar_value() / (n * c) as f64);
            accumulate(nodes, pass, x, &gx);
        }
        Op::L2NormalizeRows(x) => {
            let x = *x;
            let input = &nodes[x].value;
            let y = &nodes[id].value;
            let mut gx = Matrix::zeros(input.rows(), input.cols());
            for i in 0..input.rows() {
                let norm = input.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    gx.row_mut(i).copy_from_slice(g.row(i));
                } else {
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..input.cols() {
                        gx.set(i, j, (gr[j] - yr[j] * dot) / norm);
                    }
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::L2NormalizeCols(x) => {
            let x = *x;
            let input = &nodes[x].value;
            let y = &nodes[id].value;
            let (n, c) = input.shape();
            let mut gx = Matrix::zeros(n, c);
            for j in 0..c {
                let norm = (0..n).map(|i| input.get(i, j).powi(2)).sum::<f64>().sqrt();
                if norm == 0.0 {
                    for i in 0..n {
                        gx.set(i, j, g.get(i, j));
                    }
                } else {
                    let dot: f64 = (0..n).map(|i| y.get(i, j) * g.get(i, j)).sum();
                    for i in 0..n {
                        gx.set(i, j, (g.get(i, j) - y.get(i, j) * dot) / norm);
                    }
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::NeighborSum { x, neighbors } => {
            let x = *x;
            let neighbors = Rc::clone(neighbors);
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for (vtx, nbrs) in neighbors.iter().enumerate() {
                let gr = g.row(vtx).to_vec();
                for &u in nbrs {
                    for (o, gv) in gx.row_mut(u).iter_mut().zip(&gr) {
                        *o += gv;
                    }
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::SegmentPool { x, segments, kind } => {
            let (x, kind) = (*x, *kind);
            let segments = Rc::clone(segments);
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for (s, &(start, end)) in segments.iter().enumerate() {
                let scalefac = match kind {
                    PoolKind::Sum => 1.0,
                    PoolKind::Mean => 1.0 / (end - start) as f64,
                };
                for i in start..end {
                    for (o, gv) in gx.row_mut(i).iter_mut().zip(g.row(s)) {
                        *o += gv * scalefac;
                    }
                }
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::ConcatCols(parts) => {
            let parts = parts.clone();
            let mut offset = 0;
            for p in parts {
                let (n, c) = nodes[p].value.shape();
                let mut gp = Matrix::zeros(n, c);
                for i in 0..n {
                    gp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                }
                offset += c;
                accumulate(nodes, pass, p, &gp);
            }
        }
        Op::SliceRows { x, start, len } => {
            let (x, start, len) = (*x, *start, *len);
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for i in 0..len {
                gx.row_mut(start + i).copy_from_slice(g.row(i));
            }
            accumulate(nodes, pass, x, &gx);
        }
        Op::DiagCol(x) => {
            let x = *x;
            let (n, c) = nodes[x].value.shape();
            let mut gx = Matrix::zeros(n, c);
            for i in 0..n {
                gx.set(i, i, g.get(i, 0));
            }
            accumulate(nodes, pass, x, &gx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_of(tape: &Tape, rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        tape.var(Matrix::from_vec(rows, cols, data))
    }

    #[test]
    fn matmul_values_and_grads() {
        let tape = Tape::new();
        let a = tensor_of(&tape, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = tensor_of(&tape, 2, 1, vec![1.0, 1.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value().data(), &[3.0, 7.0]);
        let loss = c.sum_all();
        loss.backward().unwrap();
        // d(sum)/dA = 1 * b^T broadcast, d(sum)/db = column sums of A
        assert_eq!(a.grad().unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.grad().unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let tape = Tape::new();
        let a = tensor_of(&tape, 2, 3, vec![0.0; 6]);
        let b = tensor_of(&tape, 2, 2, vec![0.0; 4]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn relu_and_exp_values() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 3, vec![-1.0, 2.0, 0.0]);
        assert_eq!(x.relu().value().data(), &[0.0, 2.0, 0.0]);
        assert_eq!(tensor_of(&tape, 1, 1, vec![0.0]).exp().value().data(), &[1.0]);
    }

    #[test]
    fn log_gradient_matches_derivative() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 1, vec![2.0]);
        let y = x.log().unwrap();
        y.backward().unwrap();
        assert!((x.grad().unwrap().scalar_value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_domain_error() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 2, vec![1.0, 0.0]);
        assert!(matches!(
            x.log(),
            Err(PgclError::NumericDomain { op: "log", .. })
        ));
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 3, vec![0.0, 0.0, 0.0]);
        let p = x.row_softmax(1.0).unwrap();
        for &v in p.value().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let x2 = tensor_of(&tape, 1, 2, vec![2.0f64.ln(), 0.0]);
        let p2 = x2.row_softmax(1.0).unwrap().value();
        assert!((p2.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 2, 1, vec![1.0, 2.0]);
        assert!(matches!(x.backward(), Err(PgclError::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 1, vec![3.0]);
        let y = x.scale(2.0);
        y.backward().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().scalar_value(), 4.0);
    }

    #[test]
    fn constants_do_not_collect_grads() {
        let tape = Tape::new();
        let x = tape.var(Matrix::scalar(2.0));
        let c = tape.constant(Matrix::scalar(5.0));
        let y = x.mul(&c).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().scalar_value(), 5.0);
        assert!(c.grad().is_none());
    }

    #[test]
    fn chain_two_layer_matches_product_of_jacobians() {
        // f(x) = mean(relu(x W1) W2); checked against central differences.
        let tape = Tape::new();
        let x = tensor_of(&tape, 2, 3, vec![0.4, -0.2, 0.9, 1.3, 0.1, -0.7]);
        let w1 = tensor_of(&tape, 3, 4, (0..12).map(|i| 0.1 * (i as f64) - 0.5).collect());
        let w2 = tensor_of(&tape, 4, 2, (0..8).map(|i| 0.2 * (i as f64) - 0.7).collect());
        let out = x.matmul(&w1).unwrap().relu().matmul(&w2).unwrap().mean();
        out.backward().unwrap();
        let analytic = w1.grad().unwrap();

        let f = |w1v: &Matrix| {
            let t = Tape::new();
            let x = tensor_of(&t, 2, 3, vec![0.4, -0.2, 0.9, 1.3, 0.1, -0.7]);
            let w1 = t.var(w1v.clone());
            let w2 = tensor_of(&t, 4, 2, (0..8).map(|i| 0.2 * (i as f64) - 0.7).collect());
            x.matmul(&w1).unwrap().relu().matmul(&w2).unwrap().mean().scalar_value()
        };
        let base = w1.value();
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..4 {
                let mut plus = base.clone();
                plus.set(i, j, base.get(i, j) + h);
                let mut minus = base.clone();
                minus.set(i, j, base.get(i, j) - h);
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = analytic.get(i, j);
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    ((fd - an) / denom).abs() < 1e-4,
                    "grad mismatch at ({i},{j}): fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn normalize_rows_produces_unit_rows() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 1, 2, vec![3.0, 4.0]);
        let y = x.l2_normalize_rows().value();
        assert!((y.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((y.get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let tape = Tape::new();
        let x = tensor_of(&tape, 4, 2, (0..8).map(|i| i as f64).collect());
        let top = x.slice_rows(0, 2).unwrap();
        let bottom = x.slice_rows(2, 2).unwrap();
        assert_eq!(top.value().data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(bottom.value().data(), &[4.0, 5.0, 6.0, 7.0]);
        let joined = tape.concat_cols(&[top, bottom]).unwrap();
        assert_eq!(joined.shape(), (2, 4));
    }
}
