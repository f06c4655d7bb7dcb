//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes once, newest first, and accumulates
//! adjoints additively so fan-out is handled for free. Nodes are never
//! mutated after being recorded.

use crate::error::MathError;
use crate::math::{sigmoid, soft_threshold_dtau, soft_threshold_dx, soft_threshold_scalar, softmax_in_place};
use crate::tensor::{dot, norm, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    /// Multiply by a `1 x 1` node.
    ScaleBy(Var, Var),
    /// Add a `1 x k` row to every row.
    AddRow(Var, Var),
    /// Multiply every row `i` by entry `i` of an `n x 1` column.
    MulCol(Var, Var),
    Sigmoid(Var),
    SoftThreshold(Var, Var),
    RowNormalize(Var),
    SoftmaxRows(Var),
    L1NormalizeRows(Var),
    HCat(Vec<Var>),
    /// Columns `start..start + width`.
    Columns(Var, usize, usize),
    Sum(Var),
    CountNll(Var, Tensor, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> MathError {
    MathError::ShapeMismatch { op, left: a.shape(), right: b.shape() }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Parameters and constants are both leaves; only the
    /// caller decides which adjoints it reads back.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Tensor, MathError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(name, x, y));
        }
        Ok(x.zip_map(y, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Sum of several equally shaped nodes, folded left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var, MathError> {
        let (&first, rest) = vars.split_first().ok_or(MathError::Empty { op: "add_all" })?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        self.push(out, Op::ScaleConst(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddConst(a))
    }

    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, MathError> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(shape_err("scale_by", self.value(a), sv));
        }
        let out = self.value(a).scale(sv.item());
        Ok(self.push(out, Op::ScaleBy(a, s)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, MathError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x, r));
        }
        let out = Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) + r.get(0, j));
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, MathError> {
        let (x, c) = (self.value(a), self.value(col));
        if c.cols() != 1 || c.rows() != x.rows() {
            return Err(shape_err("mul_col", x, c));
        }
        let out = Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * c.get(i, 0));
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Shrinkage with a trainable `1 x 1` threshold.
    pub fn soft_threshold(&mut self, a: Var, tau: Var) -> Result<Var, MathError> {
        let t = self.value(tau);
        if t.shape() != (1, 1) {
            return Err(shape_err("soft_threshold", self.value(a), t));
        }
        let t = t.item();
        if t < 0.0 || t.is_nan() {
            return Err(MathError::NegativeThreshold(t));
        }
        let out = self.value(a).map(|v| soft_threshold_scalar(v, t));
        Ok(self.push(out, Op::SoftThreshold(a, tau)))
    }

    /// Each row scaled to unit l2 norm; zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let r = norm(x.row(i));
            if r > 0.0 {
                out.row_mut(i).iter_mut().for_each(|v| *v /= r);
            }
        }
        self.push(out, Op::RowNormalize(a))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Row-wise softmax over the entries where `mask` is true; the rest get
    /// zero weight. A row with no kept entry becomes all zeros.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, MathError> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(MathError::ShapeMismatch { op: "masked_softmax_rows", left: x.shape(), right: (mask.len(), 1) });
        }
        let mut out = x.clone();
        let cols = x.cols();
        for i in 0..x.rows() {
            let keep = &mask[i * cols..(i + 1) * cols];
            let row = out.row_mut(i);
            if row.iter().zip(keep).any(|(v, &k)| k && v.is_nan()) {
                row.iter_mut().for_each(|v| *v = f64::NAN);
                continue;
            }
            let max = row.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                row.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let mut total = 0.0;
            for (v, &k) in row.iter_mut().zip(keep) {
                *v = if k { (*v - max).exp() } else { 0.0 };
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        // Masked entries have zero output, so the plain softmax adjoint
        // already gives them zero gradient.
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// Each row divided by its l1 norm; zero rows stay zero.
    pub fn l1_normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let s: f64 = x.row(i).iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                out.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
        }
        self.push(out, Op::L1NormalizeRows(a))
    }

    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var, MathError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::hcat(&tensors)?;
        Ok(self.push(out, Op::HCat(parts.to_vec())))
    }

    pub fn column(&mut self, a: Var, j: usize) -> Result<Var, MathError> {
        self.columns(a, j, 1)
    }

    pub fn columns(&mut self, a: Var, start: usize, width: usize) -> Result<Var, MathError> {
        let x = self.value(a);
        if start + width > x.cols() {
            return Err(MathError::Invalid(format!("columns {start}..{} out of range for {:?}", start + width, x.shape())));
        }
        let out = Tensor::from_fn(x.rows(), width, |i, j| x.get(i, start + j));
        Ok(self.push(out, Op::Columns(a, start, width)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// `sum_ij counts_ij * -ln(max(p_ij, floor))`
    pub fn count_nll(&mut self, p: Var, counts: &Tensor, floor: f64) -> Result<Var, MathError> {
        let pv = self.value(p);
        if pv.shape() != counts.shape() {
            return Err(shape_err("count_nll", pv, counts));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(counts.data())
            .filter(|(_, &c)| c != 0.0)
            .map(|(&q, &c)| -c * q.max(floor).ln())
            .sum();
        Ok(self.push(Tensor::scalar(total), Op::CountNll(p, counts.clone(), floor)))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, MathError> {
        if self.value(output).shape() != (1, 1) {
            return Err(MathError::Invalid("backward requires a 1x1 output".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let da = g.matmul(self.value(*b))?;
                    let db = g.matmul_tn(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::ScaleConst(a, c) => accumulate(&mut grads, *a, g.scale(*c)),
                Op::AddConst(a) => accumulate(&mut grads, *a, g.clone()),
                Op::ScaleBy(a, s) => {
                    let sv = self.value(*s).item();
                    let ds = dot(g.data(), self.value(*a).data());
                    accumulate(&mut grads, *a, g.scale(sv));
                    accumulate(&mut grads, *s, Tensor::scalar(ds));
                }
                Op::AddRow(a, r) => {
                    let mut dr = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in dr.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *r, dr);
                }
                Op::MulCol(a, c) => {
                    let (x, cv) = (self.value(*a), self.value(*c));
                    let da = Tensor::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * cv.get(i, 0));
                    let dc = Tensor::from_fn(g.rows(), 1, |i, _| dot(g.row(i), x.row(i)));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *c, dc);
                }
                Op::Sigmoid(a) => accumulate(&mut grads, *a, g.zip_map(y, |gv, s| gv * s * (1.0 - s))),
                Op::SoftThreshold(a, tau) => {
                    let x = self.value(*a);
                    let t = self.value(*tau).item();
                    let dx = g.zip_map(x, |gv, xv| gv * soft_threshold_dx(xv, t));
                    let dt: f64 = g.data().iter().zip(x.data()).map(|(gv, &xv)| gv * soft_threshold_dtau(xv, t)).sum();
                    accumulate(&mut grads, *a, dx);
                    accumulate(&mut grads, *tau, Tensor::scalar(dt));
                }
                Op::RowNormalize(a) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let r = norm(x.row(i));
                        if r == 0.0 {
                            continue;
                        }
                        let proj = dot(y.row(i), g.row(i));
                        for ((d, gv), yv) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                            *d = (gv - yv * proj) / r;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::SoftmaxRows(a) => {
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let inner = dot(y.row(i), g.row(i));
                        for ((d, gv), yv) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                            *d = yv * (gv - inner);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::L1NormalizeRows(a) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let s: f64 = x.row(i).iter().map(|v| v.abs()).sum();
                        if s == 0.0 {
                            continue;
                        }
                        // y_j = x_j / s  =>  dx_k = g_k / s - sign(x_k) * (g . y) / s
                        let gy = dot(g.row(i), y.row(i));
                        for ((d, gv), xv) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(x.row(i)) {
                            *d = (gv - xv.signum() * gy) / s;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let part = Tensor::from_fn(g.rows(), w, |i, j| g.get(i, offset + j));
                        accumulate(&mut grads, p, part);
                        offset += w;
                    }
                }
                Op::Columns(a, start, width) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        for j in 0..*width {
                            dx.set(i, start + j, g.get(i, j));
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::CountNll(p, counts, floor) => {
                    let pv = self.value(*p);
                    let gs = g.item();
                    let dp = pv.zip_map(counts, |q, c| if c != 0.0 && q > *floor { -gs * c / q } else { 0.0 });
                    accumulate(&mut grads, *p, dp);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
