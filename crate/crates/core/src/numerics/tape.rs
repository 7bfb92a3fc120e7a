//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value to the [`Tape`];
//! inputs always precede outputs, so walking the node list backwards is a
//! reverse topological order. A tape is built for one forward pass and can
//! be backpropagated exactly once; a second call is rejected.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::param::{ParamId, Parameter};
use super::sparse::SparseMatrix;
use super::tensor::matmul_raw;
use super::Tensor;

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
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Arc<[usize]>),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ScaleRows(Var, Var),
    AddRowVector(Var, Var),
    SegmentSum(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    SparseMatMul(Var, Arc<SparseMatrix>),
    Covariance(Var, Vec<f64>),
    MseRows(Var, Var),
    Diag(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Operation recorder for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Result of [`Tape::backward`]: the gradient of the loss with respect to
/// every tracked node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Vec<usize>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a parameter, summed over all the places it entered the
    /// tape. `None` when it never did or is not reachable from the loss.
    pub fn for_param(&self, id: ParamId) -> Option<Vec<f64>> {
        let nodes = self.params.get(&id)?;
        let mut total: Option<Vec<f64>> = None;
        for &n in nodes {
            if let Some(g) = self.grads[n].as_deref() {
                match total.as_mut() {
                    None => total = Some(g.to_vec()),
                    Some(t) => t.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                }
            }
        }
        total
    }

    /// Stores `∂loss/∂p` into each parameter; unreachable parameters get zeros.
    pub fn write_to(&self, params: &mut [&mut Parameter]) -> Result<()> {
        for p in params.iter_mut() {
            let g = self
                .for_param(p.id())
                .unwrap_or_else(|| vec![0.0; p.tensor().numel()]);
            p.set_grad(g)?;
        }
        Ok(())
    }
}

fn broadcast_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::dim(format!(
            "{}: shapes {:?} and {:?} are not broadcast-compatible",
            what,
            a.shape(),
            b.shape()
        )))
    }
}

/// Value at flat index `i` when `t` may be a broadcast scalar.
#[inline]
fn bget(t: &[f64], i: usize) -> f64 {
    if t.len() == 1 {
        t[0]
    } else {
        t[i]
    }
}

fn check_segments(segments: &[usize]) -> Result<()> {
    if segments.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::contract("segment ids must be sorted non-decreasing"));
    }
    Ok(())
}

pub(crate) fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Records a snapshot of `p`; gradients flow back to it by id.
    pub fn param(&mut self, p: &Parameter) -> Var {
        let mut value = p.tensor().clone();
        value.clear_grad();
        self.push(value, Op::Param(p.id()), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::dim(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let out = matmul_raw(ta.values(), tb.values(), n, k, m);
        let t = self.tracked(&[a, b]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), t))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(ta, tb, what)?;
        let n: usize = shape.iter().product();
        let (va, vb) = (ta.values(), tb.values());
        let out = (0..n).map(|i| f(bget(va, i), bget(vb, i))).collect();
        Ok((Tensor::new(shape, out)?, self.tracked(&[a, b])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, tr) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), tr))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, tr) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), tr))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, tr) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), tr))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        let tr = self.tracked(&[a]);
        self.push(t, op, tr)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Elu(a), elu)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| leaky_relu(x, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let tr = self.tracked(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), tr)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::Degenerate("mean of an empty tensor".into()));
        }
        let s = t.values().iter().sum::<f64>() / t.numel() as f64;
        let tr = self.tracked(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), tr))
    }

    /// Rows of `a` at `indices`, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, indices: impl Into<Arc<[usize]>>) -> Result<Var> {
        let indices: Arc<[usize]> = indices.into();
        let mut t = self.value(a).select_rows(&indices)?;
        if self.value(a).shape().len() == 1 {
            t = Tensor::vector(t.into_values());
        }
        let tr = self.tracked(&[a]);
        Ok(self.push(t, Op::GatherRows(a, indices), tr))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if start > end || end > ta.rows() {
            return Err(Error::dim(format!(
                "slice {}..{} of {} rows",
                start,
                end,
                ta.rows()
            )));
        }
        let c = ta.cols();
        let t = Tensor::matrix(end - start, c, ta.values()[start * c..end * c].to_vec())?;
        let tr = self.tracked(&[a]);
        Ok(self.push(t, Op::SliceRows(a, start), tr))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::dim(format!(
                    "concat_cols: {} rows vs {}",
                    t.rows(),
                    rows
                )));
            }
            total += t.cols();
        }
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + c].copy_from_slice(t.row(r));
            }
            offset += c;
        }
        let tr = self.tracked(parts);
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), tr))
    }

    /// Multiplies row `r` of `a` by `w[r]`.
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Result<Var> {
        let (ta, tw) = (self.value(a), self.value(w));
        if tw.numel() != ta.rows() {
            return Err(Error::dim(format!(
                "scale_rows: {} weights for {} rows",
                tw.numel(),
                ta.rows()
            )));
        }
        let c = ta.cols();
        let mut out = ta.values().to_vec();
        for (r, &s) in tw.values().iter().enumerate() {
            out[r * c..(r + 1) * c].iter_mut().for_each(|v| *v *= s);
        }
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        let tr = self.tracked(&[a, w]);
        Ok(self.push(t, Op::ScaleRows(a, w), tr))
    }

    /// Adds the vector `b` to every row of `a`.
    pub fn add_row_vector(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let c = ta.cols();
        if tb.numel() != c {
            return Err(Error::dim(format!(
                "add_row_vector: vector of {} for {} columns",
                tb.numel(),
                c
            )));
        }
        let mut out = ta.values().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            row.iter_mut().zip(tb.values()).for_each(|(v, b)| *v += b);
        }
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        let tr = self.tracked(&[a, b]);
        Ok(self.push(t, Op::AddRowVector(a, b), tr))
    }

    /// Sums rows of `a` into `num_segments` output rows by segment id.
    pub fn segment_sum(&mut self, a: Var, segments: impl Into<Arc<[usize]>>, num_segments: usize) -> Result<Var> {
        let segments: Arc<[usize]> = segments.into();
        let ta = self.value(a);
        if segments.len() != ta.rows() {
            return Err(Error::dim(format!(
                "segment_sum: {} ids for {} rows",
                segments.len(),
                ta.rows()
            )));
        }
        let c = ta.cols();
        let mut out = vec![0.0; num_segments * c];
        for (r, &s) in segments.iter().enumerate() {
            if s >= num_segments {
                return Err(Error::contract(format!(
                    "segment id {} >= {}",
                    s, num_segments
                )));
            }
            out[s * c..(s + 1) * c]
                .iter_mut()
                .zip(ta.row(r))
                .for_each(|(o, v)| *o += v);
        }
        let t = Tensor::matrix(num_segments, c, out)?;
        let tr = self.tracked(&[a]);
        Ok(self.push(t, Op::SegmentSum(a, segments), tr))
    }

    /// Softmax of `scores` within runs of equal (sorted) segment ids.
    pub fn segment_softmax(&mut self, scores: Var, segments: impl Into<Arc<[usize]>>) -> Result<Var> {
        let segments: Arc<[usize]> = segments.into();
        check_segments(&segments)?;
        let ts = self.value(scores);
        if ts.numel() != segments.len() {
            return Err(Error::dim(format!(
                "segment_softmax: {} ids for {} scores",
                segments.len(),
                ts.numel()
            )));
        }
        let out = segment_softmax_values(ts.values(), &segments);
        let t = Tensor::new(ts.shape().to_vec(), out)?;
        let tr = self.tracked(&[scores]);
        Ok(self.push(t, Op::SegmentSoftmax(scores, segments), tr))
    }

    /// `op · a` for a constant sparse operator.
    pub fn sparse_matmul(&mut self, op: Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let t = op.matmul_dense(self.value(a))?;
        let tr = self.tracked(&[a]);
        Ok(self.push(t, Op::SparseMatMul(a, op), tr))
    }

    /// Sample covariance `(1/N)·ŪᵀŪ` of the rows of `a` with Ū column-centered.
    /// The result is exactly symmetric.
    pub fn covariance(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (n, d) = (ta.rows(), ta.cols());
        if ta.shape().len() != 2 || n < 2 {
            return Err(Error::Degenerate(format!(
                "covariance needs a matrix with at least 2 rows, got {:?}",
                ta.shape()
            )));
        }
        let centered = center_columns(ta.values(), n, d);
        let cov = covariance_from_centered(&centered, n, d);
        let tr = self.tracked(&[a]);
        Ok(self.push(Tensor::matrix(d, d, cov)?, Op::Covariance(a, centered), tr))
    }

    /// `(1/N) Σᵢ ‖aᵢ − bᵢ‖²` over the `N` rows.
    pub fn mse_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(format!(
                "mse_rows: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let n = ta.rows();
        if n == 0 {
            return Err(Error::Degenerate("mse_rows over zero rows".into()));
        }
        let s: f64 = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let tr = self.tracked(&[a, b]);
        Ok(self.push(Tensor::scalar(s / n as f64), Op::MseRows(a, b), tr))
    }

    /// Diagonal of a square matrix as a vector.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_square() {
            return Err(Error::dim(format!("diag of non-square {:?}", ta.shape())));
        }
        let d = ta.rows();
        let v = (0..d).map(|i| ta.get(i, i)).collect();
        let tr = self.tracked(&[a]);
        Ok(self.push(Tensor::vector(v), Op::Diag(a), tr))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::contract(
                "tape was already backpropagated; record a new forward pass",
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].tracked {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let mut params: HashMap<ParamId, Vec<usize>> = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                params.entry(id).or_default().push(i);
            }
        }
        Ok(Gradients { grads, params })
    }

    /// `backward` followed by writing gradients into `params`.
    pub fn backward_into(&mut self, loss: Var, params: &mut [&mut Parameter]) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        grads.write_to(params)?;
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.values();
        // Accumulates into the gradient slot of `v` if it is tracked.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let node = &nodes[v.0];
            if !node.tracked {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]);
            f(slot);
        };
        let out = nodes[i].value.values();
        match &nodes[i].op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |da| {
                    // dA = dC · Bᵀ
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let br = &tb.values()[p * m..(p + 1) * m];
                            da[r * k + p] += gr.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |db| {
                    // dB = Aᵀ · dC
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let a_rp = ta.values()[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (d, &x) in db[p * m..(p + 1) * m].iter_mut().zip(gr) {
                                *d += a_rp * x;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |da| reduce_into(da, g, 1.0));
                acc(*b, &mut |db| reduce_into(db, g, sign));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let prod_a: Vec<f64> = g.iter().enumerate().map(|(j, x)| x * bget(vb, j)).collect();
                let prod_b: Vec<f64> = g.iter().enumerate().map(|(j, x)| x * bget(va, j)).collect();
                acc(*a, &mut |da| reduce_into(da, &prod_a, 1.0));
                acc(*b, &mut |db| reduce_into(db, &prod_b, 1.0));
            }
            Op::Scale(a, c) => acc(*a, &mut |da| {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += c * x)
            }),
            Op::AddScalar(a) => acc(*a, &mut |da| reduce_into(da, g, 1.0)),
            Op::Elu(a) => {
                let va = val(*a);
                acc(*a, &mut |da| {
                    for j in 0..da.len() {
                        da[j] += g[j] * elu_grad(va[j]);
                    }
                })
            }
            Op::LeakyRelu(a, slope) => {
                let va = val(*a);
                acc(*a, &mut |da| {
                    for j in 0..da.len() {
                        da[j] += g[j] * if va[j] >= 0.0 { 1.0 } else { *slope };
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |da| {
                for j in 0..da.len() {
                    da[j] += g[j] * out[j];
                }
            }),
            Op::Log(a) => {
                let va = val(*a);
                acc(*a, &mut |da| {
                    for j in 0..da.len() {
                        da[j] += g[j] / va[j];
                    }
                })
            }
            Op::Square(a) => {
                let va = val(*a);
                acc(*a, &mut |da| {
                    for j in 0..da.len() {
                        da[j] += 2.0 * va[j] * g[j];
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => acc(*a, &mut |da| {
                let s = g[0] / da.len() as f64;
                da.iter_mut().for_each(|d| *d += s)
            }),
            Op::GatherRows(a, idx) => {
                let c = nodes[a.0].value.cols();
                acc(*a, &mut |da| {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..c {
                            da[src * c + j] += g[r * c + j];
                        }
                    }
                })
            }
            Op::SliceRows(a, start) => {
                let c = nodes[a.0].value.cols();
                acc(*a, &mut |da| {
                    da[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, x)| *d += x)
                })
            }
            Op::ConcatCols(parts) => {
                let rows = nodes[i].value.rows();
                let total = nodes[i].value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = nodes[p.0].value.cols();
                    acc(*p, &mut |dp| {
                        for r in 0..rows {
                            for j in 0..c {
                                dp[r * c + j] += g[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::ScaleRows(a, w) => {
                let (ta, vw) = (&nodes[a.0].value, val(*w));
                let c = ta.cols();
                acc(*a, &mut |da| {
                    for (r, &s) in vw.iter().enumerate() {
                        for j in 0..c {
                            da[r * c + j] += g[r * c + j] * s;
                        }
                    }
                });
                acc(*w, &mut |dw| {
                    for (r, d) in dw.iter_mut().enumerate() {
                        *d += (0..c).map(|j| g[r * c + j] * ta.values()[r * c + j]).sum::<f64>();
                    }
                });
            }
            Op::AddRowVector(a, b) => {
                let c = nodes[a.0].value.cols();
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, x)| *d += x));
                acc(*b, &mut |db| {
                    for row in g.chunks(c.max(1)) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::SegmentSum(a, seg) => {
                let c = nodes[a.0].value.cols();
                acc(*a, &mut |da| {
                    for (r, &s) in seg.iter().enumerate() {
                        for j in 0..c {
                            da[r * c + j] += g[s * c + j];
                        }
                    }
                })
            }
            Op::SegmentSoftmax(a, seg) => acc(*a, &mut |da| {
                // dx_e = y_e (g_e − Σ_{f in seg} y_f g_f)
                let mut start = 0;
                while start < seg.len() {
                    let mut end = start;
                    while end < seg.len() && seg[end] == seg[start] {
                        end += 1;
                    }
                    let dot: f64 = (start..end).map(|e| out[e] * g[e]).sum();
                    for e in start..end {
                        da[e] += out[e] * (g[e] - dot);
                    }
                    start = end;
                }
            }),
            Op::SparseMatMul(a, op) => {
                let d = nodes[a.0].value.cols();
                acc(*a, &mut |da| op.apply_transpose(g, d, da))
            }
            Op::Covariance(a, centered) => {
                let (n, d) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                acc(*a, &mut |da| covariance_backward(centered, g, n, d, da))
            }
            Op::MseRows(a, b) => {
                let n = nodes[a.0].value.rows() as f64;
                let (va, vb) = (val(*a), val(*b));
                let s = 2.0 * g[0] / n;
                acc(*a, &mut |da| {
                    for j in 0..da.len() {
                        da[j] += s * (va[j] - vb[j]);
                    }
                });
                acc(*b, &mut |db| {
                    for j in 0..db.len() {
                        db[j] -= s * (va[j] - vb[j]);
                    }
                });
            }
            Op::Diag(a) => {
                let d = nodes[a.0].value.rows();
                acc(*a, &mut |da| {
                    for k in 0..d {
                        da[k * d + k] += g[k];
                    }
                })
            }
        }
    }
}

/// Adds `sign·g` into `dst`, summing everything when `dst` is a broadcast scalar.
fn reduce_into(dst: &mut [f64], g: &[f64], sign: f64) {
    if dst.len() == g.len() {
        dst.iter_mut().zip(g).for_each(|(d, x)| *d += sign * x);
    } else {
        dst[0] += sign * g.iter().sum::<f64>();
    }
}

pub(crate) fn segment_softmax_values(scores: &[f64], segments: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    let mut start = 0;
    while start < segments.len() {
        let mut end = start;
        while end < segments.len() && segments[end] == segments[start] {
            end += 1;
        }
        let max = scores[start..end]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for e in start..end {
            out[e] = (scores[e] - max).exp();
            total += out[e];
        }
        for v in &mut out[start..end] {
            *v /= total;
        }
        start = end;
    }
    out
}

fn center_columns(values: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            mean[j] += values[r * d + j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut out = values.to_vec();
    for r in 0..n {
        for j in 0..d {
            out[r * d + j] -= mean[j];
        }
    }
    out
}

fn covariance_from_centered(centered: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        let row = &centered[r * d..(r + 1) * d];
        for i in 0..d {
            let ri = row[i];
            for j in i..d {
                cov[i * d + j] += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / n as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

/// dU = P(dŪ) with dŪ = Ū(G + Gᵀ)/N and P the column-centering projection.
fn covariance_backward(centered: &[f64], g: &[f64], n: usize, d: usize, da: &mut [f64]) {
    let mut sym = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = (g[i * d + j] + g[j * d + i]) / n as f64;
        }
    }
    let dbar = matmul_raw(centered, &sym, n, d, d);
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            mean[j] += dbar[r * d + j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for r in 0..n {
        for j in 0..d {
            da[r * d + j] += dbar[r * d + j] - mean[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let b = tape.constant(mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let c = tape.matmul(i, b).unwrap();
        assert_eq!(tape.value(c).values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn row_times_column() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[vec![1.0, 0.0]]));
        let b = tape.constant(mat(&[vec![0.0], vec![5.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[1, 1]);
        assert_eq!(tape.value(c).values(), &[0.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, -20.0, -1.0]));
        let e = tape.elu(x);
        let v = tape.value(e).values().to_vec();
        assert_eq!(v[0], 0.0);
        assert!((v[1] + 0.99999999).abs() < 1e-8);
        let l = tape.leaky_relu(x, 0.2);
        assert!((tape.value(l).values()[2] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn broadcasting_is_scalar_or_equal_only() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![3]));
        let s = tape.constant(Tensor::scalar(2.0));
        assert!(tape.add(a, b).is_err());
        let r = tape.add(a, s).unwrap();
        assert_eq!(tape.value(r).values(), &[2.0; 6]);
    }

    #[test]
    fn segment_softmax_examples() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.segment_softmax(s, vec![0, 0]).unwrap();
        assert_eq!(tape.value(y).values(), &[0.5, 0.5]);

        let s = tape.constant(Tensor::vector(vec![1.0]));
        let y = tape.segment_softmax(s, vec![0]).unwrap();
        assert_eq!(tape.value(y).values(), &[1.0]);

        // exp(1)/(exp(1)+exp(2)) = 1/(1+e)
        let s = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = tape.segment_softmax(s, vec![0, 0, 1]).unwrap();
        let v = tape.value(y).values();
        let e = std::f64::consts::E;
        assert!((v[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((v[1] - e / (1.0 + e)).abs() < 1e-15);
        assert_eq!(v[2], 1.0);
        assert!((v[0] - 0.2689414213699951).abs() < 1e-12);

        let s = tape.constant(Tensor::vector(vec![]));
        let y = tape.segment_softmax(s, Vec::<usize>::new()).unwrap();
        assert_eq!(tape.value(y).numel(), 0);
    }

    #[test]
    fn segment_softmax_rejects_unsorted() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(
            tape.segment_softmax(s, vec![1, 0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn covariance_examples() {
        let mut tape = Tape::new();
        let c = tape.constant(mat(&[vec![3.0, -1.0], vec![3.0, -1.0], vec![3.0, -1.0]]));
        let cov = tape.covariance(c).unwrap();
        assert_eq!(tape.value(cov).values(), &[0.0; 4]);

        let u = tape.constant(mat(&[vec![1.0, -1.0], vec![-1.0, 1.0]]));
        let cov = tape.covariance(u).unwrap();
        assert_eq!(tape.value(cov).values(), &[1.0, -1.0, -1.0, 1.0]);

        let one = tape.constant(mat(&[vec![1.0, 2.0]]));
        assert!(matches!(tape.covariance(one), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mse_rows_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[vec![1.0, 0.0]]));
        let b = tape.constant(mat(&[vec![0.0, 0.0]]));
        let m = tape.mse_rows(a, b).unwrap();
        assert_eq!(tape.value(m).values(), &[1.0]);
        let m = tape.mse_rows(a, a).unwrap();
        assert_eq!(tape.value(m).values(), &[0.0]);
        let c = tape.constant(Tensor::zeros(vec![2, 2]));
        assert!(matches!(tape.mse_rows(a, c), Err(Error::Dimension(_))));
    }

    #[test]
    fn sum_of_param_gives_ones() {
        let mut p = Parameter::new("p", mat(&[vec![1.0, -2.0], vec![0.5, 3.0]]));
        let mut tape = Tape::new();
        let v = tape.param(&p);
        let s = tape.sum(v);
        tape.backward_into(s, &mut [&mut p]).unwrap();
        assert_eq!(p.grad(), Some(&[1.0; 4][..]));
    }

    #[test]
    fn unreachable_parameter_gets_zero_grad() {
        let mut p = Parameter::new("p", Tensor::vector(vec![1.0, 2.0]));
        let mut q = Parameter::new("q", Tensor::vector(vec![3.0, 4.0]));
        let mut tape = Tape::new();
        let vp = tape.param(&p);
        let _vq = tape.param(&q);
        let s = tape.square(vp);
        let l = tape.sum(s);
        tape.backward_into(l, &mut [&mut p, &mut q]).unwrap();
        assert_eq!(p.grad(), Some(&[2.0, 4.0][..]));
        assert_eq!(q.grad(), Some(&[0.0, 0.0][..]));
    }

    #[test]
    fn second_backward_is_rejected() {
        let p = Parameter::new("p", Tensor::vector(vec![1.0]));
        let mut tape = Tape::new();
        let v = tape.param(&p);
        let l = tape.sum(v);
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::Contract(_))));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let p = Parameter::new("p", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let v = tape.param(&p);
        assert!(matches!(tape.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn reused_parameter_accumulates() {
        let mut p = Parameter::new("p", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let a = tape.param(&p);
        let b = tape.param(&p);
        let m = tape.mul(a, b).unwrap();
        tape.backward_into(m, &mut [&mut p]).unwrap();
        assert_eq!(p.grad(), Some(&[6.0][..]));
    }
}
