//! Reverse-mode differentiation over a recorded operation list.
//!
//! Every op appends a node holding its parent ids and whatever it needs for
//! the backward rule. Node ids are assigned in creation order, so a reverse
//! sweep over ids is a reverse topological order. A tape created with
//! [`Tape::no_grad`] records nothing, which keeps inference memory flat.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use super::kernels::{col2im, gemm, gemm_acc, im2col, ConvGeom};
use super::Tensor;
use crate::{Error, Result};

/// Floor applied to probabilities inside the cross-entropy log.
pub const LOG_FLOOR: f64 = 1e-12;
pub const BN_EPS: f64 = 1e-5;

/// A value on a tape. `id` is `None` for constants and untracked results.
#[derive(Debug, Clone)]
pub struct Var {
    value: Rc<Tensor>,
    id: Option<usize>,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }
}

type Id = Option<usize>;

enum Op {
    Leaf,
    MatMul { a: Id, b: Id, av: Rc<Tensor>, bv: Rc<Tensor> },
    BatchMatMul { a: Id, b: Id, av: Rc<Tensor>, bv: Rc<Tensor> },
    Transpose { a: Id, batch: usize, rows: usize, cols: usize },
    Add { a: Id, b: Id },
    AddTrailing { a: Id, b: Id, b_len: usize },
    Mul { a: Id, b: Id, av: Rc<Tensor>, bv: Rc<Tensor> },
    Scale { a: Id, k: f64 },
    Relu { a: Id, out: Rc<Tensor> },
    Softmax { a: Id, out: Rc<Tensor> },
    MeanAxis1 { a: Id, outer: usize, len: usize, inner: usize },
    Sum { a: Id, len: usize },
    Conv { x: Id, w: Id, xv: Rc<Tensor>, wv: Rc<Tensor>, geom: ConvGeom },
    BatchNorm { x: Id, gamma: Id, beta: Id, gv: Rc<Tensor>, xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    CrossEntropy { a: Id, probs: Vec<f64>, targets: Vec<usize> },
    Gather { a: Id, indices: Vec<usize>, src_rows: usize, cols: usize },
    Concat { parts: Vec<(Id, usize)>, rows: usize },
    Reshape { a: Id },
}

struct Node {
    op: Op,
    len: usize,
}

/// Batch statistics produced by a train-mode batch-norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Gradients from one backward sweep, addressed by the `Var` they belong to.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<Tensor> {
        let id = var.id?;
        let data = self.grads.get(id)?.as_ref()?;
        Some(Tensor::new(var.shape().to_vec(), data.clone()).expect("grad matches shape"))
    }

    /// Gradient data for `var`, or zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, var: &Var) -> Tensor {
        self.get(var).unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn is_present(&self, var: &Var) -> bool {
        var.id
            .and_then(|id| self.grads.get(id))
            .is_some_and(Option::is_some)
    }
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::dim(op, format!("incompatible shapes {a:?} and {b:?}"))
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: true,
        }
    }

    /// A tape whose ops compute values only.
    pub fn no_grad() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: false,
        }
    }

    pub fn records(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor, parents: &[Id]) -> Var {
        let tracked = self.record && (matches!(op, Op::Leaf) || parents.iter().any(Option::is_some));
        let id = tracked.then(|| {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                op,
                len: value.len(),
            });
            nodes.len() - 1
        });
        Var {
            value: Rc::new(value),
            id,
        }
    }

    /// A differentiable input (a parameter or a probed value).
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, &[])
    }

    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            value: Rc::new(value),
            id: None,
        }
    }

    /// `[.., K] · [K, N] → [.., N]`.
    pub fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let k = sb[0];
        let n = sb[1];
        let m = a.value.len() / k.max(1);
        let data = gemm(a.data(), false, b.data(), false, m, k, n);
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let op = Op::MatMul { a: a.id, b: b.id, av: a.value.clone(), bv: b.value.clone() };
        Ok(self.push(op, Tensor::new(shape, data)?, &[a.id, b.id]))
    }

    /// `[Bt, M, K] · [Bt, K, N] → [Bt, M, N]`; a rank-2 `[M, K]` left operand
    /// is shared across the batch.
    pub fn bmm(&self, a: &Var, b: &Var) -> Result<Var> {
        let (sa, sb) = (a.shape(), b.shape());
        let ok = sb.len() == 3
            && match sa.len() {
                2 => sa[1] == sb[1],
                3 => sa[0] == sb[0] && sa[2] == sb[1],
                _ => false,
            };
        if !ok {
            return Err(shape_err("bmm", sa, sb));
        }
        let (bt, k, n) = (sb[0], sb[1], sb[2]);
        let m = sa[sa.len() - 2];
        let shared = sa.len() == 2;
        let mut data = vec![0.0; bt * m * n];
        for i in 0..bt {
            let ablock = if shared { a.data() } else { &a.data()[i * m * k..(i + 1) * m * k] };
            gemm_acc(
                ablock,
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                false,
                m,
                k,
                n,
                &mut data[i * m * n..(i + 1) * m * n],
            );
        }
        let op = Op::BatchMatMul { a: a.id, b: b.id, av: a.value.clone(), bv: b.value.clone() };
        Ok(self.push(op, Tensor::new(vec![bt, m, n], data)?, &[a.id, b.id]))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self, a: &Var) -> Result<Var> {
        let s = a.shape();
        if s.len() < 2 {
            return Err(Error::dim("transpose", format!("need rank ≥ 2, got {s:?}")));
        }
        let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = a.value.len() / (rows * cols).max(1);
        let data = transpose_blocks(a.data(), batch, rows, cols);
        let mut shape = s.to_vec();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let op = Op::Transpose { a: a.id, batch, rows, cols };
        Ok(self.push(op, Tensor::new(shape, data)?, &[a.id]))
    }

    pub fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        if a.shape() != b.shape() {
            return Err(shape_err("add", a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add { a: a.id, b: b.id }, Tensor::new(a.shape().to_vec(), data)?, &[a.id, b.id]))
    }

    /// Adds `b` broadcast over the leading axes of `a`; `b`'s shape must equal
    /// a trailing slice of `a`'s shape (bias add).
    pub fn add_trailing(&self, a: &Var, b: &Var) -> Result<Var> {
        let (sa, sb) = (a.shape(), b.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb || b.value.is_empty() {
            return Err(shape_err("add_trailing", sa, sb));
        }
        let bl = b.value.len();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b.data()[i % bl])
            .collect();
        let op = Op::AddTrailing { a: a.id, b: b.id, b_len: bl };
        Ok(self.push(op, Tensor::new(sa.to_vec(), data)?, &[a.id, b.id]))
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        if a.shape() != b.shape() {
            return Err(shape_err("mul", a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let op = Op::Mul { a: a.id, b: b.id, av: a.value.clone(), bv: b.value.clone() };
        Ok(self.push(op, Tensor::new(a.shape().to_vec(), data)?, &[a.id, b.id]))
    }

    pub fn scale(&self, a: &Var, k: f64) -> Var {
        let data = a.data().iter().map(|x| x * k).collect();
        let value = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        self.push(Op::Scale { a: a.id, k }, value, &[a.id])
    }

    pub fn relu(&self, a: &Var) -> Var {
        let data = a.data().iter().map(|&x| if x < 0.0 { 0.0 } else { x }).collect();
        let out = Rc::new(Tensor::new(a.shape().to_vec(), data).expect("same shape"));
        self.push(Op::Relu { a: a.id, out: out.clone() }, (*out).clone(), &[a.id])
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, a: &Var) -> Result<Var> {
        let c = a.value.last_dim();
        if c == 0 || a.shape().is_empty() {
            return Err(Error::dim("softmax", format!("cannot normalize shape {:?}", a.shape())));
        }
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let out = Rc::new(Tensor::new(a.shape().to_vec(), data)?);
        Ok(self.push(Op::Softmax { a: a.id, out: out.clone() }, (*out).clone(), &[a.id]))
    }

    /// Mean over axis 1 of a `[A, L, ..]` tensor, giving `[A, ..]`.
    pub fn mean_axis1(&self, a: &Var) -> Result<Var> {
        let s = a.shape();
        if s.len() < 2 || s[1] == 0 {
            return Err(Error::dim("mean_axis1", format!("cannot reduce axis 1 of {s:?}")));
        }
        let (outer, len) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &a.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, x) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += x;
                }
            }
        }
        let inv = 1.0 / len as f64;
        data.iter_mut().for_each(|d| *d *= inv);
        let mut shape = vec![outer];
        shape.extend_from_slice(&s[2..]);
        let op = Op::MeanAxis1 { a: a.id, outer, len, inner };
        Ok(self.push(op, Tensor::new(shape, data)?, &[a.id]))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self, a: &Var) -> Var {
        let total = a.data().iter().sum();
        self.push(Op::Sum { a: a.id, len: a.value.len() }, Tensor::scalar(total), &[a.id])
    }

    /// Temporal convolution of `x: [N, T, V, Cin]` with `w: [K, Cin, Cout]`,
    /// zero padding `(K − 1) / 2` and the given stride. Output frames:
    /// `ceil(T / stride)` for odd `K`.
    pub fn temporal_conv(&self, x: &Var, w: &Var, stride: usize) -> Result<Var> {
        let (sx, sw) = (x.shape(), w.shape());
        if sx.len() != 4 || sw.len() != 3 || sx[3] != sw[1] || sw[0] == 0 || sw[0] % 2 == 0 || stride == 0 {
            return Err(shape_err("temporal_conv", sx, sw));
        }
        let geom = ConvGeom { n: sx[0], t: sx[1], v: sx[2], cin: sx[3], cout: sw[2], k: sw[0], stride };
        let cols = im2col(x.data(), &geom);
        let data = gemm(&cols, false, w.data(), false, geom.rows(), geom.width(), geom.cout);
        let shape = vec![geom.n, geom.t_out(), geom.v, geom.cout];
        let op = Op::Conv { x: x.id, w: w.id, xv: x.value.clone(), wv: w.value.clone(), geom };
        Ok(self.push(op, Tensor::new(shape, data)?, &[x.id, w.id]))
    }

    /// Batch normalization over every axis but the last. With `running =
    /// None` the batch statistics are used and returned; otherwise the given
    /// `(mean, var)` are applied as fixed constants.
    pub fn batch_norm(
        &self,
        x: &Var,
        gamma: &Var,
        beta: &Var,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let c = x.value.last_dim();
        if x.shape().is_empty() || gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::dim(
                "batch_norm",
                format!("input {:?} with gamma {:?} and beta {:?}", x.shape(), gamma.shape(), beta.shape()),
            ));
        }
        let rows = x.value.len() / c;
        let (mean, var, batch_stats) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return Err(Error::dim("batch_norm", "running statistics length mismatch"));
                }
                (m.to_vec(), v.to_vec(), false)
            }
            None => {
                if rows == 0 {
                    return Err(Error::dim("batch_norm", "empty batch"));
                }
                let mut mean = vec![0.0; c];
                for row in x.data().chunks(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for row in x.data().chunks(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.value.len());
        for row in x.data().chunks(c) {
            for i in 0..c {
                xhat.push((row[i] - mean[i]) * inv_std[i]);
            }
        }
        let g = gamma.data();
        let b = beta.data();
        let data = xhat.iter().enumerate().map(|(i, h)| g[i % c] * h + b[i % c]).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let stats = batch_stats.then_some(BatchStats { mean, var });
        let op = Op::BatchNorm {
            x: x.id,
            gamma: gamma.id,
            beta: beta.id,
            gv: gamma.value.clone(),
            xhat: if self.record { xhat } else { Vec::new() },
            inv_std,
            batch_stats,
        };
        Ok((self.push(op, value, &[x.id, gamma.id, beta.id]), stats))
    }

    /// Inverted dropout: keeps each entry with probability `1 − p` and scales
    /// survivors by `1 / (1 − p)`. The mask is drawn from `rng`.
    pub fn dropout<R: Rng>(&self, x: &Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if p == 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..x.value.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.apply_mask(x, Tensor::new(x.shape().to_vec(), mask)?)
    }

    /// Multiplies by a fixed mask.
    pub fn apply_mask(&self, x: &Var, mask: Tensor) -> Result<Var> {
        let mask = self.constant(mask);
        self.mul(x, &mask)
    }

    /// Mean over the batch of `−log max(softmax(logits)[target], 1e-12)`.
    pub fn cross_entropy(&self, logits: &Var, targets: &[usize]) -> Result<Var> {
        let s = logits.shape();
        if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
            return Err(Error::dim(
                "cross_entropy",
                format!("logits {s:?} with {} targets", targets.len()),
            ));
        }
        let k = s[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::dim("cross_entropy", format!("target {t} out of range for {k} classes")));
        }
        let mut probs = logits.data().to_vec();
        let mut loss = 0.0;
        for (row, &t) in probs.chunks_mut(k).zip(targets) {
            softmax_in_place(row);
            // f64::max drops NaN, which would hide a diverged forward pass
            let p = row[t];
            loss -= if p.is_nan() { p } else { p.max(LOG_FLOOR).ln() };
        }
        loss /= targets.len() as f64;
        let op = Op::CrossEntropy { a: logits.id, probs, targets: targets.to_vec() };
        Ok(self.push(op, Tensor::scalar(loss), &[logits.id]))
    }

    /// Rows of a `[R, C]` tensor selected by `indices`, giving `[len, C]`.
    pub fn gather_rows(&self, a: &Var, indices: &[usize]) -> Result<Var> {
        let s = a.shape();
        if s.len() != 2 {
            return Err(Error::dim("gather_rows", format!("expected a matrix, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        if let Some(&i) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("gather_rows", format!("row {i} out of range for {rows} rows")));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&a.data()[i * cols..(i + 1) * cols]);
        }
        let op = Op::Gather { a: a.id, indices: indices.to_vec(), src_rows: rows, cols };
        Ok(self.push(op, Tensor::new(vec![indices.len(), cols], data)?, &[a.id]))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat_last(&self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("concat_last", "no inputs"))?;
        let lead = &first.shape()[..first.shape().len().saturating_sub(1)];
        for p in parts {
            let sp = p.shape();
            if sp.is_empty() || &sp[..sp.len() - 1] != lead {
                return Err(shape_err("concat_last", first.shape(), sp));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.value.last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let ids: Vec<Id> = parts.iter().map(|p| p.id).collect();
        let op = Op::Concat { parts: ids.iter().copied().zip(widths).collect(), rows };
        Ok(self.push(op, Tensor::new(shape, data)?, &ids))
    }

    pub fn reshape(&self, a: &Var, shape: &[usize]) -> Result<Var> {
        let value = a.value.reshaped(shape).map_err(|_| {
            Error::dim("reshape", format!("cannot view {:?} as {shape:?}", a.shape()))
        })?;
        Ok(self.push(Op::Reshape { a: a.id }, value, &[a.id]))
    }

    /// `x · w + b` over the last axis.
    pub fn linear(&self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_trailing(&y, b),
            None => Ok(y),
        }
    }

    /// Runs the backward sweep from a scalar `loss`.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        if loss.value.len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be a scalar, got shape {:?}", loss.shape()),
            ));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        let Some(root) = loss.id else {
            return Ok(Gradients { grads });
        };
        grads[root] = Some(vec![1.0]);
        for id in (0..=root).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            debug_assert_eq!(g.len(), node.len);
            propagate(&node.op, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn transpose_blocks(data: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for b in 0..batch {
        let base = b * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                out[base + c * rows + r] = data[base + r * cols + c];
            }
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: Id, g: Vec<f64>) {
    let Some(id) = id else { return };
    match &mut grads[id] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        slot => *slot = Some(g),
    }
}

fn propagate(op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    match op {
        Op::Leaf => {}
        Op::MatMul { a, b, av, bv } => {
            let k = bv.shape()[0];
            let n = bv.shape()[1];
            let m = av.len() / k.max(1);
            if a.is_some() {
                accumulate(grads, *a, gemm(g, false, bv.data(), true, m, n, k));
            }
            if b.is_some() {
                accumulate(grads, *b, gemm(av.data(), true, g, false, k, m, n));
            }
        }
        Op::BatchMatMul { a, b, av, bv } => {
            let (bt, k, n) = (bv.shape()[0], bv.shape()[1], bv.shape()[2]);
            let shared = av.rank() == 2;
            let m = av.shape()[av.rank() - 2];
            if a.is_some() {
                let mut ga = vec![0.0; av.len()];
                for i in 0..bt {
                    let dst = if shared { 0..m * k } else { i * m * k..(i + 1) * m * k };
                    gemm_acc(
                        &g[i * m * n..(i + 1) * m * n],
                        false,
                        &bv.data()[i * k * n..(i + 1) * k * n],
                        true,
                        m,
                        n,
                        k,
                        &mut ga[dst],
                    );
                }
                accumulate(grads, *a, ga);
            }
            if b.is_some() {
                let mut gb = vec![0.0; bv.len()];
                for i in 0..bt {
                    let ablock = if shared { av.data() } else { &av.data()[i * m * k..(i + 1) * m * k] };
                    gemm_acc(
                        ablock,
                        true,
                        &g[i * m * n..(i + 1) * m * n],
                        false,
                        k,
                        m,
                        n,
                        &mut gb[i * k * n..(i + 1) * k * n],
                    );
                }
                accumulate(grads, *b, gb);
            }
        }
        Op::Transpose { a, batch, rows, cols } => {
            accumulate(grads, *a, transpose_blocks(g, *batch, *cols, *rows));
        }
        Op::Add { a, b } => {
            accumulate(grads, *a, g.to_vec());
            accumulate(grads, *b, g.to_vec());
        }
        Op::AddTrailing { a, b, b_len } => {
            accumulate(grads, *a, g.to_vec());
            if b.is_some() {
                let mut gb = vec![0.0; *b_len];
                for (i, v) in g.iter().enumerate() {
                    gb[i % b_len] += v;
                }
                accumulate(grads, *b, gb);
            }
        }
        Op::Mul { a, b, av, bv } => {
            if a.is_some() {
                accumulate(grads, *a, g.iter().zip(bv.data()).map(|(x, y)| x * y).collect());
            }
            if b.is_some() {
                accumulate(grads, *b, g.iter().zip(av.data()).map(|(x, y)| x * y).collect());
            }
        }
        Op::Scale { a, k } => accumulate(grads, *a, g.iter().map(|v| v * k).collect()),
        Op::Relu { a, out } => {
            let ga = g
                .iter()
                .zip(out.data())
                .map(|(v, o)| if *o > 0.0 { *v } else { 0.0 })
                .collect();
            accumulate(grads, *a, ga);
        }
        Op::Softmax { a, out } => {
            let c = out.last_dim();
            let mut ga = vec![0.0; g.len()];
            for ((gr, yr), dst) in g.chunks(c).zip(out.data().chunks(c)).zip(ga.chunks_mut(c)) {
                let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                for i in 0..c {
                    dst[i] = yr[i] * (gr[i] - dot);
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::MeanAxis1 { a, outer, len, inner } => {
            let inv = 1.0 / *len as f64;
            let mut ga = vec![0.0; outer * len * inner];
            for o in 0..*outer {
                for l in 0..*len {
                    for i in 0..*inner {
                        ga[(o * len + l) * inner + i] = g[o * inner + i] * inv;
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::Sum { a, len } => accumulate(grads, *a, vec![g[0]; *len]),
        Op::Conv { x, w, xv, wv, geom } => {
            let cols = im2col(xv.data(), geom);
            if w.is_some() {
                let gw = gemm(&cols, true, g, false, geom.width(), geom.rows(), geom.cout);
                accumulate(grads, *w, gw);
            }
            if x.is_some() {
                let gcols = gemm(g, false, wv.data(), true, geom.rows(), geom.cout, geom.width());
                accumulate(grads, *x, col2im(&gcols, geom));
            }
        }
        Op::BatchNorm { x, gamma, beta, gv, xhat, inv_std, batch_stats } => {
            let c = gv.len();
            let rows = g.len() / c;
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                for i in 0..c {
                    sum_g[i] += gr[i];
                    sum_gx[i] += gr[i] * hr[i];
                }
            }
            accumulate(grads, *gamma, sum_gx.clone());
            accumulate(grads, *beta, sum_g.clone());
            if x.is_some() {
                let gamma = gv.data();
                let n = rows as f64;
                let mut gx = vec![0.0; g.len()];
                for ((dst, gr), hr) in gx.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)) {
                    for i in 0..c {
                        let scale = gamma[i] * inv_std[i];
                        dst[i] = if *batch_stats {
                            scale * (gr[i] - sum_g[i] / n - hr[i] * sum_gx[i] / n)
                        } else {
                            scale * gr[i]
                        };
                    }
                }
                accumulate(grads, *x, gx);
            }
        }
        Op::CrossEntropy { a, probs, targets } => {
            let n = targets.len();
            let k = probs.len() / n;
            let scale = g[0] / n as f64;
            let mut ga: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (row, &t) in targets.iter().enumerate() {
                ga[row * k + t] -= scale;
            }
            accumulate(grads, *a, ga);
        }
        Op::Gather { a, indices, src_rows, cols } => {
            let mut ga = vec![0.0; src_rows * cols];
            for (r, &i) in indices.iter().enumerate() {
                for c in 0..*cols {
                    ga[i * cols + c] += g[r * cols + c];
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::Concat { parts, rows } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(id, w) in parts {
                if id.is_some() {
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..*rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, id, gp);
                }
                offset += w;
            }
        }
        Op::Reshape { a } => accumulate(grads, *a, g.to_vec()),
    }
}
