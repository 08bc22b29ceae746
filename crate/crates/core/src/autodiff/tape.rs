use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
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
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    MulScalar { s: Var, x: Var },
    Exp(Var),
    Log(Var),
    Relu(Var),
    SqNorm(Var),
    Dot(Var, Var),
    Softmax(Var),
    ConcatRows(Vec<Var>),
    Select { x: Var, index: usize },
    Sum(Var),
    Mean(Var),
    Dropout { x: Var, mask: Vec<f64> },
    CrossEntropy { logits: Var, label: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Every op appends one node; nodes only reference earlier nodes, so the
/// recording order is already a topological order and `backward` walks it in
/// reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; `None` when no path reaches it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Option<(usize, usize, usize, Vec<usize>)> {
    match (a.len(), b.len()) {
        (2, 2) if a[1] == b[0] => Some((a[0], a[1], b[1], vec![a[0], b[1]])),
        (2, 1) if a[1] == b[0] => Some((a[0], a[1], 1, vec![a[0]])),
        (1, 2) if a[0] == b[0] => Some((1, a[0], b[1], vec![b[1]])),
        _ => None,
    }
}

fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
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

    /// A trainable leaf; its gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, TensorError> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn map(&mut self, name: &'static str, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, TensorError> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| f(a)).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record(name, out, op, &[x])
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.record(name, out, op, &[a, b])
    }

    /// Matrix product. Accepts `[m,k]x[k,n]`, `[m,k]x[k]` and `[k]x[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k, n, shape) = matmul_dims(self.shape(a), self.shape(b))
            .ok_or_else(|| mismatch("matmul", format!("{:?} x {:?}", self.shape(a), self.shape(b))))?;
        let data = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new(shape, data)?;
        self.record("matmul", out, Op::MatMul { a, b, m, k, n }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.map("scale", x, Op::Scale(x, c), |a| a * c)
    }

    /// Multiplies every element of `x` by the single-element tensor `s`.
    pub fn mul_scalar(&mut self, s: Var, x: Var) -> Result<Var, TensorError> {
        if self.value(s).len() != 1 {
            return Err(mismatch("mul_scalar", format!("scale operand has shape {:?}", self.shape(s))));
        }
        let c = self.value(s).item();
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a * c).collect())?;
        self.record("mul_scalar", out, Op::MulScalar { s, x }, &[s, x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("exp", x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("log", x, Op::Log(x), f64::ln)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("relu", x, Op::Relu(x), |a| if a > 0.0 { a } else { 0.0 })
    }

    /// Sum of squares, as a scalar.
    pub fn sq_norm(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().map(|a| a * a).sum();
        self.record("sq_norm", Tensor::scalar(s), Op::SqNorm(x), &[x])
    }

    /// Inner product of two equally shaped tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("dot", a, b)?;
        let s = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).sum();
        self.record("dot", Tensor::scalar(s), Op::Dot(a, b), &[a, b])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        let width = *v.shape().last().ok_or_else(|| mismatch("softmax", "scalar input".into()))?;
        if width == 0 {
            return Err(mismatch("softmax", "empty last axis".into()));
        }
        let mut data = v.data().to_vec();
        for row in data.chunks_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                total += *e;
            }
            for e in row.iter_mut() {
                *e /= total;
            }
        }
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record("softmax", out, Op::Softmax(x), &[x])
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| mismatch("concat_rows", "no inputs".into()))?;
        let inner = self.shape(*first).to_vec();
        let mut data = Vec::with_capacity(parts.len() * self.value(*first).len());
        for &p in parts {
            if self.shape(p) != inner.as_slice() {
                return Err(mismatch("concat_rows", format!("{:?} vs {:?}", inner, self.shape(p))));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        let out = Tensor::new(shape, data)?;
        self.record("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Entry `index` along the leading axis (a row of a matrix, an element of a vector).
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var, TensorError> {
        let v = self.value(x);
        let (&rows, inner) = v
            .shape()
            .split_first()
            .ok_or_else(|| mismatch("select", "scalar input".into()))?;
        if index >= rows {
            return Err(mismatch("select", format!("index {} out of {}", index, rows)));
        }
        let stride: usize = inner.iter().product();
        let out = Tensor::new(inner.to_vec(), v.data()[index * stride..(index + 1) * stride].to_vec())?;
        self.record("select", out, Op::Select { x, index }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        self.record("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(mismatch("mean", "empty input".into()));
        }
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.record("mean", Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Inverted dropout. The identity when not training or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, train: bool, rng: &mut R) -> Result<Var, TensorError> {
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record("dropout", out, Op::Dropout { x, mask }, &[x])
    }

    /// Softmax cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var, TensorError> {
        let v = self.value(logits);
        if v.ndim() != 1 || label >= v.len() {
            return Err(mismatch("cross_entropy", format!("logits {:?}, label {}", v.shape(), label)));
        }
        let z = v.data();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
        let loss = lse - z[label];
        self.record("cross_entropy", Tensor::scalar(loss), Op::CrossEntropy { logits, label }, &[logits])
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        if self.value(output).len() != 1 {
            return Err(mismatch("backward", format!("output shape {:?}", self.shape(output))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.pull_back(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn pull_back(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.rg(v) {
                return;
            }
            let len = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, &mut |da| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(b, &mut |db| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av_ip = av[i * k + p];
                            if av_ip == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += av_ip * gv;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(a, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Scale(x, c) => acc(x, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, &mut |d| {
                    for ((x, y), w) in d.iter_mut().zip(g).zip(bv) {
                        *x += y * w;
                    }
                });
                acc(b, &mut |d| {
                    for ((x, y), w) in d.iter_mut().zip(g).zip(av) {
                        *x += y * w;
                    }
                });
            }
            Op::MulScalar { s, x } => {
                let c = self.value(s).item();
                let xv = self.value(x).data();
                acc(s, &mut |d| d[0] += g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>());
                acc(x, &mut |d| d.iter_mut().zip(g).for_each(|(a, y)| *a += c * y));
            }
            Op::Exp(x) => acc(x, &mut |d| {
                for ((a, y), o) in d.iter_mut().zip(g).zip(out.data()) {
                    *a += y * o;
                }
            }),
            Op::Log(x) => {
                let xv = self.value(x).data();
                acc(x, &mut |d| {
                    for ((a, y), v) in d.iter_mut().zip(g).zip(xv) {
                        *a += y / v;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(x).data();
                acc(x, &mut |d| {
                    for ((a, y), v) in d.iter_mut().zip(g).zip(xv) {
                        if *v > 0.0 {
                            *a += y;
                        }
                    }
                });
            }
            Op::SqNorm(x) => {
                let xv = self.value(x).data();
                acc(x, &mut |d| d.iter_mut().zip(xv).for_each(|(a, v)| *a += 2.0 * v * g[0]));
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, &mut |d| d.iter_mut().zip(bv).for_each(|(x, w)| *x += g[0] * w));
                acc(b, &mut |d| d.iter_mut().zip(av).for_each(|(x, w)| *x += g[0] * w));
            }
            Op::Softmax(x) => {
                let width = *out.shape().last().expect("softmax output has an axis");
                acc(x, &mut |d| {
                    for ((drow, yrow), grow) in d.chunks_mut(width).zip(out.data().chunks(width)).zip(g.chunks(width)) {
                        let inner: f64 = yrow.iter().zip(grow).map(|(y, gy)| y * gy).sum();
                        for ((dx, y), gy) in drow.iter_mut().zip(yrow).zip(grow) {
                            *dx += y * (gy - inner);
                        }
                    }
                });
            }
            Op::ConcatRows(ref parts) => {
                let stride = g.len() / parts.len();
                for (i, &p) in parts.iter().enumerate() {
                    let chunk = &g[i * stride..(i + 1) * stride];
                    acc(p, &mut |d| d.iter_mut().zip(chunk).for_each(|(x, y)| *x += y));
                }
            }
            Op::Select { x, index } => {
                let stride = g.len();
                acc(x, &mut |d| {
                    d[index * stride..(index + 1) * stride]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, y)| *a += y)
                });
            }
            Op::Sum(x) => acc(x, &mut |d| d.iter_mut().for_each(|a| *a += g[0])),
            Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                acc(x, &mut |d| d.iter_mut().for_each(|a| *a += g[0] / n));
            }
            Op::Dropout { x, ref mask } => acc(x, &mut |d| {
                for ((a, y), m) in d.iter_mut().zip(g).zip(mask) {
                    *a += y * m;
                }
            }),
            Op::CrossEntropy { logits, label } => {
                let z = self.value(logits).data();
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|a| (a - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                acc(logits, &mut |d| {
                    for (c, (a, e)) in d.iter_mut().zip(&exps).enumerate() {
                        let target = if c == label { 1.0 } else { 0.0 };
                        *a += g[0] * (e / total - target);
                    }
                });
            }
        }
    }
}
