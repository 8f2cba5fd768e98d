//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every op appends a node holding its forward value and the ids of its
//! operands. Node ids increase in creation order, so walking them from the
//! loss down to zero is a reverse topological order and visits each node once.

use std::str::FromStr;

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Silu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "silu" => Ok(Activation::Silu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(TensorError::Config(format!("unknown activation `{other}`"))),
        }
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

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRowVector(Var, Var),
    AddColVector(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    MeanOverRows(Var),
    MeanOverCols(Var),
    Transpose(Var),
    Reshape(Var),
    ReverseRows(Var),
    Concat(Vec<Var>),
    Conv1d(Var, Var),
    Conv2d(Var, Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Act(Activation, Var),
    Softplus(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// The differentiation graph: values plus the record needed to replay it backward.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
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

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    match *t.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(TensorError::Rank {
            op,
            expected: 2,
            shape: t.shape().to_vec(),
        }),
    }
}

fn rank1(op: &'static str, t: &Tensor) -> Result<usize, TensorError> {
    match *t.shape() {
        [n] => Ok(n),
        _ => Err(TensorError::Rank {
            op,
            expected: 1,
            shape: t.shape().to_vec(),
        }),
    }
}

fn check_odd(op: &'static str, k: usize) -> Result<(), TensorError> {
    if k.is_multiple_of(2) {
        return Err(TensorError::Config(format!(
            "{op} kernel size must be odd, got {k}"
        )));
    }
    Ok(())
}

/// `a[m×k] · b[k×n]`, i-k-j loop order.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul", ta)?;
        let (k2, n) = dims2("matmul", tb)?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b)))
    }

    /// `w[m×n] · x[n] -> [m]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, TensorError> {
        let (tw, tx) = (self.value(w), self.value(x));
        let (m, n) = dims2("matvec", tw)?;
        if rank1("matvec", tx)? != n {
            return Err(shape_err("matvec", tw, tx));
        }
        let out = matmul_raw(tw.data(), tx.data(), m, n, 1);
        Ok(self.push(Tensor::new(&[m], out)?, Op::MatVec(w, x)))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        record: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data)?;
        Ok(self.push(value, record))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds `v[n]` to every row of `x[m×n]`.
    pub fn add_row_vector(&mut self, x: Var, v: Var) -> Result<Var, TensorError> {
        let (tx, tv) = (self.value(x), self.value(v));
        let (m, n) = dims2("add_row_vector", tx)?;
        if rank1("add_row_vector", tv)? != n {
            return Err(shape_err("add_row_vector", tx, tv));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(tv.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(&[m, n], data)?;
        Ok(self.push(value, Op::AddRowVector(x, v)))
    }

    /// Adds `v[m]` to every column of `x[m×n]`.
    pub fn add_col_vector(&mut self, x: Var, v: Var) -> Result<Var, TensorError> {
        let (tx, tv) = (self.value(x), self.value(v));
        let (m, n) = dims2("add_col_vector", tx)?;
        if rank1("add_col_vector", tv)? != m {
            return Err(shape_err("add_col_vector", tx, tv));
        }
        let mut data = tx.data().to_vec();
        for (row, b) in data.chunks_mut(n).zip(tv.data()) {
            for o in row {
                *o += b;
            }
        }
        let value = Tensor::new(&[m, n], data)?;
        Ok(self.push(value, Op::AddColVector(x, v)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `x[m×n] -> [n]`, the mean of the rows.
    pub fn mean_over_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, n) = dims2("mean_over_rows", tx)?;
        let mut out = vec![0.0; n];
        for row in tx.data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(Tensor::new(&[n], out)?, Op::MeanOverRows(x)))
    }

    /// `x[m×n] -> [m]`, the mean of each row.
    pub fn mean_over_cols(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, n) = dims2("mean_over_cols", tx)?;
        let inv = 1.0 / n as f64;
        let out = tx.data().chunks(n).map(|r| r.iter().sum::<f64>() * inv).collect();
        Ok(self.push(Tensor::new(&[m], out)?, Op::MeanOverCols(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, n) = dims2("transpose", tx)?;
        let src = tx.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Reverses the row order of `x[m×n]`.
    pub fn reverse_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, n) = dims2("reverse_rows", tx)?;
        let data = tx.data().chunks(n).rev().flatten().copied().collect();
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::ReverseRows(x)))
    }

    /// Concatenates the flattened operands into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Config("concat of zero tensors".into()));
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        let n = data.len();
        Ok(self.push(Tensor::new(&[n], data)?, Op::Concat(parts.to_vec())))
    }

    /// Depthwise convolution of `x[C×L]` with `kernel[C×k]`, zero same-padding.
    pub fn conv1d(&mut self, x: Var, kernel: Var) -> Result<Var, TensorError> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        let (c, l) = dims2("conv1d", tx)?;
        let (ck, k) = dims2("conv1d", tk)?;
        check_odd("conv1d", k)?;
        if c != ck {
            return Err(shape_err("conv1d", tx, tk));
        }
        let r = (k / 2) as isize;
        let (xs, ks) = (tx.data(), tk.data());
        let mut out = vec![0.0; c * l];
        for ch in 0..c {
            let xrow = &xs[ch * l..(ch + 1) * l];
            let krow = &ks[ch * k..(ch + 1) * k];
            for t in 0..l {
                let mut acc = 0.0;
                for (j, &w) in krow.iter().enumerate() {
                    let src = t as isize + j as isize - r;
                    if src >= 0 && (src as usize) < l {
                        acc += w * xrow[src as usize];
                    }
                }
                out[ch * l + t] = acc;
            }
        }
        Ok(self.push(Tensor::new(&[c, l], out)?, Op::Conv1d(x, kernel)))
    }

    /// Full 2-D convolution of `x[C×H×W]` with `kernels[F×C×k×k]`, zero same-padding.
    pub fn conv2d(&mut self, x: Var, kernels: Var) -> Result<Var, TensorError> {
        let (tx, tk) = (self.value(x), self.value(kernels));
        let (c, h, w) = match *tx.shape() {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(TensorError::Rank {
                    op: "conv2d",
                    expected: 3,
                    shape: tx.shape().to_vec(),
                })
            }
        };
        let (f, kc, k) = match *tk.shape() {
            [f, kc, k1, k2] if k1 == k2 => (f, kc, k1),
            _ => return Err(shape_err("conv2d", tx, tk)),
        };
        check_odd("conv2d", k)?;
        if kc != c {
            return Err(shape_err("conv2d", tx, tk));
        }
        let out = conv2d_forward(tx.data(), tk.data(), c, h, w, f, k);
        Ok(self.push(Tensor::new(&[f, h, w], out)?, Op::Conv2d(x, kernels)))
    }

    /// Normalizes each row of `x` (or the whole vector when rank 1) with
    /// population variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let n = *tx.shape().last().unwrap();
        if tx.rank() > 2 {
            return Err(TensorError::Rank {
                op: "layer_norm",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        if rank1("layer_norm", tg)? != n {
            return Err(shape_err("layer_norm", tx, tg));
        }
        if rank1("layer_norm", tb)? != n {
            return Err(shape_err("layer_norm", tx, tb));
        }
        let mut normalized = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(tx.len() / n);
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for ((v, g), b) in row.iter().zip(tg.data()).zip(tb.data()) {
                let xh = (v - mean) * inv;
                normalized.push(xh);
                out.push(xh * g + b);
            }
        }
        let value = Tensor::new(tx.shape(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push(value, Op::Act(kind, x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.activation(Activation::Silu, x)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        self.push(value, Op::Softplus(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        rank1("softmax", tx)?;
        let value = Tensor::vector(softmax_raw(tx.data()));
        Ok(self.push(value, Op::Softmax(x)))
    }

    /// `-log softmax(logits)[target]`, computed through log-sum-exp. `target` is 0-based.
    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let tl = self.value(logits);
        let k = rank1("cross_entropy", tl)?;
        if target >= k {
            return Err(TensorError::Contract(format!(
                "target index {target} out of range for {k} classes"
            )));
        }
        let z = tl.data();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[target];
        let probs = softmax_raw(z);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        ))
    }

    /// Replays the tape from `loss` down to the first node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                // dA = G · Bᵀ, dB = Aᵀ · G
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let brow = &tb.data()[p * n..(p + 1) * n];
                        let grow = &gd[i * n..(i + 1) * n];
                        da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = ta.data()[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for (o, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += aip * gv;
                        }
                    }
                }
                accumulate(grads, *a, ta.shape(), da);
                accumulate(grads, *b, tb.shape(), db);
            }
            Op::MatVec(w, x) => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let (m, n) = (tw.shape()[0], tw.shape()[1]);
                let mut dw = vec![0.0; m * n];
                let mut dx = vec![0.0; n];
                for i in 0..m {
                    let gi = gd[i];
                    let wrow = &tw.data()[i * n..(i + 1) * n];
                    for j in 0..n {
                        dw[i * n + j] = gi * tx.data()[j];
                        dx[j] += gi * wrow[j];
                    }
                }
                accumulate(grads, *w, tw.shape(), dw);
                accumulate(grads, *x, tx.shape(), dx);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), gd.to_vec());
                accumulate(grads, *b, g.shape(), gd.to_vec());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = gd.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let db = gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, g.shape(), da);
                accumulate(grads, *b, g.shape(), db);
            }
            Op::AddRowVector(x, v) => {
                let n = g.shape()[1];
                let mut dv = vec![0.0; n];
                for row in gd.chunks(n) {
                    for (o, gv) in dv.iter_mut().zip(row) {
                        *o += gv;
                    }
                }
                accumulate(grads, *x, g.shape(), gd.to_vec());
                accumulate(grads, *v, &[n], dv);
            }
            Op::AddColVector(x, v) => {
                let (m, n) = (g.shape()[0], g.shape()[1]);
                let dv = gd.chunks(n).map(|r| r.iter().sum()).collect();
                accumulate(grads, *x, g.shape(), gd.to_vec());
                accumulate(grads, *v, &[m], dv);
            }
            Op::Scale(x, c) => {
                accumulate(grads, *x, g.shape(), gd.iter().map(|v| v * c).collect());
            }
            Op::Sum(x) => {
                let tx = self.value(*x);
                accumulate(grads, *x, tx.shape(), vec![gd[0]; tx.len()]);
            }
            Op::MeanOverRows(x) => {
                let tx = self.value(*x);
                let m = tx.shape()[0];
                let inv = 1.0 / m as f64;
                let dx = (0..m).flat_map(|_| gd.iter().map(|v| v * inv)).collect();
                accumulate(grads, *x, tx.shape(), dx);
            }
            Op::MeanOverCols(x) => {
                let tx = self.value(*x);
                let n = tx.shape()[1];
                let inv = 1.0 / n as f64;
                let dx = gd.iter().flat_map(|v| std::iter::repeat_n(v * inv, n)).collect();
                accumulate(grads, *x, tx.shape(), dx);
            }
            Op::Transpose(x) => {
                let (n, m) = (g.shape()[0], g.shape()[1]);
                let mut dx = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        dx[i * n + j] = gd[j * m + i];
                    }
                }
                accumulate(grads, *x, self.value(*x).shape(), dx);
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, self.value(*x).shape(), gd.to_vec());
            }
            Op::ReverseRows(x) => {
                let n = g.shape()[1];
                let dx = gd.chunks(n).rev().flatten().copied().collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let shape = self.value(*p).shape();
                    let len = self.value(*p).len();
                    accumulate(grads, *p, shape, gd[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Conv1d(x, kernel) => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (c, l) = (tx.shape()[0], tx.shape()[1]);
                let k = tk.shape()[1];
                let r = (k / 2) as isize;
                let mut dx = vec![0.0; c * l];
                let mut dk = vec![0.0; c * k];
                for ch in 0..c {
                    for t in 0..l {
                        let gv = gd[ch * l + t];
                        for j in 0..k {
                            let src = t as isize + j as isize - r;
                            if src >= 0 && (src as usize) < l {
                                let s = src as usize;
                                dx[ch * l + s] += gv * tk.data()[ch * k + j];
                                dk[ch * k + j] += gv * tx.data()[ch * l + s];
                            }
                        }
                    }
                }
                accumulate(grads, *x, tx.shape(), dx);
                accumulate(grads, *kernel, tk.shape(), dk);
            }
            Op::Conv2d(x, kernels) => {
                let (tx, tk) = (self.value(*x), self.value(*kernels));
                let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (f, k) = (tk.shape()[0], tk.shape()[2]);
                let (dx, dk) = conv2d_backward(gd, tx.data(), tk.data(), c, h, w, f, k);
                accumulate(grads, *x, tx.shape(), dx);
                accumulate(grads, *kernels, tk.shape(), dk);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let tg = self.value(*gain);
                let n = tg.len();
                let mut dx = vec![0.0; gd.len()];
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                for (r, inv) in inv_std.iter().enumerate() {
                    let span = r * n..(r + 1) * n;
                    let grow = &gd[span.clone()];
                    let xh = &normalized[span.clone()];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..n {
                        dg[j] += grow[j] * xh[j];
                        db[j] += grow[j];
                        let dxh = grow[j] * tg.data()[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    let nf = n as f64;
                    for j in 0..n {
                        let dxh = grow[j] * tg.data()[j];
                        dx[r * n + j] = inv / nf * (nf * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                accumulate(grads, *x, self.value(*x).shape(), dx);
                accumulate(grads, *gain, &[n], dg);
                accumulate(grads, *bias, &[n], db);
            }
            Op::Act(kind, x) => {
                let tx = self.value(*x);
                let dx = gd
                    .iter()
                    .zip(tx.data())
                    .zip(node.value.data())
                    .map(|((gv, &xv), &yv)| gv * kind.derivative(xv, yv))
                    .collect();
                accumulate(grads, *x, tx.shape(), dx);
            }
            Op::Softplus(x) => {
                let tx = self.value(*x);
                let dx = gd.iter().zip(tx.data()).map(|(gv, &xv)| gv * sigmoid(xv)).collect();
                accumulate(grads, *x, tx.shape(), dx);
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let dot: f64 = gd.iter().zip(y).map(|(a, b)| a * b).sum();
                let dx = gd.iter().zip(y).map(|(gv, yv)| yv * (gv - dot)).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let mut dz: Vec<f64> = probs.iter().map(|p| p * gd[0]).collect();
                dz[*target] -= gd[0];
                accumulate(grads, *logits, &[probs.len()], dz);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(&delta) {
                *e += d;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape, delta).expect("gradient shape follows operand"));
        }
    }
}

pub(crate) fn softmax_raw(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Unfolds `x[C×H×W]` into `[C·k·k × H·W]`, row `(c, a, b)` holding the
/// input shifted by `(a − k/2, b − k/2)` with zeros outside.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let plane = h * w;
    let mut cols = vec![0.0; c * k * k * plane];
    for ci in 0..c {
        let xplane = &x[ci * plane..(ci + 1) * plane];
        for a in 0..k {
            let di = a as isize - r;
            for b in 0..k {
                let dj = b as isize - r;
                let row = &mut cols[((ci * k + a) * k + b) * plane..][..plane];
                let j0 = (-dj).max(0) as usize;
                let j1 = (w as isize - dj).clamp(0, w as isize) as usize;
                for i in 0..h {
                    let si = i as isize + di;
                    if si < 0 || si >= h as isize || j0 >= j1 {
                        continue;
                    }
                    let src = si as usize * w;
                    let s0 = (j0 as isize + dj) as usize;
                    row[i * w + j0..i * w + j1].copy_from_slice(&xplane[src + s0..src + s0 + (j1 - j0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let plane = h * w;
    let mut dx = vec![0.0; c * plane];
    for ci in 0..c {
        let dplane = &mut dx[ci * plane..(ci + 1) * plane];
        for a in 0..k {
            let di = a as isize - r;
            for b in 0..k {
                let dj = b as isize - r;
                let row = &cols[((ci * k + a) * k + b) * plane..][..plane];
                let j0 = (-dj).max(0) as usize;
                let j1 = (w as isize - dj).clamp(0, w as isize) as usize;
                for i in 0..h {
                    let si = i as isize + di;
                    if si < 0 || si >= h as isize || j0 >= j1 {
                        continue;
                    }
                    let dst = si as usize * w + (j0 as isize + dj) as usize;
                    for (d, &g) in dplane[dst..dst + (j1 - j0)].iter_mut().zip(&row[i * w + j0..i * w + j1]) {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

fn conv2d_forward(x: &[f64], kern: &[f64], c: usize, h: usize, w: usize, f: usize, k: usize) -> Vec<f64> {
    let cols = im2col(x, c, h, w, k);
    matmul_raw(kern, &cols, f, c * k * k, h * w)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    g: &[f64],
    x: &[f64],
    kern: &[f64],
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let q = c * k * k;
    let cols = im2col(x, c, h, w, k);
    // dK = G · colsᵀ, dcols = Kᵀ · G
    let mut dk = vec![0.0; f * q];
    let mut dcols = vec![0.0; q * plane];
    for fo in 0..f {
        let grow = &g[fo * plane..(fo + 1) * plane];
        for qi in 0..q {
            let crow = &cols[qi * plane..(qi + 1) * plane];
            dk[fo * q + qi] = grow.iter().zip(crow).map(|(a, b)| a * b).sum();
            let kv = kern[fo * q + qi];
            for (d, &gv) in dcols[qi * plane..(qi + 1) * plane].iter_mut().zip(grow) {
                *d += kv * gv;
            }
        }
    }
    (col2im(&dcols, c, h, w, k), dk)
}
