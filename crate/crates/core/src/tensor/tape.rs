use std::cell::{Cell, Ref, RefCell};
use std::sync::Arc;

use super::{Element, Mode, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    /// `x[..., k] · w[k, n]`
    MatMul {
        x: Var,
        w: Var,
    },
    /// `a[B, m, k] · b[B, k, n]`, or `a · bᵀ` with `b[B, n, k]`
    Bmm {
        a: Var,
        b: Var,
        transpose_b: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    AddConst(Var),
    MulConst {
        x: Var,
        factors: Vec<T>,
    },
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
        frozen_row: Option<usize>,
    },
    Reshape(Var),
    SwapAxes12 {
        x: Var,
        dims: [usize; 4],
    },
    Sum(Var),
    SmoothedCe {
        logp: Var,
        targets: Vec<usize>,
        eps: T,
        pad: usize,
        count: usize,
    },
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records differentiable operations in execution order.
///
/// Nodes are appended as operations run, so the record is topologically
/// ordered by construction. A tape supports exactly one backward pass;
/// call [`Tape::reset`] to reuse it.
pub struct Tape<T: Element = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn same_shape(op: &'static str, a: &Tensor<impl Element>, b: &Tensor<impl Element>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every recorded node and re-arms backward.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
        self.consumed.set(false);
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.0].requires_grad);
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.leaf(Arc::new(value), true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(Arc::new(value), false)
    }

    /// Like [`Tape::param`], sharing storage with the caller instead of copying.
    pub fn param_shared(&self, value: Arc<Tensor<T>>) -> Var {
        self.leaf(value, true)
    }

    /// Like [`Tape::constant`], sharing storage with the caller.
    pub fn constant_shared(&self, value: Arc<Tensor<T>>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &*n[v.0].value)
    }

    /// Shared handle to a recorded value.
    pub fn value_arc(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    // ---------------------------------------------------------------- ops

    /// `x[..., k] · w[k, n] -> [..., n]`; a plain matrix product when `x` is 2-D.
    pub fn matmul(&self, x: Var, w: Var) -> Result<Var> {
        let value = {
            let xv = self.value(x);
            let wv = self.value(w);
            if xv.rank() == 0 || wv.rank() != 2 || xv.last_dim() != wv.shape()[0] {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    left: xv.shape().to_vec(),
                    right: wv.shape().to_vec(),
                });
            }
            let (k, n) = (wv.shape()[0], wv.shape()[1]);
            let m = xv.len() / k;
            let mut out = vec![T::zero(); m * n];
            T::gemm(m, k, n, xv.data(), false, wv.data(), false, &mut out, false);
            let mut shape = xv.shape().to_vec();
            *shape.last_mut().unwrap() = n;
            Tensor::new(shape, out)?
        };
        Ok(self.push(value, Op::MatMul { x, w }, &[x, w]))
    }

    /// Batched product of rank-3 tensors: `a[B,m,k] · b[B,k,n]`, or with
    /// `transpose_b`, `a[B,m,k] · b[B,n,k]ᵀ`.
    pub fn bmm(&self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (value, batch, m, k, n) = {
            let av = self.value(a);
            let bv = self.value(b);
            let mismatch = || Error::ShapeMismatch {
                op: "bmm",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            };
            if av.rank() != 3 || bv.rank() != 3 || av.shape()[0] != bv.shape()[0] {
                return Err(mismatch());
            }
            let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
            let (kb, n) = if transpose_b {
                (bv.shape()[2], bv.shape()[1])
            } else {
                (bv.shape()[1], bv.shape()[2])
            };
            if kb != k {
                return Err(mismatch());
            }
            let mut out = vec![T::zero(); batch * m * n];
            for i in 0..batch {
                T::gemm(
                    m,
                    k,
                    n,
                    &av.data()[i * m * k..(i + 1) * m * k],
                    false,
                    &bv.data()[i * k * n..(i + 1) * k * n],
                    transpose_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
            (Tensor::new([batch, m, n], out)?, batch, m, k, n)
        };
        Ok(self.push(
            value,
            Op::Bmm {
                a,
                b,
                transpose_b,
                batch,
                m,
                k,
                n,
            },
            &[a, b],
        ))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let av = self.value(a);
        let bv = self.value(b);
        same_shape(op, &av, &bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// `x[..., n] + bias[n]`
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let value = {
            let xv = self.value(x);
            let bv = self.value(bias);
            if bv.rank() != 1 || bv.len() != xv.last_dim() {
                return Err(Error::ShapeMismatch {
                    op: "add_bias",
                    left: xv.shape().to_vec(),
                    right: bv.shape().to_vec(),
                });
            }
            let n = bv.len();
            let mut data = xv.data().to_vec();
            for row in data.chunks_mut(n) {
                for (o, &b) in row.iter_mut().zip(bv.data()) {
                    *o += b;
                }
            }
            Tensor::new(xv.shape().to_vec(), data)?
        };
        Ok(self.push(value, Op::AddBias { x, bias }, &[x, bias]))
    }

    pub fn scale(&self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale { x, factor }, &[x])
    }

    /// `x + c` for a constant tensor `c` of the same shape. Entries of `c` may
    /// be `-inf` (attention masks).
    pub fn add_const(&self, x: Var, c: &Tensor<T>) -> Result<Var> {
        let value = {
            let xv = self.value(x);
            same_shape("add_const", &xv, c)?;
            let data = xv.data().iter().zip(c.data()).map(|(&a, &b)| a + b).collect();
            Tensor::new(xv.shape().to_vec(), data)?
        };
        Ok(self.push(value, Op::AddConst(x), &[x]))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&self, x: Var, factors: Vec<T>) -> Result<Var> {
        let value = {
            let xv = self.value(x);
            if factors.len() != xv.len() {
                return Err(Error::ShapeMismatch {
                    op: "mul_const",
                    left: xv.shape().to_vec(),
                    right: vec![factors.len()],
                });
            }
            let data = xv.data().iter().zip(&factors).map(|(&a, &b)| a * b).collect();
            Tensor::new(xv.shape().to_vec(), data)?
        };
        Ok(self.push(value, Op::MulConst { x, factors }, &[x]))
    }

    pub fn relu(&self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(x), &[x])
    }

    /// Tanh approximation: `0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))`.
    pub fn gelu(&self, x: Var) -> Var {
        let c = T::from_f64_lossy(GELU_C);
        let a = T::from_f64_lossy(GELU_A);
        let half = T::from_f64_lossy(0.5);
        let value = self
            .value(x)
            .map(|v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()));
        self.push(value, Op::Gelu(x), &[x])
    }

    /// Inverted dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout(&self, x: Var, p: f64, mode: Mode, rng: &mut impl rand::Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} not in [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let factors = (0..n)
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        self.mul_const(x, factors)
    }

    /// Softmax over the last axis. A row that is entirely `-inf` yields zeros.
    pub fn softmax(&self, x: Var) -> Var {
        let value = {
            let xv = self.value(x);
            let mut data = xv.data().to_vec();
            for row in data.chunks_mut(xv.last_dim().max(1)) {
                softmax_row(row);
            }
            Tensor::new(xv.shape().to_vec(), data).expect("same shape")
        };
        self.push(value, Op::Softmax(x), &[x])
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self, x: Var) -> Var {
        let value = {
            let xv = self.value(x);
            let mut data = xv.data().to_vec();
            for row in data.chunks_mut(xv.last_dim().max(1)) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                if max == T::neg_infinity() {
                    continue;
                }
                let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
                row.iter_mut().for_each(|v| *v -= lse);
            }
            Tensor::new(xv.shape().to_vec(), data).expect("same shape")
        };
        self.push(value, Op::LogSoftmax(x), &[x])
    }

    /// Normalizes each last-axis row to zero mean / unit variance, then
    /// applies `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, mean, rstd) = {
            let xv = self.value(x);
            let gv = self.value(gain);
            let bv = self.value(bias);
            let d = xv.last_dim();
            if gv.len() != d || bv.len() != d || gv.rank() != 1 || bv.rank() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    left: xv.shape().to_vec(),
                    right: gv.shape().to_vec(),
                });
            }
            let eps = T::from_f64_lossy(eps);
            let dt = T::from_usize(d).unwrap();
            let rows = xv.rows();
            let mut mean = Vec::with_capacity(rows);
            let mut rstd = Vec::with_capacity(rows);
            let mut out = vec![T::zero(); xv.len()];
            for r in 0..rows {
                let row = xv.row(r);
                let mu = row.iter().copied().sum::<T>() / dt;
                let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / dt;
                let rs = T::one() / (var + eps).sqrt();
                for j in 0..d {
                    out[r * d + j] = (row[j] - mu) * rs * gv.data()[j] + bv.data()[j];
                }
                mean.push(mu);
                rstd.push(rs);
            }
            (Tensor::new(xv.shape().to_vec(), out)?, mean, rstd)
        };
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Gathers rows of `table[V, d]`, giving `[ids.len(), d]`. `frozen_row`
    /// (the padding id) never receives gradient.
    pub fn embedding(&self, table: Var, ids: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let value = {
            let tv = self.value(table);
            if tv.rank() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "embedding table must be rank 2, got {:?}",
                    tv.shape()
                )));
            }
            let (v, d) = (tv.shape()[0], tv.shape()[1]);
            let mut out = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                if id >= v {
                    return Err(Error::IdOutOfRange { id, size: v });
                }
                out.extend_from_slice(tv.row(id));
            }
            Tensor::new([ids.len(), d], out)?
        };
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                frozen_row,
            },
            &[table],
        ))
    }

    pub fn reshape(&self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = Tensor::clone(&self.value(x)).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// `[a, b, c, d] -> [a, c, b, d]` (splitting/merging attention heads).
    pub fn swap_axes12(&self, x: Var) -> Result<Var> {
        let (value, dims) = {
            let xv = self.value(x);
            if xv.rank() != 4 {
                return Err(Error::InvalidArgument(format!(
                    "swap_axes12 needs rank 4, got {:?}",
                    xv.shape()
                )));
            }
            let s = xv.shape();
            let dims = [s[0], s[1], s[2], s[3]];
            let data = swap12(xv.data(), dims);
            (Tensor::new([s[0], s[2], s[1], s[3]], data)?, dims)
        };
        Ok(self.push(value, Op::SwapAxes12 { x, dims }, &[x]))
    }

    pub fn sum(&self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Label-smoothed cross-entropy over rows of `logp[..., N]`.
    ///
    /// Per row with `target != pad`: `(1-ε)·(-logp[target]) + (ε/N)·Σ_j(-logp[j])`.
    /// Returns the mean over non-pad rows and the number of such rows.
    pub fn smoothed_ce(&self, logp: Var, targets: &[usize], eps: f64, pad: usize) -> Result<(Var, usize)> {
        let (total, count) = {
            let lv = self.value(logp);
            let n = lv.last_dim();
            if lv.rows() != targets.len() {
                return Err(Error::ShapeMismatch {
                    op: "smoothed_ce",
                    left: lv.shape().to_vec(),
                    right: vec![targets.len()],
                });
            }
            let eps_t = T::from_f64_lossy(eps);
            let share = eps_t / T::from_usize(n).unwrap();
            let mut total = T::zero();
            let mut count = 0usize;
            for (r, &t) in targets.iter().enumerate() {
                if t >= n {
                    return Err(Error::IdOutOfRange { id: t, size: n });
                }
                if t == pad {
                    continue;
                }
                let row = lv.row(r);
                let all: T = row.iter().copied().sum();
                total += -(T::one() - eps_t) * row[t] - share * all;
                count += 1;
            }
            (total, count)
        };
        let mean = if count == 0 {
            T::zero()
        } else {
            total / T::from_usize(count).unwrap()
        };
        let var = self.push(
            Tensor::scalar(mean),
            Op::SmoothedCe {
                logp,
                targets: targets.to_vec(),
                eps: T::from_f64_lossy(eps),
                pad,
                count,
            },
            &[logp],
        );
        Ok((var, count))
    }

    // ----------------------------------------------------------- backward

    /// Reverse pass from a scalar `loss`. Gradients accumulate additively
    /// across every use of a value.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[id].take() else { continue };
            if !matches!(node.op, Op::Leaf) {
                propagate(&nodes, id, &gy, &mut grads);
            }
            grads[id] = Some(gy);
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| match (&n.op, g) {
                (Op::Leaf, Some(g)) if n.requires_grad => {
                    Some(Tensor::new(n.value.shape().to_vec(), g).expect("grad shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn softmax_row<T: Element>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v = *v / total);
}

fn swap12<T: Copy>(src: &[T], [a, b, c, d]: [usize; 4]) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for i in 0..a {
        for k in 0..c {
            for j in 0..b {
                let base = ((i * b + j) * c + k) * d;
                out.extend_from_slice(&src[base..base + d]);
            }
        }
    }
    out
}

fn slot<'g, T: Element>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> Option<&'g mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn accumulate<T: Element>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var, contribution: impl Iterator<Item = T>) {
    if let Some(g) = slot(grads, nodes, v) {
        for (a, c) in g.iter_mut().zip(contribution) {
            *a += c;
        }
    }
}

fn propagate<T: Element>(nodes: &[Node<T>], id: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[id];
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { x, w } => {
            let xv = &nodes[x.0].value;
            let wv = &nodes[w.0].value;
            let (k, n) = (wv.shape()[0], wv.shape()[1]);
            let m = xv.len() / k;
            if let Some(gx) = slot(grads, nodes, *x) {
                T::gemm(m, n, k, gy, false, wv.data(), true, gx, true);
            }
            if let Some(gw) = slot(grads, nodes, *w) {
                T::gemm(k, m, n, xv.data(), true, gy, false, gw, true);
            }
        }
        Op::Bmm {
            a,
            b,
            transpose_b,
            batch,
            m,
            k,
            n,
        } => {
            let (batch, m, k, n) = (*batch, *m, *k, *n);
            let av = &nodes[a.0].value;
            let bv = &nodes[b.0].value;
            if let Some(ga) = slot(grads, nodes, *a) {
                for i in 0..batch {
                    let gyi = &gy[i * m * n..(i + 1) * m * n];
                    let bi = &bv.data()[i * k * n..(i + 1) * k * n];
                    // dA = dY·Bᵀ (B stored k×n) or dY·B (B stored n×k)
                    T::gemm(m, n, k, gyi, false, bi, !*transpose_b, &mut ga[i * m * k..(i + 1) * m * k], true);
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for i in 0..batch {
                    let gyi = &gy[i * m * n..(i + 1) * m * n];
                    let ai = &av.data()[i * m * k..(i + 1) * m * k];
                    let gbi = &mut gb[i * k * n..(i + 1) * k * n];
                    if *transpose_b {
                        // dB[n×k] = dYᵀ·A
                        T::gemm(n, m, k, gyi, true, ai, false, gbi, true);
                    } else {
                        // dB[k×n] = Aᵀ·dY
                        T::gemm(k, m, n, ai, true, gyi, false, gbi, true);
                    }
                }
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, gy.iter().copied());
            accumulate(grads, nodes, *b, gy.iter().copied());
        }
        Op::Mul(a, b) => {
            let av = nodes[a.0].value.data();
            let bv = nodes[b.0].value.data();
            accumulate(grads, nodes, *a, gy.iter().zip(bv).map(|(&g, &y)| g * y));
            accumulate(grads, nodes, *b, gy.iter().zip(av).map(|(&g, &x)| g * x));
        }
        Op::AddBias { x, bias } => {
            accumulate(grads, nodes, *x, gy.iter().copied());
            if let Some(gb) = slot(grads, nodes, *bias) {
                let n = gb.len();
                for row in gy.chunks(n) {
                    for (a, &g) in gb.iter_mut().zip(row) {
                        *a += g;
                    }
                }
            }
        }
        Op::Scale { x, factor } => {
            accumulate(grads, nodes, *x, gy.iter().map(|&g| g * *factor));
        }
        Op::AddConst(x) => accumulate(grads, nodes, *x, gy.iter().copied()),
        Op::MulConst { x, factors } => {
            accumulate(grads, nodes, *x, gy.iter().zip(factors).map(|(&g, &f)| g * f));
        }
        Op::Relu(x) => {
            let xv = nodes[x.0].value.data();
            accumulate(
                grads,
                nodes,
                *x,
                gy.iter().zip(xv).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }),
            );
        }
        Op::Gelu(x) => {
            let c = T::from_f64_lossy(GELU_C);
            let a = T::from_f64_lossy(GELU_A);
            let half = T::from_f64_lossy(0.5);
            let three_a = T::from_f64_lossy(3.0 * GELU_A);
            let xv = nodes[x.0].value.data();
            accumulate(
                grads,
                nodes,
                *x,
                gy.iter().zip(xv).map(|(&g, &v)| {
                    let t = (c * (v + a * v * v * v)).tanh();
                    let d = half * (T::one() + t) + half * v * (T::one() - t * t) * c * (T::one() + three_a * v * v);
                    g * d
                }),
            );
        }
        Op::Softmax(x) => {
            let d = out.last_dim().max(1);
            let mut gx = vec![T::zero(); out.len()];
            for ((y, g), o) in out.data().chunks(d).zip(gy.chunks(d)).zip(gx.chunks_mut(d)) {
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                for j in 0..d {
                    o[j] = y[j] * (g[j] - dot);
                }
            }
            accumulate(grads, nodes, *x, gx.into_iter());
        }
        Op::LogSoftmax(x) => {
            let d = out.last_dim().max(1);
            let mut gx = vec![T::zero(); out.len()];
            for ((y, g), o) in out.data().chunks(d).zip(gy.chunks(d)).zip(gx.chunks_mut(d)) {
                let total: T = g.iter().copied().sum();
                for j in 0..d {
                    o[j] = g[j] - y[j].exp() * total;
                }
            }
            accumulate(grads, nodes, *x, gx.into_iter());
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            mean,
            rstd,
        } => {
            let xv = &nodes[x.0].value;
            let gv = nodes[gain.0].value.data();
            let d = xv.last_dim();
            let dt = T::from_usize(d).unwrap();
            let rows = xv.rows();
            let want_x = nodes[x.0].requires_grad;
            let mut gx = if want_x { vec![T::zero(); xv.len()] } else { Vec::new() };
            let mut g_gain = vec![T::zero(); d];
            let mut g_bias = vec![T::zero(); d];
            let mut xhat = vec![T::zero(); d];
            let mut dxhat = vec![T::zero(); d];
            for r in 0..rows {
                let row = xv.row(r);
                let g = &gy[r * d..(r + 1) * d];
                for j in 0..d {
                    xhat[j] = (row[j] - mean[r]) * rstd[r];
                    dxhat[j] = g[j] * gv[j];
                    g_gain[j] += g[j] * xhat[j];
                    g_bias[j] += g[j];
                }
                if want_x {
                    let m1 = dxhat.iter().copied().sum::<T>() / dt;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / dt;
                    for j in 0..d {
                        gx[r * d + j] = rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
            }
            if want_x {
                accumulate(grads, nodes, *x, gx.into_iter());
            }
            accumulate(grads, nodes, *gain, g_gain.into_iter());
            accumulate(grads, nodes, *bias, g_bias.into_iter());
        }
        Op::Embedding { table, ids, frozen_row } => {
            let d = nodes[table.0].value.shape()[1];
            if let Some(gt) = slot(grads, nodes, *table) {
                for (i, &id) in ids.iter().enumerate() {
                    if Some(id) == *frozen_row {
                        continue;
                    }
                    for j in 0..d {
                        gt[id * d + j] += gy[i * d + j];
                    }
                }
            }
        }
        Op::Reshape(x) => accumulate(grads, nodes, *x, gy.iter().copied()),
        Op::SwapAxes12 { x, dims } => {
            let [a, b, c, d] = *dims;
            // output is [a, c, b, d]; swapping back restores [a, b, c, d]
            let back = swap12(gy, [a, c, b, d]);
            accumulate(grads, nodes, *x, back.into_iter());
        }
        Op::Sum(x) => {
            let n = nodes[x.0].value.len();
            accumulate(grads, nodes, *x, std::iter::repeat_n(gy[0], n));
        }
        Op::SmoothedCe {
            logp,
            targets,
            eps,
            pad,
            count,
        } => {
            if *count == 0 {
                return;
            }
            let n = nodes[logp.0].value.last_dim();
            let scale = gy[0] / T::from_usize(*count).unwrap();
            let share = *eps / T::from_usize(n).unwrap() * scale;
            let hit = (T::one() - *eps) * scale;
            if let Some(g) = slot(grads, nodes, *logp) {
                for (r, &t) in targets.iter().enumerate() {
                    if t == *pad {
                        continue;
                    }
                    let row = &mut g[r * n..(r + 1) * n];
                    row.iter_mut().for_each(|v| *v -= share);
                    row[t] -= hit;
                }
            }
        }
    }
}
