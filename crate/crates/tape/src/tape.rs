//! Wengert-list autodiff.
//!
//! Values are computed eagerly while the graph is recorded; `backward` walks
//! the list in reverse and accumulates gradients only into nodes that lead to
//! a trainable parameter or an explicitly watched input.

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::real::{gemm, MatRef, Real};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct ParamKey {
    store: u64,
    id: usize,
}

enum Op<T> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Exp(Var),
    Abs(Var),
    LeakyRelu(Var, T),
    Sum(Var),
    Mean(Var),
    MeanAbsDiff(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv1d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, cols: Vec<T> },
    Upsample { x: Var, factor: usize },
    InstanceNorm { x: Var, xhat: Vec<T>, inv_std: Vec<T> },
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    MeanTime(Var),
    Narrow { x: Var, axis: usize, start: usize },
    Concat { a: Var, b: Var, axis: usize },
    Embedding { table: Var, rows: Vec<usize> },
    KlDiag { mu_a: Var, lv_a: Var, other: Option<(Var, Var)> },
    CrossEntropy { logits: Var, probs: Vec<T>, labels: Vec<usize> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
    params: HashMap<ParamKey, usize>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to any node that required one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node[v.0].as_ref()
    }

    /// Gradient of a parameter, if it took part in the graph.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Option<&Tensor<T>> {
        let node = self.params.get(&ParamKey { store: store.uid(), id: id.0 })?;
        self.by_node[*node].as_ref()
    }

    /// True when every present gradient is finite.
    pub fn all_finite(&self) -> bool {
        self.by_node.iter().flatten().all(Tensor::is_finite)
    }
}

/// Records operations for reverse-mode differentiation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamKey, Var>,
    grad_enabled: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_nodes: HashMap::new(), grad_enabled: true }
    }

    /// A tape that never tracks gradients (inference).
    pub fn inference() -> Self {
        Self { grad_enabled: false, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad: needs_grad && self.grad_enabled });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|&p| self.needs(p));
        self.push(value, op, needs)
    }

    /// Input that never receives gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is wanted (e.g. for finite-difference checks).
    pub fn watch(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let key = ParamKey { store: store.uid(), id: id.0 };
        if let Some(&v) = self.param_nodes.get(&key) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, store.trainable());
        self.param_nodes.insert(key, v);
        v
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(va.shape(), data).expect("same shape");
        self.push_op(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::from_vec(va.shape(), data).expect("same shape");
        self.push_op(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(va.shape(), data).expect("same shape");
        self.push_op(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::lit(c);
        let out = self.value(a).map(|x| x * c);
        self.push_op(out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let c = T::lit(c);
        let out = self.value(a).map(|x| x + c);
        self.push_op(out, Op::AddScalar(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::exp);
        self.push_op(out, Op::Exp(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::abs);
        self.push_op(out, Op::Abs(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        let out = self.value(a).map(|x| if x > T::zero() { x } else { x * s });
        self.push_op(out, Op::LeakyRelu(a, s), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push_op(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / T::lit(v.numel().max(1) as f64));
        self.push_op(out, Op::Mean(a), &[a])
    }

    /// Mean absolute difference, the per-element L1 loss.
    pub fn l1(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "l1");
        let va = self.value(a);
        let vb = self.value(b);
        let n = T::lit(va.numel().max(1) as f64);
        let s: T = va.data().iter().zip(vb.data()).map(|(&x, &y)| (x - y).abs()).sum();
        self.push_op(Tensor::scalar(s / n), Op::MeanAbsDiff(a, b), &[a, b])
    }

    /// `x·wᵀ + b` for `x: [B, F]`, `w: [O, F]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (bsz, f) = (self.shape(x)[0], self.shape(x)[1]);
        let o = self.shape(w)[0];
        assert_eq!(self.shape(w)[1], f, "linear: weight in_features mismatch");
        let mut out = vec![T::zero(); bsz * o];
        gemm(
            MatRef::new(self.value(x).data(), bsz, f),
            MatRef::new(self.value(w).data(), o, f).t(),
            &mut out,
            false,
        );
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bias).for_each(|(y, &bb)| *y += bb);
            }
        }
        let out = Tensor::from_vec(&[bsz, o], out).expect("linear shape");
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push_op(out, Op::Linear { x, w, b }, &parents)
    }

    /// 1-D convolution over `x: [B, C, T]` with `w: [O, C, K]`, zero padding.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (bsz, c, t) = {
            let s = self.shape(x);
            (s[0], s[1], s[2])
        };
        let (o, c2, k) = {
            let s = self.shape(w);
            (s[0], s[1], s[2])
        };
        assert_eq!(c, c2, "conv1d: channel mismatch");
        assert!(t + 2 * pad >= k, "conv1d: input too short for kernel");
        let tout = (t + 2 * pad - k) / stride + 1;
        let ncol = bsz * tout;
        let xv = self.value(x).data();
        let mut cols = vec![T::zero(); c * k * ncol];
        for ci in 0..c {
            for ki in 0..k {
                let row = &mut cols[(ci * k + ki) * ncol..(ci * k + ki + 1) * ncol];
                for bi in 0..bsz {
                    let src = &xv[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                    let dst = &mut row[bi * tout..(bi + 1) * tout];
                    for (to, d) in dst.iter_mut().enumerate() {
                        let pos = (to * stride + ki) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < t {
                            *d = src[pos as usize];
                        }
                    }
                }
            }
        }
        let mut y2 = vec![T::zero(); o * ncol];
        gemm(
            MatRef::new(self.value(w).data(), o, c * k),
            MatRef::new(&cols, c * k, ncol),
            &mut y2,
            false,
        );
        let mut out = vec![T::zero(); bsz * o * tout];
        let bias = b.map(|b| self.value(b).data().to_vec());
        for oi in 0..o {
            let bb = bias.as_ref().map_or(T::zero(), |v| v[oi]);
            for bi in 0..bsz {
                let src = &y2[oi * ncol + bi * tout..oi * ncol + (bi + 1) * tout];
                let dst = &mut out[(bi * o + oi) * tout..(bi * o + oi + 1) * tout];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + bb);
            }
        }
        let out = Tensor::from_vec(&[bsz, o, tout], out).expect("conv shape");
        let mut parents = vec![x, w];
        parents.extend(b);
        let needs = parents.iter().any(|&p| self.needs(p));
        let cols = if needs && self.needs(w) { cols } else { Vec::new() };
        self.push(out, Op::Conv1d { x, w, b, stride, pad, cols }, needs)
    }

    /// Nearest-neighbour upsampling along time.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let s = self.shape(x).to_vec();
        let (rows, t) = (s[0] * s[1], s[2]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(rows * t * factor);
        for r in 0..rows {
            for &v in &xv[r * t..(r + 1) * t] {
                for _ in 0..factor {
                    out.push(v);
                }
            }
        }
        let out = Tensor::from_vec(&[s[0], s[1], t * factor], out).expect("upsample shape");
        self.push_op(out, Op::Upsample { x, factor }, &[x])
    }

    /// Instance normalisation over the time axis of `[B, C, T]` (no affine).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let s = self.shape(x).to_vec();
        let (rows, t) = (s[0] * s[1], s[2]);
        let xv = self.value(x).data();
        let tf = T::lit(t as f64);
        let eps = T::lit(eps);
        let mut xhat = vec![T::zero(); rows * t];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &xv[r * t..(r + 1) * t];
            let mean = row.iter().copied().sum::<T>() / tf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / tf;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for (h, &v) in xhat[r * t..(r + 1) * t].iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
        }
        let out = Tensor::from_vec(&s, xhat.clone()).expect("in shape");
        let needs = self.needs(x);
        let (xhat, inv_std) = if needs { (xhat, inv_std) } else { (Vec::new(), Vec::new()) };
        self.push(out, Op::InstanceNorm { x, xhat, inv_std }, needs)
    }

    /// `x[b,c,:] * gamma[b,c] + beta[b,c]`.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(self.shape(gamma), &s[..2], "channel_affine: gamma shape");
        assert_eq!(self.shape(beta), &s[..2], "channel_affine: beta shape");
        let t = s[2];
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut out = Vec::with_capacity(xv.len());
        for r in 0..s[0] * s[1] {
            out.extend(xv[r * t..(r + 1) * t].iter().map(|&v| v * g[r] + bt[r]));
        }
        let out = Tensor::from_vec(&s, out).expect("affine shape");
        self.push_op(out, Op::ChannelAffine { x, gamma, beta }, &[x, gamma, beta])
    }

    /// Average over time: `[B, C, T] -> [B, C]`.
    pub fn mean_time(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let t = s[2];
        let tf = T::lit(t as f64);
        let xv = self.value(x).data();
        let out: Vec<T> =
            (0..s[0] * s[1]).map(|r| xv[r * t..(r + 1) * t].iter().copied().sum::<T>() / tf).collect();
        let out = Tensor::from_vec(&s[..2], out).expect("mean_time shape");
        self.push_op(out, Op::MeanTime(x), &[x])
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert!(start + len <= s[axis], "narrow out of range");
        let (outer, dim, inner) = outer_inner(&s, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            out.extend_from_slice(&xv[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = s.clone();
        shape[axis] = len;
        let out = Tensor::from_vec(&shape, out).expect("narrow shape");
        self.push_op(out, Op::Narrow { x, axis, start }, &[x])
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Var {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert_eq!(sa.len(), sb.len(), "concat rank mismatch");
        for (i, (x, y)) in sa.iter().zip(&sb).enumerate() {
            assert!(i == axis || x == y, "concat: shape mismatch {sa:?} vs {sb:?}");
        }
        let (outer, da, inner) = outer_inner(&sa, axis);
        let db = sb[axis];
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let mut out = Vec::with_capacity(va.len() + vb.len());
        for o in 0..outer {
            out.extend_from_slice(&va[o * da * inner..(o + 1) * da * inner]);
            out.extend_from_slice(&vb[o * db * inner..(o + 1) * db * inner]);
        }
        let mut shape = sa.clone();
        shape[axis] = da + db;
        let out = Tensor::from_vec(&shape, out).expect("concat shape");
        self.push_op(out, Op::Concat { a, b, axis }, &[a, b])
    }

    /// Row lookup: `table: [N, E]`, one row per entry of `rows`.
    pub fn embedding(&mut self, table: Var, rows: &[usize]) -> Var {
        let e = self.shape(table)[1];
        let n = self.shape(table)[0];
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(rows.len() * e);
        for &r in rows {
            assert!(r < n, "embedding row {r} out of range {n}");
            out.extend_from_slice(&tv[r * e..(r + 1) * e]);
        }
        let out = Tensor::from_vec(&[rows.len(), e], out).expect("embedding shape");
        self.push_op(out, Op::Embedding { table, rows: rows.to_vec() }, &[table])
    }

    /// Batch-mean of `KL(N(mu_a, exp(lv_a)) || N(mu_b, exp(lv_b)))` summed over
    /// dimensions; `other = None` compares against the standard normal.
    pub fn kl_diag(&mut self, mu_a: Var, lv_a: Var, other: Option<(Var, Var)>) -> Var {
        let s = self.shape(mu_a).to_vec();
        assert_eq!(self.shape(lv_a), &s[..], "kl: log-variance shape");
        if let Some((mb, lb)) = other {
            assert_eq!(self.shape(mb), &s[..], "kl: other mean shape");
            assert_eq!(self.shape(lb), &s[..], "kl: other log-variance shape");
        }
        let bsz = s[0].max(1);
        let ma = self.value(mu_a).data();
        let la = self.value(lv_a).data();
        let (mb, lb): (Vec<T>, Vec<T>) = match other {
            Some((m, l)) => (self.value(m).data().to_vec(), self.value(l).data().to_vec()),
            None => (vec![T::zero(); ma.len()], vec![T::zero(); ma.len()]),
        };
        let half = T::lit(0.5);
        let mut total = T::zero();
        for i in 0..ma.len() {
            let d = ma[i] - mb[i];
            total += half * (lb[i] - la[i] + (la[i].exp() + d * d) / lb[i].exp() - T::one());
        }
        let out = Tensor::scalar(total / T::lit(bsz as f64));
        let mut parents = vec![mu_a, lv_a];
        if let Some((m, l)) = other {
            parents.push(m);
            parents.push(l);
        }
        self.push_op(out, Op::KlDiag { mu_a, lv_a, other }, &parents)
    }

    /// Batch-mean softmax cross-entropy of `logits: [B, N]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (b, n) = (self.shape(logits)[0], self.shape(logits)[1]);
        assert_eq!(labels.len(), b, "cross_entropy: one label per row");
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); b * n];
        let mut total = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            assert!(y < n, "cross_entropy: label {y} out of range {n}");
            let row = &lv[i * n..(i + 1) * n];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - m).exp()).sum();
            for j in 0..n {
                probs[i * n + j] = (row[j] - m).exp() / z;
            }
            total += z.ln() + m - row[y];
        }
        let out = Tensor::scalar(total / T::lit(b.max(1) as f64));
        self.push_op(out, Op::CrossEntropy { logits, probs, labels: labels.to_vec() }, &[logits])
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        let params = self
            .param_nodes
            .iter()
            .filter(|(_, v)| self.nodes[v.0].needs_grad)
            .map(|(k, v)| (*k, v.0))
            .collect();
        Gradients { by_node: grads, params }
    }

    fn backprop_node(&self, i: usize, gy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let g = gy.data();
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
                self.acc(grads, *b, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
                self.acc(grads, *b, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                self.acc(grads, *a, |d| {
                    for ((x, &y), &o) in d.iter_mut().zip(g).zip(vb) {
                        *x += y * o;
                    }
                });
                self.acc(grads, *b, |d| {
                    for ((x, &y), &o) in d.iter_mut().zip(g).zip(va) {
                        *x += y * o;
                    }
                });
            }
            Op::Scale(a, c) => {
                self.acc(grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *c));
            }
            Op::AddScalar(a) => {
                self.acc(grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
            Op::Exp(a) => {
                let out = self.nodes[i].value.data();
                self.acc(grads, *a, |d| {
                    for ((x, &y), &o) in d.iter_mut().zip(g).zip(out) {
                        *x += y * o;
                    }
                });
            }
            Op::Abs(a) => {
                let va = self.value(*a).data();
                self.acc(grads, *a, |d| {
                    for ((x, &y), &v) in d.iter_mut().zip(g).zip(va) {
                        *x += y * sign(v);
                    }
                });
            }
            Op::LeakyRelu(a, s) => {
                let va = self.value(*a).data();
                self.acc(grads, *a, |d| {
                    for ((x, &y), &v) in d.iter_mut().zip(g).zip(va) {
                        *x += if v > T::zero() { y } else { y * *s };
                    }
                });
            }
            Op::Sum(a) => {
                let y = g[0];
                self.acc(grads, *a, |d| d.iter_mut().for_each(|x| *x += y));
            }
            Op::Mean(a) => {
                let y = g[0] / T::lit(self.value(*a).numel().max(1) as f64);
                self.acc(grads, *a, |d| d.iter_mut().for_each(|x| *x += y));
            }
            Op::MeanAbsDiff(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let y = g[0] / T::lit(va.len().max(1) as f64);
                self.acc(grads, *a, |d| {
                    for ((x, &p), &q) in d.iter_mut().zip(va).zip(vb) {
                        *x += y * sign(p - q);
                    }
                });
                self.acc(grads, *b, |d| {
                    for ((x, &p), &q) in d.iter_mut().zip(va).zip(vb) {
                        *x -= y * sign(p - q);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (bsz, f) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[0];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                self.acc(grads, *x, |d| {
                    gemm(MatRef::new(g, bsz, o), MatRef::new(wv, o, f), d, true);
                });
                self.acc(grads, *w, |d| {
                    gemm(MatRef::new(g, bsz, o).t(), MatRef::new(xv, bsz, f), d, true);
                });
                if let Some(b) = b {
                    self.acc(grads, *b, |d| {
                        for row in g.chunks(o) {
                            d.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                        }
                    });
                }
            }
            Op::Conv1d { x, w, b, stride, pad, cols } => {
                self.conv1d_backward(*x, *w, *b, *stride, *pad, cols, g, grads);
            }
            Op::Upsample { x, factor } => {
                let f = *factor;
                self.acc(grads, *x, |d| {
                    for (j, dv) in d.iter_mut().enumerate() {
                        *dv += g[j * f..(j + 1) * f].iter().copied().sum::<T>();
                    }
                });
            }
            Op::InstanceNorm { x, xhat, inv_std } => {
                let t = self.shape(*x)[2];
                let tf = T::lit(t as f64);
                self.acc(grads, *x, |d| {
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gr = &g[r * t..(r + 1) * t];
                        let hr = &xhat[r * t..(r + 1) * t];
                        let sg: T = gr.iter().copied().sum();
                        let sgh: T = gr.iter().zip(hr).map(|(&a, &b)| a * b).sum();
                        for ((dv, &gv), &hv) in d[r * t..(r + 1) * t].iter_mut().zip(gr).zip(hr) {
                            *dv += is / tf * (tf * gv - sg - hv * sgh);
                        }
                    }
                });
            }
            Op::ChannelAffine { x, gamma, beta } => {
                let t = self.shape(*x)[2];
                let xv = self.value(*x).data();
                let gv = self.value(*gamma).data();
                self.acc(grads, *x, |d| {
                    for (r, &gm) in gv.iter().enumerate() {
                        for (dv, &y) in d[r * t..(r + 1) * t].iter_mut().zip(&g[r * t..(r + 1) * t]) {
                            *dv += y * gm;
                        }
                    }
                });
                self.acc(grads, *gamma, |d| {
                    for (r, dv) in d.iter_mut().enumerate() {
                        *dv += g[r * t..(r + 1) * t]
                            .iter()
                            .zip(&xv[r * t..(r + 1) * t])
                            .map(|(&a, &b)| a * b)
                            .sum::<T>();
                    }
                });
                self.acc(grads, *beta, |d| {
                    for (r, dv) in d.iter_mut().enumerate() {
                        *dv += g[r * t..(r + 1) * t].iter().copied().sum::<T>();
                    }
                });
            }
            Op::MeanTime(x) => {
                let t = self.shape(*x)[2];
                let tf = T::lit(t as f64);
                self.acc(grads, *x, |d| {
                    for (r, &y) in g.iter().enumerate() {
                        d[r * t..(r + 1) * t].iter_mut().for_each(|v| *v += y / tf);
                    }
                });
            }
            Op::Narrow { x, axis, start } => {
                let s = self.shape(*x).to_vec();
                let (outer, dim, inner) = outer_inner(&s, *axis);
                let len = self.nodes[i].value.shape()[*axis];
                self.acc(grads, *x, |d| {
                    for o in 0..outer {
                        let dst = &mut d[o * dim * inner + start * inner..o * dim * inner + (start + len) * inner];
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::Concat { a, b, axis } => {
                let sa = self.shape(*a).to_vec();
                let (outer, da, inner) = outer_inner(&sa, *axis);
                let db = self.shape(*b)[*axis];
                let tot = (da + db) * inner;
                self.acc(grads, *a, |d| {
                    for o in 0..outer {
                        let src = &g[o * tot..o * tot + da * inner];
                        d[o * da * inner..(o + 1) * da * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &y)| *x += y);
                    }
                });
                self.acc(grads, *b, |d| {
                    for o in 0..outer {
                        let src = &g[o * tot + da * inner..(o + 1) * tot];
                        d[o * db * inner..(o + 1) * db * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::Embedding { table, rows } => {
                let e = self.shape(*table)[1];
                self.acc(grads, *table, |d| {
                    for (k, &r) in rows.iter().enumerate() {
                        d[r * e..(r + 1) * e]
                            .iter_mut()
                            .zip(&g[k * e..(k + 1) * e])
                            .for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::CrossEntropy { logits, probs, labels } => {
                let n = self.shape(*logits)[1];
                let y = g[0] / T::lit(labels.len().max(1) as f64);
                self.acc(grads, *logits, |d| {
                    for (i, &l) in labels.iter().enumerate() {
                        for j in 0..n {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            d[i * n + j] += y * (probs[i * n + j] - onehot);
                        }
                    }
                });
            }
            Op::KlDiag { mu_a, lv_a, other } => {
                let ma = self.value(*mu_a).data();
                let la = self.value(*lv_a).data();
                let bsz = self.shape(*mu_a)[0].max(1);
                let y = g[0] / T::lit(bsz as f64);
                let half = T::lit(0.5);
                let zeros = vec![T::zero(); ma.len()];
                let (mb, lb) = match other {
                    Some((m, l)) => (self.value(*m).data(), self.value(*l).data()),
                    None => (&zeros[..], &zeros[..]),
                };
                self.acc(grads, *mu_a, |d| {
                    for j in 0..d.len() {
                        d[j] += y * (ma[j] - mb[j]) / lb[j].exp();
                    }
                });
                self.acc(grads, *lv_a, |d| {
                    for j in 0..d.len() {
                        d[j] += y * half * ((la[j] - lb[j]).exp() - T::one());
                    }
                });
                if let Some((m, l)) = other {
                    self.acc(grads, *m, |d| {
                        for j in 0..d.len() {
                            d[j] -= y * (ma[j] - mb[j]) / lb[j].exp();
                        }
                    });
                    self.acc(grads, *l, |d| {
                        for j in 0..d.len() {
                            let diff = ma[j] - mb[j];
                            d[j] += y * half * (T::one() - (la[j].exp() + diff * diff) / lb[j].exp());
                        }
                    });
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        cols: &[T],
        g: &[T],
        grads: &mut [Option<Tensor<T>>],
    ) {
        let (bsz, c, t) = {
            let s = self.shape(x);
            (s[0], s[1], s[2])
        };
        let (o, _, k) = {
            let s = self.shape(w);
            (s[0], s[1], s[2])
        };
        let tout = (t + 2 * pad - k) / stride + 1;
        let ncol = bsz * tout;
        // dY as [O, B*Tout]
        let mut gy2 = vec![T::zero(); o * ncol];
        for oi in 0..o {
            for bi in 0..bsz {
                let src = &g[(bi * o + oi) * tout..(bi * o + oi + 1) * tout];
                gy2[oi * ncol + bi * tout..oi * ncol + (bi + 1) * tout].copy_from_slice(src);
            }
        }
        if let Some(b) = b {
            self.acc(grads, b, |d| {
                for (oi, dv) in d.iter_mut().enumerate() {
                    *dv += gy2[oi * ncol..(oi + 1) * ncol].iter().copied().sum::<T>();
                }
            });
        }
        if self.needs(w) {
            self.acc(grads, w, |d| {
                gemm(MatRef::new(&gy2, o, ncol), MatRef::new(cols, c * k, ncol).t(), d, true);
            });
        }
        if self.needs(x) {
            let wv = self.value(w).data();
            let mut dcols = vec![T::zero(); c * k * ncol];
            gemm(MatRef::new(wv, o, c * k).t(), MatRef::new(&gy2, o, ncol), &mut dcols, false);
            self.acc(grads, x, |d| {
                for ci in 0..c {
                    for ki in 0..k {
                        let row = &dcols[(ci * k + ki) * ncol..(ci * k + ki + 1) * ncol];
                        for bi in 0..bsz {
                            let dst = &mut d[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                            for (to, &v) in row[bi * tout..(bi + 1) * tout].iter().enumerate() {
                                let pos = (to * stride + ki) as isize - pad as isize;
                                if pos >= 0 && (pos as usize) < t {
                                    dst[pos as usize] += v;
                                }
                            }
                        }
                    }
                }
            });
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.needs(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape()));
        f(slot.data_mut());
    }
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
