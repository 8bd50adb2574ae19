//! Layer wrappers over the tape plus conversions between pose arrays and tensors.

use motionstyle_tape::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use ndarray::Array2;
use rand::Rng;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const IN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    /// Same-padded convolution (`pad = k / 2`).
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.weight"), &[cout, cin, k], cin * k, rng);
        let b = store.add_uniform(format!("{name}.bias"), &[cout], cin * k, rng);
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv1d(x, w, Some(b), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, fin: usize, fout: usize, rng: &mut impl Rng) -> Self {
        let w = store.add_uniform(format!("{name}.weight"), &[fout, fin], fin, rng);
        let b = store.add_uniform(format!("{name}.bias"), &[fout], fin, rng);
        Self { w, b }
    }

    /// Zero weights and a constant bias, so the layer starts as a fixed output.
    pub fn zeroed<T: Real>(store: &mut ParamStore<T>, name: &str, fin: usize, fout: usize, bias: f64) -> Self {
        let w = store.add_const(format!("{name}.weight"), &[fout, fin], 0.0);
        let b = store.add_const(format!("{name}.bias"), &[fout], bias);
        Self { w, b }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, Some(b))
    }
}

pub fn lrelu<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    tape.leaky_relu(x, LEAKY_SLOPE)
}

/// Stacks `T × C` frame arrays into a channels-first `[B, C, T]` tensor.
pub fn frames_to_tensor<T: Real>(items: &[&Array2<f32>]) -> Tensor<T> {
    let (t, c) = items[0].dim();
    let mut data = Vec::with_capacity(items.len() * t * c);
    for a in items {
        assert_eq!(a.dim(), (t, c), "batch items must share a shape");
        for ch in 0..c {
            data.extend(a.column(ch).iter().map(|&v| T::lit(v as f64)));
        }
    }
    Tensor::from_vec(&[items.len(), c, t], data).expect("batch shape")
}

/// Batch item `b` of a `[B, C, T]` tensor as a `T × C` array.
pub fn tensor_to_frames<T: Real>(x: &Tensor<T>, b: usize) -> Array2<f32> {
    let (c, t) = (x.dim(1), x.dim(2));
    let base = b * c * t;
    let d = x.data();
    Array2::from_shape_fn((t, c), |(ti, ci)| d[base + ci * t + ti].as_f64() as f32)
}

/// Random standard-normal tensor.
pub fn randn<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.sample::<f64, _>(rand_distr::StandardNormal))).collect();
    Tensor::from_vec(shape, data).expect("randn shape")
}

/// Reparameterised sample `mu + exp(logvar / 2) · noise`.
pub fn reparameterize<T: Real>(tape: &mut Tape<T>, mu: Var, logvar: Var, noise: Tensor<T>) -> Var {
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let eps = tape.constant(noise);
    let scaled = tape.mul(sigma, eps);
    tape.add(mu, scaled)
}

/// Replicates the last time step until the length is a multiple of `m`.
pub fn edge_pad_time(frames: &Array2<f32>, m: usize) -> Array2<f32> {
    let t = frames.nrows();
    let padded = t.div_ceil(m) * m;
    if padded == t {
        return frames.clone();
    }
    let mut out = Array2::zeros((padded, frames.ncols()));
    out.slice_mut(ndarray::s![..t, ..]).assign(frames);
    let last = frames.row(t - 1).to_owned();
    for i in t..padded {
        out.row_mut(i).assign(&last);
    }
    out
}
