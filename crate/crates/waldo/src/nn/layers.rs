//! Layer implementations. Each layer owns its parameters, gradients, and
//! the forward cache needed by its backward pass; a backward call consumes
//! the cache of the immediately preceding forward.

use super::conv::{col2im, conv_transpose_out, im2col, PatchGeometry};
use super::{init_uniform, Mode, ParamRef, Scalar, StateRef};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `m` is `[rows, batch*t]` with batch-major columns; returns `[batch, rows*t]`.
fn to_batch_major<F: Scalar>(m: &Array2<F>, batch: usize) -> Array2<F> {
    let (rows, bt) = m.dim();
    let t = bt / batch;
    debug_assert_eq!(rows * t * batch, rows * bt);
    let mut y = Array2::<F>::zeros((batch, rows * t));
    let ms = m.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        for b in 0..batch {
            ys[b * rows * t + r * t..][..t].copy_from_slice(&ms[r * bt + b * t..][..t]);
        }
    }
    y
}

/// Inverse of [`to_batch_major`]: `[batch, rows*t]` to `[rows, batch*t]`.
fn to_row_major<F: Scalar>(y: &Array2<F>, rows: usize) -> Array2<F> {
    let (batch, rt) = y.dim();
    let t = rt / rows;
    let mut m = Array2::<F>::zeros((rows, batch * t));
    let ys = y.as_slice().expect("standard layout");
    let ms = m.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        for b in 0..batch {
            ms[r * batch * t + b * t..][..t].copy_from_slice(&ys[b * rt + r * t..][..t]);
        }
    }
    m
}

/// Fully connected layer; weight is `[in, out]`.
#[derive(Debug, Clone)]
pub struct Affine<F> {
    w: Array2<F>,
    b: Option<Array1<F>>,
    gw: Array2<F>,
    gb: Option<Array1<F>>,
    x: Option<Array2<F>>,
}

impl<F: Scalar> Affine<F> {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Array2::zeros((in_dim, out_dim));
        init_uniform(w.as_slice_mut().unwrap(), in_dim, rng);
        let b = bias.then(|| {
            let mut b = Array1::zeros(out_dim);
            init_uniform(b.as_slice_mut().unwrap(), in_dim, rng);
            b
        });
        let gb = b.as_ref().map(|_| Array1::zeros(out_dim));
        Self {
            gw: Array2::zeros(w.dim()),
            w,
            b,
            gb,
            x: None,
        }
    }

    fn forward(&mut self, x: &Array2<F>, _mode: Mode) -> Array2<F> {
        self.x = Some(x.clone());
        let mut y = x.dot(&self.w);
        if let Some(b) = &self.b {
            y = y + b;
        }
        y
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let x = self.x.take().expect("backward without forward");
        self.gw = &self.gw + &x.t().dot(g);
        if let Some(gb) = &mut self.gb {
            *gb = &*gb + &g.sum_axis(Axis(0));
        }
        g.dot(&self.w.t())
    }
}

/// 2-D convolution over flat `[B, C*H*W]` batches via im2col + GEMM.
/// Weight is `[out_ch, in_ch*k*k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    geom: PatchGeometry,
    out_ch: usize,
    w: Array2<F>,
    b: Option<Array1<F>>,
    gw: Array2<F>,
    gb: Option<Array1<F>>,
    cols: Option<Array2<F>>,
    batch: usize,
}

impl<F: Scalar> Conv2d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let geom = PatchGeometry::conv(in_ch, in_h, in_w, k, stride, pad);
        let fan_in = in_ch * k * k;
        let mut w = Array2::zeros((out_ch, fan_in));
        init_uniform(w.as_slice_mut().unwrap(), fan_in, rng);
        let b = bias.then(|| {
            let mut b = Array1::zeros(out_ch);
            init_uniform(b.as_slice_mut().unwrap(), fan_in, rng);
            b
        });
        let gb = b.as_ref().map(|_| Array1::zeros(out_ch));
        Self {
            geom,
            out_ch,
            gw: Array2::zeros(w.dim()),
            w,
            b,
            gb,
            cols: None,
            batch: 0,
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.geom.oh * self.geom.ow
    }

    fn forward(&mut self, x: &Array2<F>, _mode: Mode) -> Array2<F> {
        self.batch = x.nrows();
        let cols = im2col(x, &self.geom);
        let mut out = self.w.dot(&cols);
        if let Some(b) = &self.b {
            out = out + &b.view().insert_axis(Axis(1));
        }
        self.cols = Some(cols);
        to_batch_major(&out, self.batch)
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let cols = self.cols.take().expect("backward without forward");
        let g_mat = to_row_major(g, self.out_ch);
        self.gw = &self.gw + &g_mat.dot(&cols.t());
        if let Some(gb) = &mut self.gb {
            *gb = &*gb + &g_mat.sum_axis(Axis(1));
        }
        let gcols = self.w.t().dot(&g_mat);
        col2im(&gcols, &self.geom, self.batch)
    }
}

/// Transposed 2-D convolution (the adjoint re-indexing of [`Conv2d`]).
/// Weight is `[in_ch, out_ch*k*k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<F> {
    /// Geometry of the adjoint convolution: its image is this layer's
    /// output, its patch grid this layer's input.
    geom: PatchGeometry,
    in_ch: usize,
    out_ch: usize,
    w: Array2<F>,
    b: Option<Array1<F>>,
    gw: Array2<F>,
    gb: Option<Array1<F>>,
    x_mat: Option<Array2<F>>,
    batch: usize,
}

impl<F: Scalar> ConvTranspose2d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let oh = conv_transpose_out(in_h, k, stride, pad);
        let ow = conv_transpose_out(in_w, k, stride, pad);
        let geom = PatchGeometry {
            c: out_ch,
            h: oh,
            w: ow,
            k,
            stride,
            pad,
            oh: in_h,
            ow: in_w,
        };
        let fan_in = out_ch * k * k;
        let mut w = Array2::zeros((in_ch, out_ch * k * k));
        init_uniform(w.as_slice_mut().unwrap(), fan_in, rng);
        let b = bias.then(|| {
            let mut b = Array1::zeros(out_ch);
            init_uniform(b.as_slice_mut().unwrap(), fan_in, rng);
            b
        });
        let gb = b.as_ref().map(|_| Array1::zeros(out_ch));
        Self {
            geom,
            in_ch,
            out_ch,
            gw: Array2::zeros(w.dim()),
            w,
            b,
            gb,
            x_mat: None,
            batch: 0,
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.geom.h * self.geom.w
    }

    fn forward(&mut self, x: &Array2<F>, _mode: Mode) -> Array2<F> {
        self.batch = x.nrows();
        let x_mat = to_row_major(x, self.in_ch);
        let cols = self.w.t().dot(&x_mat);
        let mut y = col2im(&cols, &self.geom, self.batch);
        if let Some(b) = &self.b {
            let ohw = self.geom.h * self.geom.w;
            let ys = y.as_slice_mut().unwrap();
            for bi in 0..self.batch {
                for o in 0..self.out_ch {
                    let bias = b[o];
                    for v in ys[bi * self.out_ch * ohw + o * ohw..][..ohw].iter_mut() {
                        *v = *v + bias;
                    }
                }
            }
        }
        self.x_mat = Some(x_mat);
        y
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let x_mat = self.x_mat.take().expect("backward without forward");
        let gcols = im2col(g, &self.geom);
        self.gw = &self.gw + &x_mat.dot(&gcols.t());
        if let Some(gb) = &mut self.gb {
            let ohw = self.geom.h * self.geom.w;
            let gs = g.as_slice().unwrap();
            for bi in 0..self.batch {
                for o in 0..self.out_ch {
                    let sum: F = gs[bi * self.out_ch * ohw + o * ohw..][..ohw].iter().copied().sum();
                    gb[o] = gb[o] + sum;
                }
            }
        }
        let gx_mat = self.w.dot(&gcols);
        to_batch_major(&gx_mat, self.batch)
    }
}

/// Per-channel batch normalization over `[B, channels*spatial]` batches.
/// Training uses batch statistics; evaluation uses running averages (the
/// running variance keeps the unbiased estimate).
#[derive(Debug, Clone)]
pub struct BatchNorm<F> {
    channels: usize,
    spatial: usize,
    gamma: Array1<F>,
    beta: Array1<F>,
    running_mean: Array1<F>,
    running_var: Array1<F>,
    g_gamma: Array1<F>,
    g_beta: Array1<F>,
    momentum: f64,
    eps: f64,
    cache: Option<(Array2<F>, Vec<F>)>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize, spatial: usize) -> Self {
        Self {
            channels,
            spatial,
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn forward(&mut self, x: &Array2<F>, mode: Mode) -> Array2<F> {
        let batch = x.nrows();
        debug_assert_eq!(x.ncols(), self.channels * self.spatial);
        let n = batch * self.spatial;
        let mut y = Array2::<F>::zeros(x.dim());
        let xs = x.as_slice().unwrap();
        let stride = self.channels * self.spatial;

        if mode == Mode::Eval {
            let ys = y.as_slice_mut().unwrap();
            for ch in 0..self.channels {
                let inv = F::one() / (self.running_var[ch] + F::from_f64(self.eps)).sqrt();
                let (mu, ga, be) = (self.running_mean[ch], self.gamma[ch], self.beta[ch]);
                for b in 0..batch {
                    let base = b * stride + ch * self.spatial;
                    for i in 0..self.spatial {
                        ys[base + i] = ga * (xs[base + i] - mu) * inv + be;
                    }
                }
            }
            return y;
        }

        let mut x_hat = Array2::<F>::zeros(x.dim());
        let mut inv_stds = Vec::with_capacity(self.channels);
        {
            let xh = x_hat.as_slice_mut().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for ch in 0..self.channels {
                let mut sum = F::zero();
                let mut sq = F::zero();
                for b in 0..batch {
                    let base = b * stride + ch * self.spatial;
                    for i in 0..self.spatial {
                        let v = xs[base + i];
                        sum = sum + v;
                        sq = sq + v * v;
                    }
                }
                let nf = F::from_f64(n as f64);
                let mean = sum / nf;
                let var = (sq / nf - mean * mean).max(F::zero());
                let inv = F::one() / (var + F::from_f64(self.eps)).sqrt();
                inv_stds.push(inv);
                let (ga, be) = (self.gamma[ch], self.beta[ch]);
                for b in 0..batch {
                    let base = b * stride + ch * self.spatial;
                    for i in 0..self.spatial {
                        let h = (xs[base + i] - mean) * inv;
                        xh[base + i] = h;
                        ys[base + i] = ga * h + be;
                    }
                }
                if mode == Mode::Train {
                    let m = F::from_f64(self.momentum);
                    let unbiased = if n > 1 {
                        var * F::from_f64(n as f64 / (n - 1) as f64)
                    } else {
                        var
                    };
                    self.running_mean[ch] = (F::one() - m) * self.running_mean[ch] + m * mean;
                    self.running_var[ch] = (F::one() - m) * self.running_var[ch] + m * unbiased;
                }
            }
        }
        self.cache = Some((x_hat, inv_stds));
        y
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let (x_hat, inv_stds) = self.cache.take().expect("backward without train forward");
        let batch = g.nrows();
        let n = batch * self.spatial;
        let nf = F::from_f64(n as f64);
        let stride = self.channels * self.spatial;
        let mut gx = Array2::<F>::zeros(g.dim());
        let gs = g.as_slice().unwrap();
        let xh = x_hat.as_slice().unwrap();
        let gxs = gx.as_slice_mut().unwrap();
        for ch in 0..self.channels {
            let mut dbeta = F::zero();
            let mut dgamma = F::zero();
            for b in 0..batch {
                let base = b * stride + ch * self.spatial;
                for i in 0..self.spatial {
                    dbeta = dbeta + gs[base + i];
                    dgamma = dgamma + gs[base + i] * xh[base + i];
                }
            }
            self.g_gamma[ch] = self.g_gamma[ch] + dgamma;
            self.g_beta[ch] = self.g_beta[ch] + dbeta;
            let scale = self.gamma[ch] * inv_stds[ch] / nf;
            for b in 0..batch {
                let base = b * stride + ch * self.spatial;
                for i in 0..self.spatial {
                    gxs[base + i] =
                        scale * (nf * gs[base + i] - dbeta - xh[base + i] * dgamma);
                }
            }
        }
        gx
    }
}

/// Elementwise activation kinds used by the presets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Act {
    Relu,
    /// Negative slope of the leaky rectifier.
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct Activation<F> {
    pub act: Act,
    cache: Option<Array2<F>>,
}

impl<F: Scalar> Activation<F> {
    pub fn new(act: Act) -> Self {
        Self { act, cache: None }
    }

    fn forward(&mut self, x: &Array2<F>, _mode: Mode) -> Array2<F> {
        let y = match self.act {
            Act::Relu => x.mapv(|v| v.max(F::zero())),
            Act::LeakyRelu(s) => {
                let s = F::from_f64(s);
                x.mapv(|v| if v > F::zero() { v } else { s * v })
            }
            Act::Tanh => x.mapv(|v| v.tanh()),
            Act::Sigmoid => x.mapv(|v| F::one() / (F::one() + (-v).exp())),
        };
        // Relu and leaky-relu differentiate from the input; tanh and
        // sigmoid from the output.
        self.cache = Some(match self.act {
            Act::Relu | Act::LeakyRelu(_) => x.clone(),
            Act::Tanh | Act::Sigmoid => y.clone(),
        });
        y
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let c = self.cache.take().expect("backward without forward");
        let mut gx = g.clone();
        match self.act {
            Act::Relu => gx.zip_mut_with(&c, |gv, &x| {
                if x <= F::zero() {
                    *gv = F::zero()
                }
            }),
            Act::LeakyRelu(s) => {
                let s = F::from_f64(s);
                gx.zip_mut_with(&c, |gv, &x| {
                    if x <= F::zero() {
                        *gv = *gv * s
                    }
                })
            }
            Act::Tanh => gx.zip_mut_with(&c, |gv, &y| *gv = *gv * (F::one() - y * y)),
            Act::Sigmoid => gx.zip_mut_with(&c, |gv, &y| *gv = *gv * y * (F::one() - y)),
        }
        gx
    }
}

/// Inverted dropout with a layer-owned deterministic stream: active only in
/// `Mode::Train`, identity otherwise.
#[derive(Debug, Clone)]
pub struct Dropout<F> {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Array2<F>>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }

    fn forward(&mut self, x: &Array2<F>, mode: Mode) -> Array2<F> {
        if mode != Mode::Train || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = F::from_f64(1.0 / (1.0 - self.rate));
        let mask = Array2::from_shape_fn(x.dim(), |_| {
            if self.rng.random::<f64>() < self.rate {
                F::zero()
            } else {
                keep
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        match self.mask.take() {
            Some(mask) => g * &mask,
            None => g.clone(),
        }
    }
}

/// Closed set of layer kinds; enum dispatch keeps the engine object-safe
/// free and the checkpoint layout explicit.
#[derive(Debug, Clone)]
pub enum LayerKind<F> {
    Affine(Affine<F>),
    Conv2d(Conv2d<F>),
    ConvTranspose2d(ConvTranspose2d<F>),
    BatchNorm(BatchNorm<F>),
    Activation(Activation<F>),
    Dropout(Dropout<F>),
}

impl<F: Scalar> LayerKind<F> {
    pub fn forward(&mut self, x: &Array2<F>, mode: Mode) -> Array2<F> {
        match self {
            LayerKind::Affine(l) => l.forward(x, mode),
            LayerKind::Conv2d(l) => l.forward(x, mode),
            LayerKind::ConvTranspose2d(l) => l.forward(x, mode),
            LayerKind::BatchNorm(l) => l.forward(x, mode),
            LayerKind::Activation(l) => l.forward(x, mode),
            LayerKind::Dropout(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        match self {
            LayerKind::Affine(l) => l.backward(g),
            LayerKind::Conv2d(l) => l.backward(g),
            LayerKind::ConvTranspose2d(l) => l.backward(g),
            LayerKind::BatchNorm(l) => l.backward(g),
            LayerKind::Activation(l) => l.backward(g),
            LayerKind::Dropout(l) => l.backward(g),
        }
    }

    /// (field name, value, grad) triples in declaration order.
    fn params(&mut self) -> Vec<(&'static str, &mut [F], &mut [F])> {
        match self {
            LayerKind::Affine(Affine { w, b, gw, gb, .. }) => {
                let mut out = vec![(
                    "w",
                    w.as_slice_mut().unwrap(),
                    gw.as_slice_mut().unwrap(),
                )];
                if let (Some(b), Some(gb)) = (b, gb) {
                    out.push(("b", b.as_slice_mut().unwrap(), gb.as_slice_mut().unwrap()));
                }
                out
            }
            LayerKind::Conv2d(Conv2d { w, b, gw, gb, .. })
            | LayerKind::ConvTranspose2d(ConvTranspose2d { w, b, gw, gb, .. }) => {
                let mut out = vec![(
                    "w",
                    w.as_slice_mut().unwrap(),
                    gw.as_slice_mut().unwrap(),
                )];
                if let (Some(b), Some(gb)) = (b, gb) {
                    out.push(("b", b.as_slice_mut().unwrap(), gb.as_slice_mut().unwrap()));
                }
                out
            }
            LayerKind::BatchNorm(BatchNorm {
                gamma,
                beta,
                g_gamma,
                g_beta,
                ..
            }) => vec![
                (
                    "gamma",
                    gamma.as_slice_mut().unwrap(),
                    g_gamma.as_slice_mut().unwrap(),
                ),
                (
                    "beta",
                    beta.as_slice_mut().unwrap(),
                    g_beta.as_slice_mut().unwrap(),
                ),
            ],
            LayerKind::Activation(_) | LayerKind::Dropout(_) => vec![],
        }
    }

    fn state(&mut self) -> Vec<(&'static str, &mut [F])> {
        match self {
            LayerKind::BatchNorm(BatchNorm {
                running_mean,
                running_var,
                ..
            }) => vec![
                ("running_mean", running_mean.as_slice_mut().unwrap()),
                ("running_var", running_var.as_slice_mut().unwrap()),
            ],
            _ => vec![],
        }
    }

    /// Params and state together, with field-level borrow splitting so both
    /// can be held at once.
    #[allow(clippy::type_complexity)]
    fn blocks(
        &mut self,
    ) -> (
        Vec<(&'static str, &mut [F], &mut [F])>,
        Vec<(&'static str, &mut [F])>,
    ) {
        match self {
            LayerKind::BatchNorm(BatchNorm {
                gamma,
                beta,
                g_gamma,
                g_beta,
                running_mean,
                running_var,
                ..
            }) => (
                vec![
                    (
                        "gamma",
                        gamma.as_slice_mut().unwrap(),
                        g_gamma.as_slice_mut().unwrap(),
                    ),
                    (
                        "beta",
                        beta.as_slice_mut().unwrap(),
                        g_beta.as_slice_mut().unwrap(),
                    ),
                ],
                vec![
                    ("running_mean", running_mean.as_slice_mut().unwrap()),
                    ("running_var", running_var.as_slice_mut().unwrap()),
                ],
            ),
            other => (other.params(), vec![]),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, _, g) in self.params() {
            for v in g.iter_mut() {
                *v = F::zero();
            }
        }
    }
}

/// Ordered stack of layers forming one network component.
#[derive(Debug, Clone, Default)]
pub struct Sequential<F> {
    pub layers: Vec<LayerKind<F>>,
}

impl<F: Scalar> Sequential<F> {
    pub fn new(layers: Vec<LayerKind<F>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Array2<F>, mode: Mode) -> Array2<F> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode);
        }
        h
    }

    /// Propagates the output gradient back through every layer, accumulating
    /// parameter gradients; returns the input gradient.
    pub fn backward(&mut self, g: &Array2<F>) -> Array2<F> {
        let mut grad = g.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad);
        }
        grad
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grad();
        }
    }

    /// Learnable blocks in declaration order, names prefixed
    /// `{prefix}.{layer_index}.{field}`.
    pub fn params(&mut self, prefix: &str) -> Vec<ParamRef<'_, F>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (field, value, grad) in layer.params() {
                out.push(ParamRef {
                    name: format!("{prefix}.{i}.{field}"),
                    value,
                    grad,
                });
            }
        }
        out
    }

    /// Non-learnable persisted state (batch-norm running statistics).
    pub fn state(&mut self, prefix: &str) -> Vec<StateRef<'_, F>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (field, value) in layer.state() {
                out.push(StateRef {
                    name: format!("{prefix}.{i}.{field}"),
                    value,
                });
            }
        }
        out
    }

    /// Params and state in one borrow, both in declaration order.
    pub fn blocks(&mut self, prefix: &str) -> (Vec<ParamRef<'_, F>>, Vec<StateRef<'_, F>>) {
        let mut params = Vec::new();
        let mut state = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (p, s) = layer.blocks();
            params.extend(p.into_iter().map(|(field, value, grad)| ParamRef {
                name: format!("{prefix}.{i}.{field}"),
                value,
                grad,
            }));
            state.extend(s.into_iter().map(|(field, value)| StateRef {
                name: format!("{prefix}.{i}.{field}"),
                value,
            }));
        }
        (params, state)
    }

    pub fn param_count(&mut self) -> usize {
        self.params("").iter().map(|p| p.value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_matches_hand_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Affine::<f64>::new(2, 2, true, &mut rng);
        layer.w = array![[1.0, 2.0], [3.0, 4.0]];
        *layer.b.as_mut().unwrap() = array![0.5, -0.5];
        let y = layer.forward(&array![[1.0, 1.0]], Mode::Eval);
        assert_eq!(y, array![[4.5, 5.5]]);
    }

    #[test]
    fn identity_affine_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Affine::<f64>::new(3, 3, false, &mut rng);
        layer.w = Array2::eye(3);
        let x = array![[0.1, -0.2, 0.3]];
        assert_eq!(layer.forward(&x, Mode::Eval), x);
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Conv2d::<f64>::new(1, 1, 3, 3, 2, 1, 0, false, &mut rng);
        // Kernel [[1,0],[0,1]] sums the main diagonal of each patch.
        layer.w = array![[1.0, 0.0, 0.0, 1.0]];
        let x = array![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]];
        let y = layer.forward(&x, Mode::Eval);
        assert_eq!(y, array![[6.0, 8.0, 12.0, 14.0]]);
    }

    #[test]
    fn conv_transpose_shapes_and_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv2d::<f64>::new(2, 3, 6, 6, 4, 2, 1, false, &mut rng);
        let mut convt = ConvTranspose2d::<f64>::new(3, 2, 3, 3, 4, 2, 1, false, &mut rng);
        // Both weights are [3, 2*16] with the same (channel, patch) layout,
        // so tying them is a straight copy.
        convt.w.assign(&conv.w);
        // With tied weights, conv-transpose forward equals conv backward.
        let g = Array2::from_shape_fn((2, 3 * 3 * 3), |(i, j)| (i + j) as f64 * 0.01);
        let x = Array2::from_shape_fn((2, 2 * 6 * 6), |(i, j)| (i * 7 + j) as f64 * 0.001);
        let _ = conv.forward(&x, Mode::Eval);
        let via_conv_backward = conv.backward(&g);
        let via_convt_forward = convt.forward(&g, Mode::Eval);
        let diff = (&via_conv_backward - &via_convt_forward)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12, "max diff {diff}");
    }

    #[test]
    fn batchnorm_train_normalizes_batch() {
        let mut bn = BatchNorm::<f64>::new(1, 1);
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = bn.forward(&x, Mode::Train);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }

    #[test]
    fn batchnorm_eval_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(1, 1);
        // Fresh running stats are (0, 1): eval is then the identity.
        let x = array![[0.3], [-0.7]];
        let y = bn.forward(&x, Mode::Eval);
        let diff = (&y - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-5);
    }

    #[test]
    fn detached_mode_leaves_running_statistics_untouched() {
        let mut bn = BatchNorm::<f64>::new(1, 1);
        let x = array![[5.0], [7.0]];
        let _ = bn.forward(&x, Mode::Detached);
        assert_eq!(bn.running_mean[0], 0.0);
        assert_eq!(bn.running_var[0], 1.0);
        let _ = bn.forward(&x, Mode::Train);
        assert!(bn.running_mean[0] > 0.0);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let mut d = Dropout::<f64>::new(0.5, 9);
        let x = Array2::from_elem((4, 50), 1.0);
        assert_eq!(d.forward(&x, Mode::Eval), x);
        let y = d.forward(&x, Mode::Train);
        for &v in y.iter() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
        let kept = y.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 50 && kept < 150, "kept {kept}");
    }

    #[test]
    fn activations_match_closed_forms() {
        let x = array![[-1.0, 0.0, 2.0]];
        let mut relu = Activation::<f64>::new(Act::Relu);
        assert_eq!(relu.forward(&x, Mode::Eval), array![[0.0, 0.0, 2.0]]);
        let mut leaky = Activation::<f64>::new(Act::LeakyRelu(0.2));
        assert_eq!(leaky.forward(&x, Mode::Eval), array![[-0.2, 0.0, 2.0]]);
        let mut sig = Activation::<f64>::new(Act::Sigmoid);
        let y = sig.forward(&x, Mode::Eval);
        assert!((y[[0, 1]] - 0.5).abs() < 1e-12);
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn sequential_params_are_named_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seq = Sequential::new(vec![
            LayerKind::Affine(Affine::<f32>::new(4, 3, true, &mut rng)),
            LayerKind::Activation(Activation::new(Act::Relu)),
            LayerKind::Affine(Affine::<f32>::new(3, 2, false, &mut rng)),
        ]);
        let names: Vec<String> = seq.params("enc").iter().map(|p| p.name.clone()).collect();
        assert_eq!(names, vec!["enc.0.w", "enc.0.b", "enc.2.w"]);
        assert_eq!(seq.param_count(), 4 * 3 + 3 + 3 * 2);
    }
}
