//! Minimal neural-network engine with hand-written backpropagation.
//!
//! Everything is generic over the float type: production models run in f32
//! (checkpoints store exactly those bits), while gradient-correctness tests
//! instantiate the same code in f64 so central finite differences resolve
//! below the 1e-4 relative-error gate.
//!
//! Layers map flat row-major batches `[batch, features]` to flat batches;
//! convolution layers carry their spatial geometry internally, so whole
//! networks compose as plain sequences.

mod conv;
mod layers;

pub use layers::{
    Act, Activation, Affine, BatchNorm, Conv2d, ConvTranspose2d, Dropout, LayerKind, Sequential,
};

use ndarray::NdFloat;
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Float scalar usable by the engine. Implemented for f32 and f64.
pub trait Scalar: NdFloat + SampleUniform + std::iter::Sum<Self> {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn standard_normal(rng: &mut ChaCha8Rng) -> Self;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn standard_normal(rng: &mut ChaCha8Rng) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn standard_normal(rng: &mut ChaCha8Rng) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, active dropout, running averages updated.
    Train,
    /// Batch statistics, but no side effects: dropout inactive and running
    /// averages untouched. Used for forward passes whose gradients are
    /// discarded, e.g. encoding inputs for a discriminator update.
    Detached,
    /// Running statistics, dropout inactive.
    Eval,
}

/// Mutable view of one learnable parameter block with its gradient.
pub struct ParamRef<'a, F> {
    pub name: String,
    pub value: &'a mut [F],
    pub grad: &'a mut [F],
}

/// Mutable view of one non-learnable state block persisted in checkpoints
/// (batch-norm running statistics).
pub struct StateRef<'a, F> {
    pub name: String,
    pub value: &'a mut [F],
}

/// Fan-in-scaled uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_uniform<F: Scalar>(slice: &mut [F], fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = F::from_f64(1.0 / (fan_in.max(1) as f64).sqrt());
    for v in slice.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Adaptive moment estimation over a fixed ordered set of parameter blocks.
/// State is keyed by block position, so the caller must pass the same block
/// list every step.
pub struct Adam<F> {
    pub lr: F,
    beta1: f64,
    beta2: f64,
    eps: F,
    t: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: F) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: F::from_f64(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [ParamRef<'_, F>]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![F::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer block set changed");
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let c1 = F::from_f64(1.0 / (1.0 - self.beta1.powi(self.t)));
        let c2 = F::from_f64(1.0 / (1.0 - self.beta2.powi(self.t)));
        let one = F::one();
        for (block, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[block];
            let v = &mut self.v[block];
            debug_assert_eq!(m.len(), param.value.len());
            for i in 0..param.value.len() {
                let g = param.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] * c1;
                let v_hat = v[i] * c2;
                param.value[i] = param.value[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm<F: Scalar>(params: &mut [ParamRef<'_, F>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for p in params.iter() {
        for &g in p.grad.iter() {
            let g = g.to_f64();
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = F::from_f64(max_norm / norm);
        for p in params.iter_mut() {
            for g in p.grad.iter_mut() {
                *g = *g * scale;
            }
        }
    }
    norm
}

/// Draws an `[n, dim]` batch of i.i.d. standard-normal latents.
pub fn sample_standard_normal<F: Scalar>(
    n: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> ndarray::Array2<F> {
    ndarray::Array2::from_shape_fn((n, dim), |_| F::standard_normal(rng))
}
