//! Model assembly: a shared encoder, two structurally identical decoders
//! with independent parameters, and a latent discriminator, built from
//! declarative layer specs. Ships the published architecture presets and a
//! bit-exact binary checkpoint format.

use crate::nn::{
    sample_standard_normal, Act, Activation, Affine, BatchNorm, Conv2d, ConvTranspose2d, Dropout,
    LayerKind, Mode, ParamRef, Scalar, Sequential, StateRef,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Batch size used when streaming evaluation-mode forwards.
const EVAL_CHUNK: usize = 128;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {index} of {component}: expected input length {expected}, got {got}")]
    Composition {
        component: &'static str,
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("encoder must end with latent dimension {latent}, got {got}")]
    LatentMismatch { latent: usize, got: usize },
    #[error("decoder specs must be identical between inlier and outlier decoders")]
    DecoderSpecMismatch,
    #[error("discriminator must end in a sigmoid with scalar output")]
    DiscriminatorShape,
    #[error("input batch has {got} features, model expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("model has no outlier decoder")]
    NoOutlierDecoder,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    BadHeader(String),
    #[error("architecture json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint block mismatch: expected {expected} ({expected_len} values), found {got} ({got_len})")]
    BlockMismatch {
        expected: String,
        expected_len: usize,
        got: String,
        got_len: usize,
    },
}

/// Declarative description of one layer; shapes are explicit so whole
/// architectures are validated and serialized without touching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Affine {
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    ConvTranspose {
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
        spatial: usize,
    },
    Activation {
        act: Act,
    },
    Dropout {
        rate: f64,
    },
}

fn conv_out(h: usize, k: usize, s: usize, p: usize) -> usize {
    (h + 2 * p - k) / s + 1
}

fn convt_out(h: usize, k: usize, s: usize, p: usize) -> usize {
    (h - 1) * s + k - 2 * p
}

impl LayerSpec {
    /// Expected flat input length, `None` when shape-preserving.
    pub fn in_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Affine { in_dim, .. } => Some(in_dim),
            LayerSpec::Conv {
                in_ch, in_h, in_w, ..
            }
            | LayerSpec::ConvTranspose {
                in_ch, in_h, in_w, ..
            } => Some(in_ch * in_h * in_w),
            LayerSpec::BatchNorm { channels, spatial } => Some(channels * spatial),
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => None,
        }
    }

    /// Flat output length, `None` when shape-preserving.
    pub fn out_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Affine { out_dim, .. } => Some(out_dim),
            LayerSpec::Conv {
                out_ch,
                in_h,
                in_w,
                k,
                stride,
                pad,
                ..
            } => Some(out_ch * conv_out(in_h, k, stride, pad) * conv_out(in_w, k, stride, pad)),
            LayerSpec::ConvTranspose {
                out_ch,
                in_h,
                in_w,
                k,
                stride,
                pad,
                ..
            } => Some(out_ch * convt_out(in_h, k, stride, pad) * convt_out(in_w, k, stride, pad)),
            LayerSpec::BatchNorm { channels, spatial } => Some(channels * spatial),
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Affine {
                in_dim,
                out_dim,
                bias,
            } => in_dim * out_dim + if bias { out_dim } else { 0 },
            LayerSpec::Conv {
                in_ch,
                out_ch,
                k,
                bias,
                ..
            }
            | LayerSpec::ConvTranspose {
                in_ch,
                out_ch,
                k,
                bias,
                ..
            } => in_ch * out_ch * k * k + if bias { out_ch } else { 0 },
            LayerSpec::BatchNorm { channels, .. } => 2 * channels,
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => 0,
        }
    }

    fn build<F: Scalar>(&self, rng: &mut ChaCha8Rng) -> LayerKind<F> {
        match *self {
            LayerSpec::Affine {
                in_dim,
                out_dim,
                bias,
            } => LayerKind::Affine(Affine::new(in_dim, out_dim, bias, rng)),
            LayerSpec::Conv {
                in_ch,
                out_ch,
                in_h,
                in_w,
                k,
                stride,
                pad,
                bias,
            } => LayerKind::Conv2d(Conv2d::new(in_ch, out_ch, in_h, in_w, k, stride, pad, bias, rng)),
            LayerSpec::ConvTranspose {
                in_ch,
                out_ch,
                in_h,
                in_w,
                k,
                stride,
                pad,
                bias,
            } => LayerKind::ConvTranspose2d(ConvTranspose2d::new(
                in_ch, out_ch, in_h, in_w, k, stride, pad, bias, rng,
            )),
            LayerSpec::BatchNorm { channels, spatial } => {
                LayerKind::BatchNorm(BatchNorm::new(channels, spatial))
            }
            LayerSpec::Activation { act } => LayerKind::Activation(Activation::new(act)),
            // Dropout streams are seeded from the component stream so whole
            // builds stay deterministic.
            LayerSpec::Dropout { rate } => LayerKind::Dropout(Dropout::new(rate, rng.random())),
        }
    }
}

/// Full architecture: component layer lists plus the latent prior dimension
/// (the prior is always standard normal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub latent_dim: usize,
    pub encoder: Vec<LayerSpec>,
    pub inlier_decoder: Vec<LayerSpec>,
    pub outlier_decoder: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

fn check_chain(
    component: &'static str,
    layers: &[LayerSpec],
    mut cur: usize,
) -> Result<usize, ModelError> {
    for (index, layer) in layers.iter().enumerate() {
        if let Some(expected) = layer.in_len() {
            if expected != cur {
                return Err(ModelError::Composition {
                    component,
                    index,
                    expected,
                    got: cur,
                });
            }
        }
        if let Some(out) = layer.out_len() {
            cur = out;
        }
    }
    Ok(cur)
}

impl ArchitectureSpec {
    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let input_len = self.input_len();
        let enc_out = check_chain("encoder", &self.encoder, input_len)?;
        if enc_out != self.latent_dim {
            return Err(ModelError::LatentMismatch {
                latent: self.latent_dim,
                got: enc_out,
            });
        }
        if self.inlier_decoder != self.outlier_decoder {
            return Err(ModelError::DecoderSpecMismatch);
        }
        let dec_out = check_chain("inlier_decoder", &self.inlier_decoder, self.latent_dim)?;
        check_chain("outlier_decoder", &self.outlier_decoder, self.latent_dim)?;
        if dec_out != input_len {
            return Err(ModelError::Composition {
                component: "inlier_decoder",
                index: self.inlier_decoder.len(),
                expected: input_len,
                got: dec_out,
            });
        }
        let disc_out = check_chain("discriminator", &self.discriminator, self.latent_dim)?;
        let ends_in_sigmoid = matches!(
            self.discriminator.last(),
            Some(LayerSpec::Activation { act: Act::Sigmoid })
        );
        if disc_out != 1 || !ends_in_sigmoid {
            return Err(ModelError::DiscriminatorShape);
        }
        Ok(())
    }

    /// (component, per-layer parameter counts) for all four components.
    pub fn param_counts(&self) -> Vec<(&'static str, Vec<usize>)> {
        let count = |layers: &[LayerSpec]| -> Vec<usize> {
            layers
                .iter()
                .map(LayerSpec::param_count)
                .filter(|&c| c > 0)
                .collect()
        };
        vec![
            ("encoder", count(&self.encoder)),
            ("inlier_decoder", count(&self.inlier_decoder)),
            ("outlier_decoder", count(&self.outlier_decoder)),
            ("discriminator", count(&self.discriminator)),
        ]
    }
}

/// The four-component model. The outlier decoder is optional so the same
/// type serves the single-decoder autoencoder baseline.
#[derive(Debug, Clone)]
pub struct WaldoModel<F> {
    pub arch: ArchitectureSpec,
    pub encoder: Sequential<F>,
    pub inlier_decoder: Sequential<F>,
    pub outlier_decoder: Option<Sequential<F>>,
    pub discriminator: Sequential<F>,
}

fn build_component<F: Scalar>(specs: &[LayerSpec], seed: u64) -> Sequential<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sequential::new(specs.iter().map(|s| s.build(&mut rng)).collect())
}

/// Builds a fully initialized model; the two decoders draw from independent
/// streams so the competition starts unbiased.
pub fn build_model<F: Scalar>(
    arch: ArchitectureSpec,
    init_seed: u64,
) -> Result<WaldoModel<F>, ModelError> {
    arch.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(init_seed);
    let seeds: Vec<u64> = (0..4).map(|_| master.random()).collect();
    Ok(WaldoModel {
        encoder: build_component(&arch.encoder, seeds[0]),
        inlier_decoder: build_component(&arch.inlier_decoder, seeds[1]),
        outlier_decoder: Some(build_component(&arch.outlier_decoder, seeds[2])),
        discriminator: build_component(&arch.discriminator, seeds[3]),
        arch,
    })
}

/// Single-decoder variant used by the plain autoencoder baseline. Component
/// seeds match [`build_model`], so shared components initialize identically.
pub fn build_wae_model<F: Scalar>(
    arch: ArchitectureSpec,
    init_seed: u64,
) -> Result<WaldoModel<F>, ModelError> {
    let mut model = build_model(arch, init_seed)?;
    model.outlier_decoder = None;
    Ok(model)
}

impl<F: Scalar> WaldoModel<F> {
    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    fn check_input(&self, x: &Array2<F>) -> Result<(), ModelError> {
        if x.ncols() != self.input_len() {
            return Err(ModelError::InputShape {
                expected: self.input_len(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Deterministic evaluation-mode encoding (frozen normalization).
    pub fn encode(&mut self, x: &Array2<F>) -> Result<Array2<F>, ModelError> {
        self.check_input(x)?;
        Ok(forward_chunked(&mut self.encoder, x))
    }

    pub fn decode_inlier(&mut self, z: &Array2<F>) -> Result<Array2<F>, ModelError> {
        check_latent(self.arch.latent_dim, z)?;
        Ok(forward_chunked(&mut self.inlier_decoder, z))
    }

    pub fn decode_outlier(&mut self, z: &Array2<F>) -> Result<Array2<F>, ModelError> {
        check_latent(self.arch.latent_dim, z)?;
        let dec = self
            .outlier_decoder
            .as_mut()
            .ok_or(ModelError::NoOutlierDecoder)?;
        Ok(forward_chunked(dec, z))
    }

    /// Discriminator output probabilities in (0,1), evaluation mode.
    pub fn discriminate(&mut self, z: &Array2<F>) -> Result<Array2<F>, ModelError> {
        check_latent(self.arch.latent_dim, z)?;
        Ok(forward_chunked(&mut self.discriminator, z))
    }

    /// n i.i.d. standard-normal latent vectors; deterministic given seed.
    pub fn sample_prior(&self, n: usize, seed: u64) -> Array2<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_standard_normal(n, self.arch.latent_dim, &mut rng)
    }

    /// Autoencoder parameter blocks: encoder plus both decoders.
    pub fn autoencoder_params(&mut self) -> Vec<ParamRef<'_, F>> {
        let mut out = self.encoder.params("encoder");
        out.extend(self.inlier_decoder.params("inlier_decoder"));
        if let Some(dec) = &mut self.outlier_decoder {
            out.extend(dec.params("outlier_decoder"));
        }
        out
    }

    pub fn discriminator_params(&mut self) -> Vec<ParamRef<'_, F>> {
        self.discriminator.params("discriminator")
    }

    fn all_blocks(&mut self) -> (Vec<ParamRef<'_, F>>, Vec<StateRef<'_, F>>) {
        let WaldoModel {
            encoder,
            inlier_decoder,
            outlier_decoder,
            discriminator,
            ..
        } = self;
        let (mut params, mut state) = encoder.blocks("encoder");
        let (p, s) = inlier_decoder.blocks("inlier_decoder");
        params.extend(p);
        state.extend(s);
        if let Some(dec) = outlier_decoder {
            let (p, s) = dec.blocks("outlier_decoder");
            params.extend(p);
            state.extend(s);
        }
        let (p, s) = discriminator.blocks("discriminator");
        params.extend(p);
        state.extend(s);
        (params, state)
    }

    pub fn all_finite(&mut self) -> bool {
        let (params, state) = self.all_blocks();
        params
            .iter()
            .all(|p| p.value.iter().all(|v| v.is_finite()))
            && state.iter().all(|s| s.value.iter().all(|v| v.is_finite()))
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.inlier_decoder.zero_grad();
        if let Some(dec) = &mut self.outlier_decoder {
            dec.zero_grad();
        }
        self.discriminator.zero_grad();
    }
}

fn check_latent<F: Scalar>(latent: usize, z: &Array2<F>) -> Result<(), ModelError> {
    if z.ncols() != latent {
        return Err(ModelError::InputShape {
            expected: latent,
            got: z.ncols(),
        });
    }
    Ok(())
}

/// Evaluation forward in bounded-size chunks to keep convolution workspace
/// memory flat for large batches.
fn forward_chunked<F: Scalar>(seq: &mut Sequential<F>, x: &Array2<F>) -> Array2<F> {
    if x.nrows() <= EVAL_CHUNK {
        return seq.forward(x, Mode::Eval);
    }
    let mut rows: Vec<Array2<F>> = Vec::new();
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        rows.push(seq.forward(&x.slice(ndarray::s![start..end, ..]).to_owned(), Mode::Eval));
        start = end;
    }
    let views: Vec<_> = rows.iter().map(|a| a.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("chunk shapes agree")
}

// ---------------------------------------------------------------------------
// Architecture presets. Kernel/stride/padding triples are chosen as the
// smallest kernel consistent with the published layer shapes and parameter
// counts; each preset records its expected counts in the preset tests.
// ---------------------------------------------------------------------------

fn act(a: Act) -> LayerSpec {
    LayerSpec::Activation { act: a }
}

fn affine(i: usize, o: usize) -> LayerSpec {
    LayerSpec::Affine {
        in_dim: i,
        out_dim: o,
        bias: true,
    }
}

impl ArchitectureSpec {
    /// 121-feature tabular preset (latent 32, tanh output).
    pub fn kdd() -> Self {
        let decoder = vec![
            affine(32, 64),
            act(Act::LeakyRelu(0.2)),
            affine(64, 121),
            act(Act::Tanh),
        ];
        ArchitectureSpec {
            name: "kdd".into(),
            input_shape: vec![121],
            latent_dim: 32,
            encoder: vec![
                affine(121, 64),
                act(Act::LeakyRelu(0.2)),
                affine(64, 32),
                act(Act::Relu),
            ],
            inlier_decoder: decoder.clone(),
            outlier_decoder: decoder,
            discriminator: vec![
                affine(32, 32),
                act(Act::LeakyRelu(0.2)),
                LayerSpec::Dropout { rate: 0.5 },
                affine(32, 1),
                act(Act::Sigmoid),
            ],
        }
    }

    /// 1x28x28 grayscale image preset (latent 32, sigmoid output).
    pub fn mnist() -> Self {
        Self::image_28x28("mnist")
    }

    /// Same architecture as [`ArchitectureSpec::mnist`] for 28x28 apparel images.
    pub fn fmnist() -> Self {
        Self::image_28x28("fmnist")
    }

    fn image_28x28(name: &str) -> Self {
        let conv = |ci: usize, co: usize, h: usize| LayerSpec::Conv {
            in_ch: ci,
            out_ch: co,
            in_h: h,
            in_w: h,
            k: 4,
            stride: 2,
            pad: 1,
            bias: false,
        };
        let convt = |ci: usize, co: usize, h: usize, s: usize| LayerSpec::ConvTranspose {
            in_ch: ci,
            out_ch: co,
            in_h: h,
            in_w: h,
            k: 4,
            stride: s,
            pad: 0,
            bias: true,
        };
        let bn = |c: usize, sp: usize| LayerSpec::BatchNorm {
            channels: c,
            spatial: sp,
        };
        let decoder = vec![
            affine(32, 320 * 7 * 7),
            act(Act::Relu),
            convt(320, 160, 7, 1),
            bn(160, 10 * 10),
            act(Act::Relu),
            convt(160, 80, 10, 1),
            bn(80, 13 * 13),
            act(Act::Relu),
            convt(80, 1, 13, 2),
            act(Act::Sigmoid),
        ];
        ArchitectureSpec {
            name: name.into(),
            input_shape: vec![1, 28, 28],
            latent_dim: 32,
            encoder: vec![
                conv(1, 40, 28),
                act(Act::Relu),
                conv(40, 80, 14),
                bn(80, 7 * 7),
                act(Act::Relu),
                conv(80, 160, 7),
                bn(160, 3 * 3),
                act(Act::Relu),
                conv(160, 320, 3),
                bn(320, 1),
                act(Act::Relu),
                affine(320, 32),
            ],
            inlier_decoder: decoder.clone(),
            outlier_decoder: decoder,
            discriminator: vec![
                affine(32, 160),
                act(Act::Relu),
                affine(160, 160),
                act(Act::Relu),
                affine(160, 160),
                act(Act::Relu),
                affine(160, 160),
                act(Act::Relu),
                affine(160, 1),
                act(Act::Sigmoid),
            ],
        }
    }

    /// 3x32x32 color image preset (latent 32, sigmoid output).
    pub fn cifar10() -> Self {
        let conv = |ci: usize, co: usize, h: usize| LayerSpec::Conv {
            in_ch: ci,
            out_ch: co,
            in_h: h,
            in_w: h,
            k: 4,
            stride: 2,
            pad: 1,
            bias: false,
        };
        let convt = |ci: usize, co: usize, h: usize, s: usize| LayerSpec::ConvTranspose {
            in_ch: ci,
            out_ch: co,
            in_h: h,
            in_w: h,
            k: 4,
            stride: s,
            pad: 0,
            bias: true,
        };
        let bn = |c: usize, sp: usize| LayerSpec::BatchNorm {
            channels: c,
            spatial: sp,
        };
        // The first decoder affine expands to 20736 = 256 * 9 * 9, which the
        // following three transposed convolutions carry to 12, 15, then 32.
        let decoder = vec![
            affine(32, 256 * 9 * 9),
            act(Act::Relu),
            convt(256, 128, 9, 1),
            bn(128, 12 * 12),
            act(Act::Relu),
            convt(128, 64, 12, 1),
            bn(64, 15 * 15),
            act(Act::Relu),
            convt(64, 3, 15, 2),
            act(Act::Sigmoid),
        ];
        ArchitectureSpec {
            name: "cifar10".into(),
            input_shape: vec![3, 32, 32],
            latent_dim: 32,
            encoder: vec![
                conv(3, 32, 32),
                act(Act::Relu),
                conv(32, 64, 16),
                bn(64, 8 * 8),
                act(Act::Relu),
                conv(64, 128, 8),
                bn(128, 4 * 4),
                act(Act::Relu),
                conv(128, 256, 4),
                bn(256, 2 * 2),
                act(Act::Relu),
                affine(1024, 32),
            ],
            inlier_decoder: decoder.clone(),
            outlier_decoder: decoder,
            discriminator: vec![
                affine(32, 128),
                act(Act::Relu),
                affine(128, 128),
                act(Act::Relu),
                affine(128, 128),
                act(Act::Relu),
                affine(128, 128),
                act(Act::Relu),
                affine(128, 1),
                act(Act::Sigmoid),
            ],
        }
    }

    /// Fully connected preset for arbitrary flat inputs. `output_act = None`
    /// leaves decoder outputs unbounded.
    pub fn mlp(
        name: &str,
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        output_act: Option<Act>,
        disc_hidden: usize,
    ) -> Self {
        let mut encoder = Vec::new();
        let mut cur = input_dim;
        for &h in hidden {
            encoder.push(affine(cur, h));
            encoder.push(act(Act::LeakyRelu(0.2)));
            cur = h;
        }
        encoder.push(affine(cur, latent_dim));

        let mut decoder = Vec::new();
        cur = latent_dim;
        for &h in hidden.iter().rev() {
            decoder.push(affine(cur, h));
            decoder.push(act(Act::LeakyRelu(0.2)));
            cur = h;
        }
        decoder.push(affine(cur, input_dim));
        if let Some(a) = output_act {
            decoder.push(act(a));
        }

        ArchitectureSpec {
            name: name.into(),
            input_shape: vec![input_dim],
            latent_dim,
            inlier_decoder: decoder.clone(),
            outlier_decoder: decoder,
            encoder,
            discriminator: vec![
                affine(latent_dim, disc_hidden),
                act(Act::Relu),
                affine(disc_hidden, disc_hidden),
                act(Act::Relu),
                affine(disc_hidden, 1),
                act(Act::Sigmoid),
            ],
        }
    }

    /// Compact fully connected preset for 28x28 images at desk scale.
    pub fn desk_28x28(name: &str) -> Self {
        let mut spec = Self::mlp(name, 784, &[256, 64], 16, Some(Act::Sigmoid), 64);
        spec.input_shape = vec![1, 28, 28];
        spec
    }

    /// Tiny preset for 2-D synthetic mixtures; unbounded decoder output.
    pub fn toy2d() -> Self {
        Self::mlp("toy-2d", 2, &[32, 16], 2, None, 32)
    }

    /// Preset for the 7-dimensional weekly-sales scenario.
    pub fn weekly7() -> Self {
        Self::mlp("weekly7", 7, &[32, 16], 4, Some(Act::Tanh), 32)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "kdd" => Some(Self::kdd()),
            "mnist" => Some(Self::mnist()),
            "fmnist" => Some(Self::fmnist()),
            "cifar10" => Some(Self::cifar10()),
            "desk-mnist" => Some(Self::desk_28x28("desk-mnist")),
            "desk-fmnist" => Some(Self::desk_28x28("desk-fmnist")),
            "toy-2d" => Some(Self::toy2d()),
            "weekly7" => Some(Self::weekly7()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format `waldo-ckpt v1`
//
//   waldo-ckpt v1\n
//   {"arch": <architecture json>, "components": ["encoder", ...]}\n
//   block <name> <element count>\n
//   <element count * 4 bytes, little-endian f32>
//   ... further blocks ...
//
// Blocks appear per component in declared layer order: learnable parameters
// first, then batch-norm running statistics. Round-trips are bit-exact.
// ---------------------------------------------------------------------------

const CKPT_HEADER: &str = "waldo-ckpt v1";

#[derive(Serialize, Deserialize)]
struct CkptMeta {
    arch: ArchitectureSpec,
    components: Vec<String>,
}

impl WaldoModel<f32> {
    pub fn save_checkpoint(&mut self, path: &Path) -> Result<(), ModelError> {
        let meta = CkptMeta {
            arch: self.arch.clone(),
            components: if self.outlier_decoder.is_some() {
                ["encoder", "inlier_decoder", "outlier_decoder", "discriminator"]
            } else {
                ["encoder", "inlier_decoder", "discriminator", ""]
            }
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string())
            .collect(),
        };
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{CKPT_HEADER}")?;
        writeln!(w, "{}", serde_json::to_string(&meta)?)?;
        let (params, state) = self.all_blocks();
        let mut blocks: Vec<(String, &[f32])> = params
            .iter()
            .map(|p| (p.name.clone(), &*p.value))
            .collect();
        blocks.extend(state.iter().map(|s| (s.name.clone(), &*s.value)));
        for (name, values) in blocks {
            writeln!(w, "block {name} {}", values.len())?;
            let mut bytes = Vec::with_capacity(values.len() * 4);
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<WaldoModel<f32>, ModelError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != CKPT_HEADER {
            return Err(ModelError::BadHeader(format!(
                "expected '{CKPT_HEADER}', got '{}'",
                line.trim_end()
            )));
        }
        line.clear();
        r.read_line(&mut line)?;
        let meta: CkptMeta = serde_json::from_str(line.trim_end())?;
        let with_outlier = meta.components.iter().any(|c| c == "outlier_decoder");
        let mut model = if with_outlier {
            build_model::<f32>(meta.arch, 0)?
        } else {
            build_wae_model::<f32>(meta.arch, 0)?
        };
        {
            let (params, state) = model.all_blocks();
            let mut expected: Vec<(String, &mut [f32])> = params
                .into_iter()
                .map(|p| (p.name, p.value))
                .collect();
            expected.extend(state.into_iter().map(|s| (s.name, s.value)));
            for (name, values) in expected {
                line.clear();
                r.read_line(&mut line)?;
                let parts: Vec<&str> = line.trim_end().split(' ').collect();
                if parts.len() != 3 || parts[0] != "block" {
                    return Err(ModelError::BadHeader(format!(
                        "malformed block header '{}'",
                        line.trim_end()
                    )));
                }
                let got_len: usize = parts[2]
                    .parse()
                    .map_err(|_| ModelError::BadHeader(line.trim_end().to_string()))?;
                if parts[1] != name || got_len != values.len() {
                    return Err(ModelError::BlockMismatch {
                        expected: name,
                        expected_len: values.len(),
                        got: parts[1].to_string(),
                        got_len,
                    });
                }
                let mut bytes = vec![0u8; got_len * 4];
                r.read_exact(&mut bytes)?;
                for (v, chunk) in values.iter_mut().zip(bytes.chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        Ok(model)
    }
}
