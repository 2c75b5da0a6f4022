//! Sampling new inliers or outliers from the trained decoders, plus simple
//! sample-quality diagnostics and latent-space export.

use crate::data::{features_matrix, Sample};
use crate::model::{ModelError, WaldoModel};
use crate::nn::sample_standard_normal;
use crate::Label;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Smallest per-dimension variance a fit may report; degenerate fits are
/// floored rather than rejected so downstream sampling stays well defined.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("latent fit needs at least 2 samples, got {0}")]
    TooFewFitSamples(usize),
    #[error("fit dimension {fit} does not match model latent dimension {model}")]
    FitDimensionMismatch { fit: usize, model: usize },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which decoder produces the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Inlier,
    Outlier,
}

/// Diagonal Gaussian fitted to encoded training samples. Sampling from it
/// instead of the prior keeps generations inside the region the decoder
/// actually saw during training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatentGaussianFit {
    pub mean: Vec<f64>,
    /// Per-dimension variance, never below [`VARIANCE_FLOOR`].
    pub variance: Vec<f64>,
    pub n_fit: usize,
}

/// Latent distribution the generator draws from.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentSource {
    /// Standard normal, the distribution the discriminator matched.
    Prior,
    /// Diagonal Gaussian fitted to encoded data.
    Fitted(LatentGaussianFit),
}

/// Fits a diagonal Gaussian to the encodings of `samples`.
pub fn fit_latent_gaussian(
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<LatentGaussianFit, GenerateError> {
    if samples.len() < 2 {
        return Err(GenerateError::TooFewFitSamples(samples.len()));
    }
    let z = model.encode(&features_matrix(samples))?;
    let n = z.nrows() as f64;
    let d = z.ncols();
    let mut mean = vec![0.0; d];
    for row in z.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut variance = vec![0.0; d];
    for row in z.rows() {
        for ((va, &m), &v) in variance.iter_mut().zip(&mean).zip(row) {
            let dv = v as f64 - m;
            *va += dv * dv;
        }
    }
    for va in &mut variance {
        *va = (*va / (n - 1.0)).max(VARIANCE_FLOOR);
    }
    Ok(LatentGaussianFit {
        mean,
        variance,
        n_fit: samples.len(),
    })
}

fn sample_latents(
    source: &LatentSource,
    latent_dim: usize,
    n: usize,
    seed: u64,
) -> Result<Array2<f32>, GenerateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match source {
        LatentSource::Prior => Ok(sample_standard_normal(n, latent_dim, &mut rng)),
        LatentSource::Fitted(fit) => {
            if fit.mean.len() != latent_dim {
                return Err(GenerateError::FitDimensionMismatch {
                    fit: fit.mean.len(),
                    model: latent_dim,
                });
            }
            let std: Vec<f64> = fit.variance.iter().map(|&v| v.sqrt()).collect();
            let normal = rand_distr::StandardNormal;
            Ok(Array2::from_shape_fn((n, latent_dim), |(_, j)| {
                let e: f64 = rng.sample(normal);
                (fit.mean[j] + std[j] * e) as f32
            }))
        }
    }
}

/// Draws `n` latents from `source` and decodes them with the chosen decoder.
/// Deterministic in `(seed, source, which, n)` for fixed model parameters.
pub fn generate(
    model: &mut WaldoModel<f32>,
    which: Decoder,
    source: &LatentSource,
    n: usize,
    seed: u64,
) -> Result<Array2<f32>, GenerateError> {
    let z = sample_latents(source, model.arch.latent_dim, n, seed)?;
    let x = match which {
        Decoder::Inlier => model.decode_inlier(&z)?,
        Decoder::Outlier => model.decode_outlier(&z)?,
    };
    Ok(x)
}

/// Nearest-real-neighbor distance summary for a batch of generated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// Number of generated samples actually evaluated.
    pub n_evaluated: usize,
    pub n_reference: usize,
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Euclidean distance from each of the first `min(n_eval, rows)` generated
/// samples to its nearest reference sample. Small distances mean the
/// generator stays near the real data manifold; zero means memorization.
pub fn generation_quality(
    generated: &Array2<f32>,
    reference: &Array2<f32>,
    n_eval: usize,
) -> Result<QualityReport, GenerateError> {
    if generated.nrows() == 0 {
        return Err(GenerateError::EmptySet("generated"));
    }
    if reference.nrows() == 0 {
        return Err(GenerateError::EmptySet("reference"));
    }
    assert_eq!(
        generated.ncols(),
        reference.ncols(),
        "generated and reference dimensions differ"
    );
    let n = n_eval.min(generated.nrows());
    let mut dists: Vec<f64> = (0..n)
        .map(|i| {
            let g = generated.row(i);
            reference
                .rows()
                .into_iter()
                .map(|r| {
                    g.iter()
                        .zip(r)
                        .map(|(&a, &b)| {
                            let d = a as f64 - b as f64;
                            d * d
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = dists.iter().sum::<f64>() / n as f64;
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(QualityReport {
        n_evaluated: n,
        n_reference: reference.nrows(),
        mean,
        median: percentile(&dists, 0.5),
        p10: percentile(&dists, 0.1),
        p90: percentile(&dists, 0.9),
    })
}

/// One row of the latent-space export.
#[derive(Debug, Clone)]
pub struct EmbeddingRow {
    pub id: String,
    /// One of `real-inlier`, `real-outlier`, `gen-inlier`, `gen-outlier`.
    pub tag: &'static str,
    pub z: Vec<f32>,
}

pub fn real_embedding_rows(
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<Vec<EmbeddingRow>, GenerateError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let z = model.encode(&features_matrix(samples))?;
    Ok(samples
        .iter()
        .zip(z.rows())
        .map(|(s, row)| EmbeddingRow {
            id: s.source_id.clone(),
            tag: match s.true_label {
                Label::Inlier => "real-inlier",
                Label::Outlier => "real-outlier",
            },
            z: row.to_vec(),
        })
        .collect())
}

/// Re-encodes generated samples so they land in the same chart as the real
/// data. Ids are `gen-{in|out}-{index}`.
pub fn generated_embedding_rows(
    model: &mut WaldoModel<f32>,
    which: Decoder,
    generated: &Array2<f32>,
) -> Result<Vec<EmbeddingRow>, GenerateError> {
    if generated.nrows() == 0 {
        return Ok(Vec::new());
    }
    let z = model.encode(generated)?;
    let (tag, stem) = match which {
        Decoder::Inlier => ("gen-inlier", "gen-in"),
        Decoder::Outlier => ("gen-outlier", "gen-out"),
    };
    Ok(z.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| EmbeddingRow {
            id: format!("{stem}-{i}"),
            tag,
            z: row.to_vec(),
        })
        .collect())
}

/// CSV export: id, tag, z_0..z_{d-1}. All rows must share one latent width.
pub fn export_embedding(path: &Path, rows: &[EmbeddingRow]) -> Result<(), GenerateError> {
    let d = rows.first().map_or(0, |r| r.z.len());
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..d).map(|j| format!("z_{j}")).collect();
    writeln!(w, "id,tag,{}", header.join(","))?;
    for r in rows {
        assert_eq!(r.z.len(), d, "embedding rows have mixed widths");
        let coords: Vec<String> = r.z.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{}", r.id, r.tag, coords.join(","))?;
    }
    w.flush()?;
    Ok(())
}
