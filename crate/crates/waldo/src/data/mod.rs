//! Positive-plus-unlabeled dataset construction with recoverable hidden
//! ground truth: synthetic mixtures, procedural analog corpora, loaders for
//! standard public file formats, and a snapshot format for reproducibility.

pub mod digits;
mod loaders;

pub use loaders::{load_image_dataset, load_tabular_dataset, ImageDataset};

use crate::Label;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid mixture spec: {0}")]
    BadSpec(String),
    #[error("descriptor dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("not enough {pool} samples: need {needed}, have {available}")]
    NotEnough {
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("inlier class {0} out of range (dataset has {1} classes)")]
    InlierClassOutOfRange(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt data file {path}: {detail}")]
    Corrupt { path: String, detail: String },
}

/// One data point. The true label is carried for evaluation only; training
/// code must consult only features and split membership.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f32>,
    pub true_label: Label,
    pub source_id: String,
}

/// Recipe of a contaminated positive-plus-unlabeled split. Counts are
/// stratified: the realized outlier counts are exact, not Bernoulli draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    /// Outlier fraction of the unlabeled set, in (0,1).
    pub nu: f64,
    /// Outlier fraction injected into the labeled-positive set, in [0,0.5).
    pub contamination: f64,
    pub n_positive: usize,
    pub n_unlabeled: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(nu: f64, n_positive: usize, n_unlabeled: usize, seed: u64) -> Self {
        Self {
            nu,
            contamination: 0.0,
            n_positive,
            n_unlabeled,
            seed,
        }
    }

    pub fn with_contamination(mut self, contamination: f64) -> Self {
        self.contamination = contamination;
        self
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(DataError::BadSpec(format!("nu must be in (0,1), got {}", self.nu)));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(DataError::BadSpec(format!(
                "contamination must be in [0,0.5), got {}",
                self.contamination
            )));
        }
        if self.n_positive == 0 || self.n_unlabeled == 0 {
            return Err(DataError::BadSpec("empty split".into()));
        }
        Ok(())
    }

    /// Exact outlier count of the unlabeled set.
    pub fn unlabeled_outliers(&self) -> usize {
        (self.nu * self.n_unlabeled as f64).round() as usize
    }

    /// Exact outlier count injected into the positive set.
    pub fn positive_outliers(&self) -> usize {
        (self.contamination * self.n_positive as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMeta {
    pub dataset: String,
    pub spec: MixtureSpec,
}

/// A realized split: labeled positives, the unlabeled mixture, and a test
/// mixture disjoint from both by source id.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub positive: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub test: Vec<Sample>,
    pub dim: usize,
    pub meta: SplitMeta,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<(), DataError> {
        for s in self
            .positive
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.test)
        {
            if s.features.len() != self.dim {
                return Err(DataError::BadSpec(format!(
                    "sample {} has dim {}, split dim {}",
                    s.source_id,
                    s.features.len(),
                    self.dim
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(DataError::BadSpec(format!(
                    "sample {} has non-finite features",
                    s.source_id
                )));
            }
        }
        let pos_ids: std::collections::HashSet<&str> =
            self.positive.iter().map(|s| s.source_id.as_str()).collect();
        for s in self.unlabeled.iter().chain(&self.test) {
            if pos_ids.contains(s.source_id.as_str()) {
                return Err(DataError::BadSpec(format!(
                    "source id {} shared between positive and unlabeled/test",
                    s.source_id
                )));
            }
        }
        Ok(())
    }

    pub fn outlier_count(samples: &[Sample]) -> usize {
        samples.iter().filter(|s| s.true_label.is_outlier()).count()
    }
}

/// Row-major feature matrix for a sample list.
pub fn features_matrix(samples: &[Sample]) -> Array2<f32> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut m = Array2::zeros((samples.len(), dim));
    for (i, s) in samples.iter().enumerate() {
        for (j, &v) in s.features.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

pub fn true_labels(samples: &[Sample]) -> Vec<Label> {
    samples.iter().map(|s| s.true_label).collect()
}

/// Column-wise min-max scaling to [-1, 1]. Bounds are fitted on the training
/// pools (positive + unlabeled) and reused for the test split; constant
/// columns map to 0.
pub fn scale_features_to_unit_range(split: &mut DatasetSplit) {
    let dim = split.dim;
    let mut lo = vec![f32::INFINITY; dim];
    let mut hi = vec![f32::NEG_INFINITY; dim];
    for s in split.positive.iter().chain(&split.unlabeled) {
        for (j, &v) in s.features.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let all = split
        .positive
        .iter_mut()
        .chain(&mut split.unlabeled)
        .chain(&mut split.test);
    for s in all {
        for (j, v) in s.features.iter_mut().enumerate() {
            *v = if hi[j] > lo[j] {
                2.0 * (*v - lo[j]) / (hi[j] - lo[j]) - 1.0
            } else {
                0.0
            };
        }
    }
}

/// Parameterized sampler over real vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Descriptor {
    /// Isotropic Gaussian.
    Gaussian { mean: Vec<f64>, scale: f64 },
    /// Axis-aligned uniform box.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    /// Spherical annulus: uniform direction, radius uniform in
    /// `[radius - width/2, radius + width/2]`.
    Ring {
        center: Vec<f64>,
        radius: f64,
        width: f64,
    },
}

impl Descriptor {
    pub fn dim(&self) -> usize {
        match self {
            Descriptor::Gaussian { mean, .. } => mean.len(),
            Descriptor::UniformBox { low, .. } => low.len(),
            Descriptor::Ring { center, .. } => center.len(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        match self {
            Descriptor::Gaussian { mean, scale } => mean
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (m + scale * z) as f32
                })
                .collect(),
            Descriptor::UniformBox { low, high } => low
                .iter()
                .zip(high)
                .map(|(&l, &h)| rng.random_range(l..h) as f32)
                .collect(),
            Descriptor::Ring {
                center,
                radius,
                width,
            } => {
                let dir: Vec<f64> = center
                    .iter()
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let r = radius + width * (rng.random_range(0.0..1.0f64) - 0.5);
                center
                    .iter()
                    .zip(&dir)
                    .map(|(&c, &d)| (c + r * d / norm) as f32)
                    .collect()
            }
        }
    }
}

/// Pre-labeled sample pools a split is assembled from.
pub(crate) struct Pools {
    pub inliers: Vec<Sample>,
    pub outliers: Vec<Sample>,
}

/// Stratified assembly shared by every constructor: positive takes labeled
/// inliers plus exact contamination, unlabeled takes disjoint inliers plus
/// exact `round(nu * n)` outliers, test mirrors the unlabeled composition
/// from its own pools. Pool order is randomized with the spec seed.
pub(crate) fn assemble_split(
    dataset: &str,
    spec: &MixtureSpec,
    mut train: Pools,
    mut test: Pools,
    test_from_train_remainder: bool,
) -> Result<DatasetSplit, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shuffle_seed: u64 = rng.random();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    train.inliers.shuffle(&mut shuffle_rng);
    train.outliers.shuffle(&mut shuffle_rng);

    let n_pos_out = spec.positive_outliers();
    let n_pos_in = spec.n_positive - n_pos_out;
    let n_unl_out = spec.unlabeled_outliers();
    let n_unl_in = spec.n_unlabeled - n_unl_out;

    let need_in = n_pos_in + n_unl_in;
    if train.inliers.len() < need_in {
        return Err(DataError::NotEnough {
            pool: "training inlier",
            needed: need_in,
            available: train.inliers.len(),
        });
    }
    let need_out = n_pos_out + n_unl_out;
    if train.outliers.len() < need_out {
        return Err(DataError::NotEnough {
            pool: "training outlier",
            needed: need_out,
            available: train.outliers.len(),
        });
    }

    let mut inliers = train.inliers.into_iter();
    let mut outliers = train.outliers.into_iter();
    let mut positive: Vec<Sample> = inliers.by_ref().take(n_pos_in).collect();
    positive.extend(outliers.by_ref().take(n_pos_out));
    positive.shuffle(&mut shuffle_rng);

    let mut unlabeled: Vec<Sample> = inliers.by_ref().take(n_unl_in).collect();
    unlabeled.extend(outliers.by_ref().take(n_unl_out));
    unlabeled.shuffle(&mut shuffle_rng);

    if test_from_train_remainder {
        test = Pools {
            inliers: inliers.collect(),
            outliers: outliers.collect(),
        };
    }
    test.inliers.shuffle(&mut shuffle_rng);
    test.outliers.shuffle(&mut shuffle_rng);

    // Test mirrors the unlabeled composition, shrunk to what the pools can
    // stratify exactly.
    let mut n_test = spec.n_unlabeled;
    let test_set = loop {
        if n_test == 0 {
            break Vec::new();
        }
        let t_out = (spec.nu * n_test as f64).round() as usize;
        let t_in = n_test - t_out;
        if t_in <= test.inliers.len() && t_out <= test.outliers.len() {
            let mut t: Vec<Sample> = test.inliers.iter().take(t_in).cloned().collect();
            t.extend(test.outliers.iter().take(t_out).cloned());
            t.shuffle(&mut shuffle_rng);
            break t;
        }
        n_test -= 1;
    };

    let dim = positive
        .first()
        .map(|s| s.features.len())
        .unwrap_or_default();
    let split = DatasetSplit {
        positive,
        unlabeled,
        test: test_set,
        dim,
        meta: SplitMeta {
            dataset: dataset.to_string(),
            spec: *spec,
        },
    };
    split.validate()?;
    Ok(split)
}

/// Synthetic mixture from two distribution descriptors. Features are min-max
/// scaled to [-1, 1] like every other tabular source.
pub fn make_synthetic_mixture(
    spec: &MixtureSpec,
    inlier_dist: &Descriptor,
    outlier_dist: &Descriptor,
) -> Result<DatasetSplit, DataError> {
    spec.validate()?;
    if inlier_dist.dim() != outlier_dist.dim() {
        return Err(DataError::DimensionMismatch(
            inlier_dist.dim(),
            outlier_dist.dim(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x53594e54);
    // 2x the unlabeled inlier need so the test mixture keeps full size.
    let n_in = spec.n_positive + 2 * spec.n_unlabeled;
    let n_out = spec.positive_outliers() + 2 * spec.unlabeled_outliers() + 2;
    let gen = |dist: &Descriptor, n: usize, label: Label, tag: &str, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|i| Sample {
                features: dist.sample(rng),
                true_label: label,
                source_id: format!("synth-{tag}-{i}"),
            })
            .collect::<Vec<_>>()
    };
    let train = Pools {
        inliers: gen(inlier_dist, n_in, Label::Inlier, "in", &mut rng),
        outliers: gen(outlier_dist, n_out, Label::Outlier, "out", &mut rng),
    };
    let empty = Pools {
        inliers: vec![],
        outliers: vec![],
    };
    let mut split = assemble_split("synthetic", spec, train, empty, true)?;
    // Synthetic vectors follow the tabular convention: descriptors may place
    // components at arbitrary magnitudes, so the split is normalized before
    // any model sees it.
    scale_features_to_unit_range(&mut split);
    Ok(split)
}

/// Weekly-sales scenario: 7-dimensional vectors where genuine products peak
/// on the weekend. Inliers satisfy `max(Sat,Sun) > max(Mon..Fri)`; outliers
/// violate it. Defaults mirror a heavily skewed catalog: 10234 inliers,
/// 62 outliers, with 20% of inliers set aside as labeled positives.
pub fn make_retail_analog(
    n_inliers: usize,
    n_outliers: usize,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x52455441);
    let weekend_peak = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        // Weekday sales low, one weekend day clearly dominant.
        let mut v: Vec<f64> = (0..5).map(|_| rng.random_range(0.02..0.55)).collect();
        let wk_max = v.iter().cloned().fold(0.0, f64::max);
        let peak = rng.random_range((wk_max + 0.05).min(0.94)..1.0);
        let other = rng.random_range(0.0..peak);
        if rng.random_range(0.0..1.0f64) < 0.5 {
            v.extend([peak, other]);
        } else {
            v.extend([other, peak]);
        }
        v.into_iter().map(|x| (2.0 * x - 1.0) as f32).collect()
    };
    let weekday_peak = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // A weekday strictly dominates both weekend days.
        let mut v: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..0.6)).collect();
        let spike = rng.random_range(0..5);
        v[spike] = rng.random_range(0.65..1.0);
        let cap = v[spike] - 0.05;
        v.extend([rng.random_range(0.0..cap), rng.random_range(0.0..cap)]);
        v
    };

    let n_positive = ((n_inliers as f64) * 0.2).round() as usize;
    let inliers: Vec<Sample> = (0..n_inliers)
        .map(|i| Sample {
            features: weekend_peak(&mut rng),
            true_label: Label::Inlier,
            source_id: format!("retail-in-{i}"),
        })
        .collect();
    let outliers: Vec<Sample> = (0..n_outliers)
        .map(|i| Sample {
            features: weekday_peak(&mut rng)
                .into_iter()
                .map(|x| (2.0 * x - 1.0) as f32)
                .collect(),
            true_label: Label::Outlier,
            source_id: format!("retail-out-{i}"),
        })
        .collect();

    let n_unlabeled = n_inliers - n_positive + n_outliers;
    let spec = MixtureSpec::new(
        n_outliers as f64 / n_unlabeled as f64,
        n_positive.max(1),
        n_unlabeled.max(1),
        seed,
    );
    assemble_split(
        "retail-analog",
        &spec,
        Pools { inliers, outliers },
        Pools {
            inliers: vec![],
            outliers: vec![],
        },
        true,
    )
}

// ---------------------------------------------------------------------------
// Snapshot format `waldo-split v1`: header line, then CSV rows
// id,label,feature_0..feature_{d-1}. One file per sample list.
// ---------------------------------------------------------------------------

const SNAPSHOT_HEADER: &str = "waldo-split v1";

pub fn write_snapshot(path: &Path, samples: &[Sample]) -> Result<(), DataError> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    write!(w, "id,label")?;
    for j in 0..dim {
        write!(w, ",feature_{j}")?;
    }
    writeln!(w)?;
    for s in samples {
        write!(w, "{},{}", s.source_id, s.true_label)?;
        for v in &s.features {
            // Shortest round-trip float formatting keeps snapshots exact.
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Vec<Sample>, DataError> {
    let corrupt = |detail: &str| DataError::Corrupt {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| corrupt("empty file"))??;
    if header.trim_end() != SNAPSHOT_HEADER {
        return Err(corrupt(&format!("bad header '{header}'")));
    }
    let _columns = lines.next().ok_or_else(|| corrupt("missing column row"))??;
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().ok_or_else(|| corrupt("missing id"))?;
        let label = match parts.next() {
            Some("inlier") => Label::Inlier,
            Some("outlier") => Label::Outlier,
            other => return Err(corrupt(&format!("bad label {other:?}"))),
        };
        let features: Result<Vec<f32>, _> = parts.map(str::parse).collect();
        out.push(Sample {
            features: features.map_err(|e| corrupt(&format!("bad feature: {e}")))?,
            true_label: label,
            source_id: id.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec(nu: f64, n_pos: usize, n_unl: usize, seed: u64) -> MixtureSpec {
        MixtureSpec::new(nu, n_pos, n_unl, seed)
    }

    fn gauss(mean: &[f64], scale: f64) -> Descriptor {
        Descriptor::Gaussian {
            mean: mean.to_vec(),
            scale,
        }
    }

    #[test]
    fn stratified_counts_are_exact() {
        let spec = toy_spec(0.1, 500, 1000, 3).with_contamination(0.05);
        let split =
            make_synthetic_mixture(&spec, &gauss(&[0.0, 0.0], 1.0), &gauss(&[10.0, 10.0], 1.0))
                .unwrap();
        assert_eq!(split.positive.len(), 500);
        assert_eq!(split.unlabeled.len(), 1000);
        assert_eq!(DatasetSplit::outlier_count(&split.positive), 25);
        assert_eq!(DatasetSplit::outlier_count(&split.unlabeled), 100);
        assert_eq!(split.test.len(), 1000);
        assert_eq!(DatasetSplit::outlier_count(&split.test), 100);
    }

    #[test]
    fn class_conditional_means_locate_the_components() {
        let spec = toy_spec(0.2, 100, 1000, 7);
        let split =
            make_synthetic_mixture(&spec, &gauss(&[0.0, 0.0], 1.0), &gauss(&[10.0, 10.0], 1.0))
                .unwrap();
        let mut mean_in = [0.0f64; 2];
        let mut mean_out = [0.0f64; 2];
        let (mut n_in, mut n_out) = (0usize, 0usize);
        for s in &split.unlabeled {
            assert!(s.features.iter().all(|v| (-1.0..=1.0).contains(v)));
            let (m, n) = if s.true_label.is_outlier() {
                (&mut mean_out, &mut n_out)
            } else {
                (&mut mean_in, &mut n_in)
            };
            for (acc, &v) in m.iter_mut().zip(&s.features) {
                *acc += v as f64;
            }
            *n += 1;
        }
        // After scaling the components sit near opposite ends of the range,
        // 10 raw sigmas apart: inliers around -0.75, outliers around +0.75.
        for d in 0..2 {
            let mi = mean_in[d] / n_in as f64;
            let mo = mean_out[d] / n_out as f64;
            assert!((-0.95..=-0.55).contains(&mi), "inlier mean {mi}");
            assert!((0.55..=0.95).contains(&mo), "outlier mean {mo}");
        }
    }

    #[test]
    fn splits_are_deterministic() {
        let spec = toy_spec(0.3, 50, 200, 11).with_contamination(0.1);
        let a = make_synthetic_mixture(&spec, &gauss(&[0.0], 1.0), &gauss(&[5.0], 1.0)).unwrap();
        let b = make_synthetic_mixture(&spec, &gauss(&[0.0], 1.0), &gauss(&[5.0], 1.0)).unwrap();
        assert_eq!(a.positive, b.positive);
        assert_eq!(a.unlabeled, b.unlabeled);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn ids_are_disjoint_between_roles() {
        let spec = toy_spec(0.25, 80, 400, 13);
        let split =
            make_synthetic_mixture(&spec, &gauss(&[0.0, 1.0], 1.0), &gauss(&[6.0, 6.0], 2.0))
                .unwrap();
        split.validate().unwrap();
        let all: Vec<&str> = split
            .positive
            .iter()
            .chain(&split.unlabeled)
            .chain(&split.test)
            .map(|s| s.source_id.as_str())
            .collect();
        let unique: std::collections::HashSet<&&str> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = toy_spec(0.5, 10, 10, 1);
        let err = make_synthetic_mixture(&spec, &gauss(&[0.0], 1.0), &gauss(&[0.0, 0.0], 1.0));
        assert!(matches!(err, Err(DataError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(toy_spec(0.0, 10, 10, 0).validate().is_err());
        assert!(toy_spec(1.0, 10, 10, 0).validate().is_err());
        assert!(toy_spec(0.5, 10, 10, 0)
            .with_contamination(0.5)
            .validate()
            .is_err());
        assert!(toy_spec(0.5, 10, 10, 0)
            .with_contamination(0.49)
            .validate()
            .is_ok());
    }

    #[test]
    fn ring_and_box_descriptors_sample_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ring = Descriptor::Ring {
            center: vec![1.0, -1.0],
            radius: 3.0,
            width: 0.5,
        };
        for _ in 0..200 {
            let p = ring.sample(&mut rng);
            let r = ((p[0] as f64 - 1.0).powi(2) + (p[1] as f64 + 1.0).powi(2)).sqrt();
            assert!((2.74..=3.26).contains(&r), "radius {r}");
        }
        let bx = Descriptor::UniformBox {
            low: vec![-2.0, 0.0],
            high: vec![-1.0, 4.0],
        };
        for _ in 0..200 {
            let p = bx.sample(&mut rng);
            assert!((-2.0..-1.0).contains(&(p[0] as f64)));
            assert!((0.0..4.0).contains(&(p[1] as f64)));
        }
    }

    #[test]
    fn retail_analog_matches_reference_shape() {
        let split = make_retail_analog(10234, 62, 1).unwrap();
        assert_eq!(split.dim, 7);
        assert_eq!(split.positive.len(), 2047);
        assert_eq!(DatasetSplit::outlier_count(&split.positive), 0);
        assert_eq!(split.unlabeled.len(), 10234 - 2047 + 62);
        assert_eq!(DatasetSplit::outlier_count(&split.unlabeled), 62);
        let frac: f64 = 62.0 / (10234.0 + 62.0);
        assert!((frac - 0.0061).abs() < 3e-4, "outlier fraction {frac}");
        // Every sample respects or violates weekend dominance per its label.
        for s in split.positive.iter().chain(&split.unlabeled) {
            let weekday = s.features[..5].iter().cloned().fold(f32::MIN, f32::max);
            let weekend = s.features[5..].iter().cloned().fold(f32::MIN, f32::max);
            match s.true_label {
                Label::Inlier => assert!(weekend > weekday, "{}", s.source_id),
                Label::Outlier => assert!(weekday > weekend, "{}", s.source_id),
            }
            assert!(s.features.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let spec = toy_spec(0.4, 20, 50, 21);
        let split =
            make_synthetic_mixture(&spec, &gauss(&[0.0, 0.5], 1.0), &gauss(&[4.0, 4.0], 0.5))
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unlabeled.csv");
        write_snapshot(&path, &split.unlabeled).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back, split.unlabeled);
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("waldo-split v1\nid,label,feature_0,feature_1\n"));
    }

    #[test]
    fn counts_fuzz_over_nu_and_contamination_grid() {
        for (i, &nu) in [0.05, 0.1, 0.25, 0.37, 0.5, 0.73, 0.95].iter().enumerate() {
            for (j, &cont) in [0.0, 0.01, 0.13, 0.25, 0.45].iter().enumerate() {
                let spec = toy_spec(nu, 97, 211, (i * 10 + j) as u64).with_contamination(cont);
                let split =
                    make_synthetic_mixture(&spec, &gauss(&[0.0], 1.0), &gauss(&[9.0], 1.0))
                        .unwrap();
                assert_eq!(
                    DatasetSplit::outlier_count(&split.unlabeled),
                    (nu * 211.0).round() as usize
                );
                assert_eq!(
                    DatasetSplit::outlier_count(&split.positive),
                    (cont * 97.0).round() as usize
                );
            }
        }
    }
}
