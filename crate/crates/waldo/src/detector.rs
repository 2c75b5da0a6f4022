//! Threshold-free detection: a sample is classified by whichever decoder
//! reconstructs it better. No advantage penalty applies here; the penalty
//! is a training device only.

use crate::data::{features_matrix, Sample};
use crate::losses::reconstruction_errors;
use crate::model::{ModelError, WaldoModel};
use crate::Label;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub sample_id: String,
    pub re_inlier: f64,
    pub re_outlier: f64,
    /// `re_inlier - re_outlier`; non-positive classifies as inlier.
    pub residual: f64,
    pub predicted: Label,
}

impl DetectionResult {
    /// Score for ranking-based evaluation against single-decoder baselines.
    pub fn inlier_re_score(&self) -> f64 {
        self.re_inlier
    }
}

/// Decision rule shared by detection paths: ties go to the inlier class.
pub fn classify(re_inlier: f64, re_outlier: f64) -> Label {
    if re_inlier - re_outlier <= 0.0 {
        Label::Inlier
    } else {
        Label::Outlier
    }
}

/// Classifies every sample with both decoders in evaluation mode.
pub fn detect(
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<Vec<DetectionResult>, ModelError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let x = features_matrix(samples);
    let z = model.encode(&x)?;
    let xi = model.decode_inlier(&z)?;
    let xo = model.decode_outlier(&z)?;
    let re_i = reconstruction_errors(&x, &xi);
    let re_o = reconstruction_errors(&x, &xo);
    Ok(samples
        .iter()
        .zip(re_i.iter().zip(&re_o))
        .map(|(s, (&ri, &ro))| DetectionResult {
            sample_id: s.source_id.clone(),
            re_inlier: ri,
            re_outlier: ro,
            residual: ri - ro,
            predicted: classify(ri, ro),
        })
        .collect())
}

/// Residual scores aligned with the input order; higher means more outlying.
pub fn residual_scores(results: &[DetectionResult]) -> Vec<f64> {
    results.iter().map(|r| r.residual).collect()
}

pub fn predictions(results: &[DetectionResult]) -> Vec<Label> {
    results.iter().map(|r| r.predicted).collect()
}

/// Ranks sample ids by inlier-decoder reconstruction error, worst first.
/// Ties break by sample id so the order is a deterministic total order.
pub fn rank_by_inlier_re(
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<Vec<String>, ModelError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let x = features_matrix(samples);
    let z = model.encode(&x)?;
    let xi = model.decode_inlier(&z)?;
    let re_i = reconstruction_errors(&x, &xi);
    let mut order: Vec<(f64, &str)> = re_i
        .iter()
        .zip(samples)
        .map(|(&re, s)| (re, s.source_id.as_str()))
        .collect();
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("reconstruction errors are finite")
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(order.into_iter().map(|(_, id)| id.to_string()).collect())
}

/// CSV export: id, re_inlier, re_outlier, residual, predicted.
pub fn write_detections_csv(path: &Path, results: &[DetectionResult]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "id,re_inlier,re_outlier,residual,predicted")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.sample_id, r.re_inlier, r.re_outlier, r.residual, r.predicted
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ArchitectureSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_samples(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Sample {
                features: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                true_label: Label::Inlier,
                source_id: format!("s{i:03}"),
            })
            .collect()
    }

    #[test]
    fn classification_follows_residual_sign() {
        assert_eq!(classify(0.1, 0.9), Label::Inlier);
        assert_eq!(classify(0.9, 0.1), Label::Outlier);
        assert_eq!(classify(0.4, 0.4), Label::Inlier);
    }

    #[test]
    fn detect_is_pure_and_consistent() {
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 7).unwrap();
        let samples = toy_samples(40, 1);
        let a = detect(&mut model, &samples).unwrap();
        let b = detect(&mut model, &samples).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert_eq!(r.predicted, classify(r.re_inlier, r.re_outlier));
            assert!((r.residual - (r.re_inlier - r.re_outlier)).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_decoders_negates_residuals() {
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 9).unwrap();
        let samples = toy_samples(30, 2);
        let before = detect(&mut model, &samples).unwrap();
        let outlier = model.outlier_decoder.as_mut().unwrap();
        std::mem::swap(&mut model.inlier_decoder, outlier);
        let after = detect(&mut model, &samples).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x.residual + y.residual).abs() < 1e-9);
            if x.residual != 0.0 {
                assert_ne!(x.predicted, y.predicted);
            }
        }
    }

    #[test]
    fn ranking_is_descending_with_id_tiebreak() {
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 3).unwrap();
        let mut samples = toy_samples(25, 4);
        // A duplicated feature vector forces an exact score tie.
        let dup = samples[0].features.clone();
        samples[1].features = dup;
        let order = rank_by_inlier_re(&mut model, &samples).unwrap();
        assert_eq!(order.len(), 25);
        let results = detect(&mut model, &samples).unwrap();
        let score: std::collections::HashMap<&str, f64> = results
            .iter()
            .map(|r| (r.sample_id.as_str(), r.re_inlier))
            .collect();
        for w in order.windows(2) {
            let (a, b) = (score[w[0].as_str()], score[w[1].as_str()]);
            assert!(a > b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn ranking_is_input_order_invariant() {
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 5).unwrap();
        let samples = toy_samples(20, 6);
        let mut reversed = samples.clone();
        reversed.reverse();
        assert_eq!(
            rank_by_inlier_re(&mut model, &samples).unwrap(),
            rank_by_inlier_re(&mut model, &reversed).unwrap()
        );
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 11).unwrap();
        let samples = toy_samples(5, 8);
        let results = detect(&mut model, &samples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        write_detections_csv(&path, &results).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,re_inlier,re_outlier,residual,predicted");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("s000,"));
    }
}
