//! Training objectives: squared-error reconstruction, per-sample decoder
//! competition with an advantage handicap, and the latent adversarial pair
//! of objectives.
//!
//! The advantage term stabilizes assignments: the decoder that currently
//! wins a sample must beat the other by more than the penalty to keep it.
//! The penalty enters comparisons only; it carries no gradient.

use crate::nn::Scalar;
use crate::Label;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the log
/// objectives so saturated discriminator outputs stay finite.
pub const PROB_EPS: f64 = 1e-7;

/// Per-sample squared Euclidean reconstruction error, one value per row.
pub fn reconstruction_errors<F: Scalar>(x: &Array2<F>, x_hat: &Array2<F>) -> Vec<f64> {
    assert_eq!(
        x.dim(),
        x_hat.dim(),
        "reconstruction shapes differ: {:?} vs {:?}",
        x.dim(),
        x_hat.dim()
    );
    x.rows()
        .into_iter()
        .zip(x_hat.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(&u, &v)| {
                    let d = (u - v).to_f64();
                    d * d
                })
                .sum()
        })
        .collect()
}

/// How the advantage penalty scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// `a` is the penalty itself.
    Absolute,
    /// Penalty is `a` times the batch mean of per-sample winning errors,
    /// so it tracks the reconstruction scale during training.
    RelativeToBatchMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantageConfig {
    pub a: f64,
    pub mode: AdvantageMode,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            mode: AdvantageMode::RelativeToBatchMean,
        }
    }
}

impl AdvantageConfig {
    pub fn none() -> Self {
        Self {
            a: 0.0,
            mode: AdvantageMode::Absolute,
        }
    }

    pub fn absolute(a: f64) -> Self {
        Self {
            a,
            mode: AdvantageMode::Absolute,
        }
    }

    pub fn relative(a: f64) -> Self {
        Self {
            a,
            mode: AdvantageMode::RelativeToBatchMean,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0
    }

    /// Absolute penalty for one batch; `batch_mean_min_re` is the batch mean
    /// of per-sample `min(re_inlier, re_outlier)`.
    pub fn effective_penalty(&self, batch_mean_min_re: f64) -> f64 {
        match self.mode {
            AdvantageMode::Absolute => self.a,
            AdvantageMode::RelativeToBatchMean => self.a * batch_mean_min_re,
        }
    }
}

/// Result of one sample's decoder competition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitionOutcome {
    /// Decoder the sample is assigned to for this step.
    pub winner: Label,
    pub re_inlier: f64,
    pub re_outlier: f64,
    /// `re_inlier - re_outlier`; non-positive means the inlier decoder
    /// reconstructs at least as well.
    pub residual: f64,
    /// Winning comparison value: the winner's error, plus the penalty when
    /// the raw argmin winner kept the sample.
    pub selected_loss: f64,
}

/// Assigns a sample to a decoder. The raw argmin winner is handicapped by
/// `advantage` before the final comparison; all ties resolve to the inlier
/// decoder. `advantage` must be a finite non-negative resolved penalty (see
/// [`AdvantageConfig::effective_penalty`]).
pub fn compete(re_inlier: f64, re_outlier: f64, advantage: f64) -> CompetitionOutcome {
    assert!(
        advantage >= 0.0 && advantage.is_finite(),
        "advantage must be finite and non-negative, got {advantage}"
    );
    assert!(
        re_inlier.is_finite() && re_outlier.is_finite(),
        "reconstruction errors must be finite, got ({re_inlier}, {re_outlier})"
    );
    // Exact raw ties handicap the outlier decoder, so a tied sample stays
    // with the inlier decoder under any penalty.
    let raw_inlier_wins = re_inlier < re_outlier;
    let (pen_inlier, pen_outlier) = if raw_inlier_wins {
        (re_inlier + advantage, re_outlier)
    } else {
        (re_inlier, re_outlier + advantage)
    };
    let winner = if pen_inlier <= pen_outlier {
        Label::Inlier
    } else {
        Label::Outlier
    };
    CompetitionOutcome {
        winner,
        re_inlier,
        re_outlier,
        residual: re_inlier - re_outlier,
        selected_loss: pen_inlier.min(pen_outlier),
    }
}

/// Discriminator objective to ASCEND:
/// `mean(log d(z_prior)) + mean(log(1 - d(z_encoded)))`.
/// Training steps descend its negation.
pub fn discriminator_objective<F: Scalar>(d_prior: &Array2<F>, d_encoded: &Array2<F>) -> f64 {
    assert!(!d_prior.is_empty() && !d_encoded.is_empty(), "empty discriminator batch");
    let mean_log = |a: &Array2<F>, f: fn(f64) -> f64| -> f64 {
        a.iter().map(|&v| f(clamp_prob(v.to_f64())).ln()).sum::<f64>() / a.len() as f64
    };
    mean_log(d_prior, |p| p) + mean_log(d_encoded, |p| 1.0 - p)
}

/// Adversarial term the encoder DESCENDS: `-mean(log d(z_encoded))`.
/// Minimal when encoded latents fool the discriminator completely.
pub fn encoder_adversarial_loss<F: Scalar>(d_encoded: &Array2<F>) -> f64 {
    assert!(!d_encoded.is_empty(), "empty adversarial batch");
    -d_encoded
        .iter()
        .map(|&v| clamp_prob(v.to_f64()).ln())
        .sum::<f64>()
        / d_encoded.len() as f64
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Full diagnostic decomposition of one batch objective.
#[derive(Debug, Clone)]
pub struct BatchLossReport {
    pub outcomes: Vec<CompetitionOutcome>,
    /// Mean of per-sample `min(re_inlier, re_outlier)` before the penalty.
    pub batch_mean_min_re: f64,
    /// Resolved absolute penalty used for every sample of this batch.
    pub effective_advantage: f64,
    /// Mean selected competition loss.
    pub reconstruction_term: f64,
    /// Encoder adversarial loss, already averaged.
    pub adversarial_term: f64,
    pub lambda: f64,
    /// `reconstruction_term + lambda * adversarial_term`.
    pub total: f64,
    pub n_assigned_inlier: usize,
    pub n_assigned_outlier: usize,
}

/// Combines per-sample reconstruction errors and the adversarial term into
/// the batch objective. The relative advantage mode resolves against this
/// batch's mean winning error.
pub fn waldo_batch_loss(
    re_inlier: &[f64],
    re_outlier: &[f64],
    advantage: &AdvantageConfig,
    adversarial_term: f64,
    lambda: f64,
) -> BatchLossReport {
    assert_eq!(re_inlier.len(), re_outlier.len(), "error list length mismatch");
    assert!(!re_inlier.is_empty(), "empty batch");
    let batch_mean_min_re = re_inlier
        .iter()
        .zip(re_outlier)
        .map(|(&a, &b)| a.min(b))
        .sum::<f64>()
        / re_inlier.len() as f64;
    let effective_advantage = advantage.effective_penalty(batch_mean_min_re);
    let outcomes: Vec<CompetitionOutcome> = re_inlier
        .iter()
        .zip(re_outlier)
        .map(|(&a, &b)| compete(a, b, effective_advantage))
        .collect();
    let n_assigned_inlier = outcomes
        .iter()
        .filter(|o| o.winner == Label::Inlier)
        .count();
    let reconstruction_term =
        outcomes.iter().map(|o| o.selected_loss).sum::<f64>() / outcomes.len() as f64;
    BatchLossReport {
        n_assigned_outlier: outcomes.len() - n_assigned_inlier,
        n_assigned_inlier,
        batch_mean_min_re,
        effective_advantage,
        reconstruction_term,
        adversarial_term,
        lambda,
        total: reconstruction_term + lambda * adversarial_term,
        outcomes,
    }
}
