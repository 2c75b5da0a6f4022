//! Ranking and classification metrics: AUC, average precision / AUPRC, and
//! F1 computed from threshold-free assignments.
//!
//! Conventions, fixed because cross-run comparisons depend on them:
//! - higher score means more outlier-like, and outlier is the positive class;
//! - AUC handles ties with half credit (Mann-Whitney statistic);
//! - average precision is the step-wise sum of precision at each positive,
//!   with no interpolation; `auprc` is the same quantity under its other name.

use crate::Label;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("metric needs both classes present ({positives} positives out of {n})")]
    SingleClass { positives: usize, n: usize },
    #[error("metric needs at least one positive label")]
    NoPositives,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

/// Classification/ranking summary for one evaluation. Ranking fields are
/// `None` when the report was produced from hard assignments alone.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: Option<f64>,
    pub auprc: Option<f64>,
    pub average_precision: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Set when a zero denominator forced precision, recall, or F1 to 0.
    pub zero_division: bool,
}

impl EvalReport {
    pub fn counts_total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Mean and sample standard deviation over independent runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Aggregates per-seed metric values; std uses the n-1 denominator and is 0
/// for a single value.
pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let std = if n > 1 {
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, std, n }
}

fn validate(scores: &[f64], labels: &[Label]) -> Result<usize, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(labels.iter().filter(|l| l.is_outlier()).count())
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score_out > score_in) + 0.5 P(tie), computed via average ranks.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    let n_pos = validate(scores, labels)?;
    let n = scores.len();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass { positives: n_pos, n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks within tie groups give exactly the half-credit rule.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx].is_outlier() {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: sum over the positives, in descending score order, of
/// precision at that position, divided by the number of positives. Ties are
/// broken by original index so the value is deterministic.
pub fn average_precision(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    let n_pos = validate(scores, labels)?;
    if n_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (pos, &idx) in order.iter().enumerate() {
        if labels[idx].is_outlier() {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Area under the precision-recall curve with the step-wise construction;
/// identical to [`average_precision`] by definition, exported under both
/// names because reports use both.
pub fn auprc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    average_precision(scores, labels)
}

/// F1 (outlier = positive class) from hard assignments. Zero denominators
/// yield 0 for the affected rate and set the `zero_division` flag.
pub fn f1_from_assignment(predicted: &[Label], truth: &[Label]) -> Result<EvalReport, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            scores: predicted.len(),
            labels: truth.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p.is_outlier(), t.is_outlier()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut zero_division = false;
    let mut ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            zero_division = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        zero_division = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        auc: None,
        auprc: None,
        average_precision: None,
        f1,
        precision,
        recall,
        tp,
        fp,
        tn,
        fn_,
        zero_division,
    })
}

/// Full report: ranking metrics from scores plus classification metrics from
/// assignments, against the same ground truth.
pub fn evaluate(
    scores: &[f64],
    predicted: &[Label],
    truth: &[Label],
) -> Result<EvalReport, MetricsError> {
    let mut report = f1_from_assignment(predicted, truth)?;
    report.auc = Some(auc(scores, truth)?);
    let ap = average_precision(scores, truth)?;
    report.auprc = Some(ap);
    report.average_precision = Some(ap);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Label::{Inlier as I, Outlier as O};

    #[test]
    fn auc_perfect_separation() {
        let scores = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(auc(&scores, &[O, O, I, I]).unwrap(), 1.0);
        assert_eq!(auc(&scores, &[I, I, O, O]).unwrap(), 0.0);
    }

    #[test]
    fn auc_ties_get_half_credit() {
        let scores = [0.5, 0.5];
        assert_eq!(auc(&scores, &[O, I]).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert_eq!(
            auc(&[0.1, 0.2], &[O, O]),
            Err(MetricsError::SingleClass { positives: 2, n: 2 })
        );
    }

    #[test]
    fn ap_perfect_ranking_is_one() {
        let scores = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(average_precision(&scores, &[O, O, I, I]).unwrap(), 1.0);
    }

    #[test]
    fn ap_single_positive_at_position_k() {
        // One positive ranked third out of five: AP = 1/3.
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
        let got = average_precision(&scores, &[I, I, O, I, I]).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auprc_is_average_precision() {
        let scores = [0.3, 0.9, 0.1, 0.7];
        let labels = [I, O, I, O];
        assert_eq!(
            auprc(&scores, &labels).unwrap(),
            average_precision(&scores, &labels).unwrap()
        );
    }

    #[test]
    fn f1_perfect_prediction() {
        let truth = [O, I, O, I];
        let report = f1_from_assignment(&truth, &truth).unwrap();
        assert_eq!(report.f1, 1.0);
        assert!(!report.zero_division);
    }

    #[test]
    fn f1_zero_division_flag() {
        let report = f1_from_assignment(&[I, I], &[O, I]).unwrap();
        assert_eq!(report.f1, 0.0);
        assert!(report.zero_division);
        assert_eq!(report.fn_, 1);
    }

    #[test]
    fn f1_hand_counts() {
        // tp=8, fp=2, fn=2 -> precision 0.8, recall 0.8, f1 0.8.
        let mut predicted = vec![O; 10];
        let mut truth = vec![O; 8];
        truth.extend([I, I]);
        predicted.extend([I, I]);
        truth.extend([O, O]);
        let report = f1_from_assignment(&predicted, &truth).unwrap();
        assert_eq!(report.tp, 8);
        assert_eq!(report.fp, 2);
        assert_eq!(report.fn_, 2);
        assert!((report.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let agg = aggregate(&[1.0, 2.0, 3.0]);
        assert_eq!(agg.mean, 2.0);
        assert!((agg.std - 1.0).abs() < 1e-15);
        assert_eq!(aggregate(&[5.0]).std, 0.0);
    }
}
