//! Metric implementations checked against independent brute-force oracles
//! and distributional properties.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use waldo::metrics::{auc, average_precision};
use waldo::Label;

/// O(n^2) pairwise comparison: wins + half ties over all (pos, neg) pairs.
fn auc_pairwise_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if !li.is_outlier() {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj.is_outlier() {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Recomputes precision at every positive prefix from scratch.
fn ap_prefix_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let n_pos = labels.iter().filter(|l| l.is_outlier()).count();
    let mut sum = 0.0f64;
    for k in 0..order.len() {
        if labels[order[k]].is_outlier() {
            let hits_in_prefix = order[..=k]
                .iter()
                .filter(|&&i| labels[i].is_outlier())
                .count();
            sum += hits_in_prefix as f64 / (k + 1) as f64;
        }
    }
    sum / n_pos as f64
}

fn random_instance(rng: &mut ChaCha8Rng, allow_ties: bool) -> (Vec<f64>, Vec<Label>) {
    let n = rng.random_range(2..=120);
    let n_pos = rng.random_range(1..n.max(2)).min(n - 1);
    let mut labels = vec![Label::Outlier; n_pos];
    labels.extend(vec![Label::Inlier; n - n_pos]);
    labels.shuffle(rng);
    let scores: Vec<f64> = (0..n)
        .map(|_| {
            if allow_ties {
                // Coarse grid makes score collisions common.
                (rng.random_range(0..8) as f64) / 4.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    (scores, labels)
}

#[test]
fn auc_matches_pairwise_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let (scores, labels) = random_instance(&mut rng, case % 3 == 0);
        let fast = auc(&scores, &labels).unwrap();
        let slow = auc_pairwise_oracle(&scores, &labels);
        assert!(
            (fast - slow).abs() < 1e-12,
            "case {case}: auc {fast} vs oracle {slow}"
        );
    }
}

#[test]
fn average_precision_matches_prefix_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..1000 {
        let (scores, labels) = random_instance(&mut rng, case % 3 == 0);
        let fast = average_precision(&scores, &labels).unwrap();
        let slow = ap_prefix_oracle(&scores, &labels);
        assert!(
            (fast - slow).abs() < 1e-12,
            "case {case}: ap {fast} vs oracle {slow}"
        );
    }
}

#[test]
fn auc_invariant_under_strictly_monotone_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let (scores, labels) = random_instance(&mut rng, false);
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (4.0 * s - 1.0).tanh()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s * 1e6 + 3.0).collect();
        assert!((auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
        assert!((auc(&shifted, &labels).unwrap() - base).abs() < 1e-12);
    }
}

#[test]
fn auc_of_negated_scores_complements_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let (scores, labels) = random_instance(&mut rng, false);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auc(&scores, &labels).unwrap() + auc(&negated, &labels).unwrap();
        assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
    }
}

#[test]
fn ap_bounds_best_ranking_and_random_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 200;
    let n_pos = 20;
    let base_rate = n_pos as f64 / n as f64;

    // Best ranking: all positives first -> AP = 1 >= base rate.
    let mut labels = vec![Label::Outlier; n_pos];
    labels.extend(vec![Label::Inlier; n - n_pos]);
    let descending: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
    assert_eq!(average_precision(&descending, &labels).unwrap(), 1.0);

    // Random rankings: mean AP over shuffles stays near the base rate.
    // AP of a random ranking is upward-skewed at finite n, so the check is a
    // generous 3-sigma band around the empirical mean rather than equality.
    let mut values = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        values.push(average_precision(&scores, &labels).unwrap());
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (values.len() - 1) as f64;
    let sem = (var / values.len() as f64).sqrt();
    assert!(values.iter().all(|&v| v >= base_rate * 0.2));
    assert!(
        (mean - base_rate).abs() < 3.0 * sem + 0.02,
        "mean AP {mean} too far from base rate {base_rate} (sem {sem})"
    );
}
