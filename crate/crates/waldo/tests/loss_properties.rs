//! Competition and batch-loss invariants under randomized inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waldo::losses::{compete, waldo_batch_loss, AdvantageConfig};
use waldo::Label;

/// With no advantage the competition is a plain argmin with ties going to
/// the inlier decoder; fuzzed over a hundred thousand pairs.
#[test]
fn zero_advantage_is_argmin_with_inlier_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100_000 {
        // Every third pair is drawn from a coarse grid to force exact ties.
        let (a, b) = if i % 3 == 0 {
            (
                rng.random_range(0..5) as f64 * 0.25,
                rng.random_range(0..5) as f64 * 0.25,
            )
        } else {
            (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))
        };
        let o = compete(a, b, 0.0);
        let expected = if a <= b { Label::Inlier } else { Label::Outlier };
        assert_eq!(o.winner, expected, "re=({a},{b})");
        assert_eq!(o.selected_loss, a.min(b));
        assert_eq!(o.residual, a - b);
    }
}

/// The selected loss is always the winner's error plus the penalty exactly
/// when the raw argmin winner kept the sample.
#[test]
fn selected_loss_matches_winner_contribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..100_000 {
        let a = rng.random_range(0.0..5.0);
        let b = rng.random_range(0.0..5.0);
        let adv = rng.random_range(0.0..2.0);
        let o = compete(a, b, adv);
        let raw = if a < b { Label::Inlier } else { Label::Outlier };
        let base = match o.winner {
            Label::Inlier => a,
            Label::Outlier => b,
        };
        let expected = if o.winner == raw { base + adv } else { base };
        assert!((o.selected_loss - expected).abs() < 1e-12);
    }
}

/// Raising the advantage can only move the win away from the raw winner,
/// never back: switching is monotone in the penalty.
#[test]
fn switching_is_monotone_in_advantage() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..50_000 {
        let a = rng.random_range(0.0..5.0);
        let b = rng.random_range(0.0..5.0);
        let adv_small = rng.random_range(0.0..2.0);
        let adv_big = adv_small + rng.random_range(0.0..2.0);
        let raw = compete(a, b, 0.0).winner;
        let small = compete(a, b, adv_small).winner;
        let big = compete(a, b, adv_big).winner;
        if small != raw {
            assert_ne!(big, raw, "re=({a},{b}), adv=({adv_small},{adv_big})");
        }
    }
}

/// The relative advantage mode is scale-equivariant: multiplying all errors
/// by a positive constant leaves every assignment unchanged.
#[test]
fn relative_mode_is_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let cfg = AdvantageConfig::relative(0.1);
    for _ in 0..2_000 {
        let n = rng.random_range(2..40);
        let re_i: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let re_o: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let scale = rng.random_range(0.1..50.0);
        let si: Vec<f64> = re_i.iter().map(|v| v * scale).collect();
        let so: Vec<f64> = re_o.iter().map(|v| v * scale).collect();
        let base = waldo_batch_loss(&re_i, &re_o, &cfg, 0.0, 1.0);
        let scaled = waldo_batch_loss(&si, &so, &cfg, 0.0, 1.0);
        for (x, y) in base.outcomes.iter().zip(scaled.outcomes.iter()) {
            assert_eq!(x.winner, y.winner);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    /// The reported total decomposes into its parts to near machine
    /// precision, and assignment counts partition the batch.
    #[test]
    fn batch_loss_decomposition(
        res in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..60),
        a in 0.0f64..1.0,
        relative in any::<bool>(),
        adv_term in -3.0f64..3.0,
        lambda in 0.0f64..20.0,
    ) {
        let re_i: Vec<f64> = res.iter().map(|p| p.0).collect();
        let re_o: Vec<f64> = res.iter().map(|p| p.1).collect();
        let cfg = if relative { AdvantageConfig::relative(a) } else { AdvantageConfig::absolute(a) };
        let r = waldo_batch_loss(&re_i, &re_o, &cfg, adv_term, lambda);
        prop_assert_eq!(r.n_assigned_inlier + r.n_assigned_outlier, res.len());
        let recon = r.outcomes.iter().map(|o| o.selected_loss).sum::<f64>() / res.len() as f64;
        prop_assert!((r.reconstruction_term - recon).abs() < 1e-12);
        prop_assert!((r.total - (r.reconstruction_term + lambda * r.adversarial_term)).abs() < 1e-12);
        for o in &r.outcomes {
            prop_assert!((o.residual - (o.re_inlier - o.re_outlier)).abs() < 1e-12);
        }
    }

    /// Without advantage, the winner is exactly the sign of the residual,
    /// with ties assigned to the inlier decoder.
    #[test]
    fn residual_sign_decides_raw_winner(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let o = compete(a, b, 0.0);
        if o.residual <= 0.0 {
            prop_assert_eq!(o.winner, Label::Inlier);
        } else {
            prop_assert_eq!(o.winner, Label::Outlier);
        }
    }
}
