//! Property tests for the exact optimal-transport oracle: metric axioms,
//! brute-force assignment equivalence, and the closed-form lemma,
//! coefficient, and decomposition identities behind the dual-decoder bound.

use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use waldo::ot::{
    check_sqrt_lemma, exact_wasserstein, exact_wasserstein_lp, mixture_decomposition_check,
    theorem_coefficients, EmpiricalDistribution,
};
use waldo::Label;

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| (rng.random::<f64>() - 0.5) * scale).collect())
        .collect()
}

/// Minimum over all n! assignments of the mean p-th power cost, to 1/p.
fn brute_force_uniform_wasserstein(xs: &[Vec<f64>], ys: &[Vec<f64>], p: f64) -> f64 {
    let n = xs.len();
    let cost = |i: usize, j: usize| -> f64 {
        xs[i]
            .iter()
            .zip(&ys[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            .powf(p)
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |assignment| {
        let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
        if total < best {
            best = total;
        }
    });
    (best / n as f64).powf(1.0 / p)
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[test]
fn assignment_and_lp_match_brute_force_up_to_n7() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..60 {
        let n = rng.random_range(1..=7);
        let d = rng.random_range(1..=3);
        let xs = random_points(&mut rng, n, d, 4.0);
        let ys = random_points(&mut rng, n, d, 4.0);
        let p = [1.0, 2.0][trial % 2];
        let oracle = brute_force_uniform_wasserstein(&xs, &ys, p);
        let mu = EmpiricalDistribution::uniform(xs).unwrap();
        let nu = EmpiricalDistribution::uniform(ys).unwrap();
        let fast = exact_wasserstein(&mu, &nu, p).unwrap();
        let lp = exact_wasserstein_lp(&mu, &nu, p).unwrap();
        assert!(
            (fast - oracle).abs() < 1e-8,
            "trial {trial} n={n} p={p}: assignment {fast} vs brute force {oracle}"
        );
        assert!(
            (lp - oracle).abs() < 1e-8,
            "trial {trial} n={n} p={p}: lp {lp} vs brute force {oracle}"
        );
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmpiricalDistribution {
    let points = random_points(rng, n, d, 6.0);
    if rng.random::<bool>() {
        EmpiricalDistribution::uniform(points).unwrap()
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let sum: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let s: f64 = weights.iter().sum();
        weights[n - 1] += 1.0 - s;
        EmpiricalDistribution::new(points, weights).unwrap()
    }
}

#[test]
fn metric_axioms_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..40 {
        let d = rng.random_range(1..=3);
        let (na, nb, nc) = (
            rng.random_range(1..=6),
            rng.random_range(1..=6),
            rng.random_range(1..=6),
        );
        let a = random_distribution(&mut rng, na, d);
        let b = random_distribution(&mut rng, nb, d);
        let c = random_distribution(&mut rng, nc, d);
        let p = [1.0, 2.0][trial % 2];

        let dab = exact_wasserstein(&a, &b, p).unwrap();
        let dba = exact_wasserstein(&b, &a, p).unwrap();
        let dac = exact_wasserstein(&a, &c, p).unwrap();
        let dbc = exact_wasserstein(&b, &c, p).unwrap();
        let daa = exact_wasserstein(&a, &a.clone(), p).unwrap();

        assert!(dab >= 0.0);
        assert!((dab - dba).abs() < 1e-8, "symmetry: {dab} vs {dba}");
        assert!(daa.abs() < 1e-8, "identity: {daa}");
        assert!(
            dac <= dab + dbc + 1e-8,
            "triangle: {dac} > {dab} + {dbc} (trial {trial})"
        );
    }
}

#[test]
fn sqrt_lemma_holds_on_fuzz_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    // Boundary cases first, then bulk fuzz across magnitudes.
    for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1e-300, 1e300), (1e12, 1e12)] {
        let check = check_sqrt_lemma(a, b).unwrap();
        assert!(check.holds, "lemma failed at ({a}, {b})");
    }
    for _ in 0..100_000 {
        let scale = 10f64.powi(rng.random_range(-12..=12));
        let a = rng.random::<f64>() * scale;
        let b = rng.random::<f64>() * scale;
        let check = check_sqrt_lemma(a, b).unwrap();
        assert!(check.holds, "lemma failed at ({a}, {b}), slack {}", check.slack);
    }
}

#[test]
fn decomposition_identity_on_random_stratified_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..200 {
        let n = 1000;
        let n_out = rng.random_range(1..n);
        let nu = n_out as f64 / n as f64;
        let mut labels = vec![Label::Outlier; n_out];
        labels.extend(vec![Label::Inlier; n - n_out]);
        labels.shuffle(&mut rng);
        let costs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let report = mixture_decomposition_check(&costs, &labels, nu).unwrap();
        assert!(report.holds, "diff {} at nu {nu}", report.abs_diff);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn coefficient_identity_alpha_sq_plus_beta_sq(nu in 1e-9f64..1.0) {
        prop_assume!(nu < 1.0);
        let c = theorem_coefficients(nu, 1.0).unwrap();
        prop_assert!((c.alpha * c.alpha + c.beta * c.beta - 0.5).abs() < 1e-12);
        prop_assert!(c.alpha > 0.0 && c.beta > 0.0);
        // The weight sum never exceeds 1, so delta keeps gamma's sign.
        prop_assert!(c.alpha + c.beta <= 1.0 + 1e-12);
    }

    #[test]
    fn sqrt_lemma_proptest(a in 0f64..1e9, b in 0f64..1e9) {
        let check = check_sqrt_lemma(a, b).unwrap();
        prop_assert!(check.holds);
    }

    #[test]
    fn wasserstein_translation_lower_bound_in_1d(shift in -5.0f64..5.0) {
        // Translating a distribution by s moves it exactly |s| in W1.
        let points: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let shifted: Vec<Vec<f64>> = points.iter().map(|p| vec![p[0] + shift]).collect();
        let mu = EmpiricalDistribution::uniform(points).unwrap();
        let nu = EmpiricalDistribution::uniform(shifted).unwrap();
        let d = exact_wasserstein(&mu, &nu, 1.0).unwrap();
        prop_assert!((d - shift.abs()).abs() < 1e-8);
    }
}
