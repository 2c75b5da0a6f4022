//! Exact optimal-transport distances on small empirical distributions plus
//! numeric verification helpers for the dual-decoder lower bound: its
//! closed-form coefficients, the square-root lemma used in its proof, the
//! mixture decomposition identity, and an end-to-end surrogate evaluation.
//!
//! The solver is an oracle for tests and reports, not a production OT
//! library: instances are capped at 500 total points and solved exactly via
//! linear programming, with an O(n^3) assignment fast path when both sides
//! are uniform with equal support size.

use crate::Label;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Hard cap on the combined support size of both distributions.
pub const MAX_TOTAL_POINTS: usize = 500;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("empty distribution")]
    Empty,
    #[error("points and weights differ in length: {points} vs {weights}")]
    WeightCount { points: usize, weights: usize },
    #[error("weights must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("weights sum to {0}, expected 1 within 1e-12")]
    WeightSum(f64),
    #[error("point dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("instance has {0} total points, exact solver is capped at {MAX_TOTAL_POINTS}")]
    TooManyPoints(usize),
    #[error("order p must satisfy p >= 1, got {0}")]
    BadOrder(f64),
    #[error("nu must lie strictly inside (0,1), got {0}")]
    BadNu(f64),
    #[error("gamma must be nonnegative, got {0}")]
    BadGamma(f64),
    #[error("negative input to sqrt lemma: {0}")]
    NegativeInput(f64),
    #[error("label fractions inconsistent with nu={nu}: {outliers} outliers out of {n}")]
    InconsistentFractions { nu: f64, outliers: usize, n: usize },
    #[error("linear program failed: {0}")]
    Lp(String),
}

/// Finitely supported probability measure: points with nonnegative weights
/// summing to one.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, OtError> {
        if points.is_empty() {
            return Err(OtError::Empty);
        }
        if points.len() != weights.len() {
            return Err(OtError::WeightCount {
                points: points.len(),
                weights: weights.len(),
            });
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(OtError::DimensionMismatch(d, p.len()));
            }
        }
        if let Some(&w) = weights.iter().find(|&&w| w < 0.0 || !w.is_finite()) {
            return Err(OtError::NegativeWeight(w));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(OtError::WeightSum(sum));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights over the given support.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, OtError> {
        let n = points.len();
        if n == 0 {
            return Err(OtError::Empty);
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Force the sum to exactly 1 regardless of rounding in 1/n.
        let sum: f64 = weights.iter().sum();
        weights[n - 1] += 1.0 - sum;
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&wi| (wi - w).abs() <= WEIGHT_SUM_TOL)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cost_matrix(mu: &EmpiricalDistribution, nu: &EmpiricalDistribution, p: f64) -> Vec<Vec<f64>> {
    mu.points
        .iter()
        .map(|x| nu.points.iter().map(|y| euclidean(x, y).powf(p)).collect())
        .collect()
}

/// p-Wasserstein distance between two empirical distributions, solved
/// exactly: (min over couplings of sum pi_ij ||x_i - y_j||^p)^(1/p).
pub fn exact_wasserstein(
    mu: &EmpiricalDistribution,
    nu: &EmpiricalDistribution,
    p: f64,
) -> Result<f64, OtError> {
    check_pair(mu, nu, p)?;
    let cost = cost_matrix(mu, nu, p);
    let total = if mu.len() == nu.len() && mu.is_uniform() && nu.is_uniform() {
        solve_assignment(&cost) / mu.len() as f64
    } else {
        solve_transport_lp(&cost, &mu.weights, &nu.weights)?
    };
    Ok(total.max(0.0).powf(1.0 / p))
}

/// Same distance, forced through the linear program even when the
/// assignment fast path applies. Exposed so tests can cross-check the two
/// solvers against each other.
pub fn exact_wasserstein_lp(
    mu: &EmpiricalDistribution,
    nu: &EmpiricalDistribution,
    p: f64,
) -> Result<f64, OtError> {
    check_pair(mu, nu, p)?;
    let cost = cost_matrix(mu, nu, p);
    let total = solve_transport_lp(&cost, &mu.weights, &nu.weights)?;
    Ok(total.max(0.0).powf(1.0 / p))
}

fn check_pair(
    mu: &EmpiricalDistribution,
    nu: &EmpiricalDistribution,
    p: f64,
) -> Result<(), OtError> {
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch(mu.dim(), nu.dim()));
    }
    if mu.len() + nu.len() > MAX_TOTAL_POINTS {
        return Err(OtError::TooManyPoints(mu.len() + nu.len()));
    }
    if !(p >= 1.0) {
        return Err(OtError::BadOrder(p));
    }
    Ok(())
}

/// Transportation linear program on the coupling polytope. One marginal
/// constraint is implied by the others; dropping it keeps the basis
/// nondegenerate for the simplex solver.
fn solve_transport_lp(cost: &[Vec<f64>], w: &[f64], v: &[f64]) -> Result<f64, OtError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let (m, n) = (w.len(), v.len());
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<minilp::Variable>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| problem.add_var(cost[i][j], (0.0, 1.0)))
                .collect()
        })
        .collect();
    for (i, &wi) in w.iter().enumerate() {
        let terms: Vec<(minilp::Variable, f64)> = (0..n).map(|j| (vars[i][j], 1.0)).collect();
        problem.add_constraint(&terms, ComparisonOp::Eq, wi);
    }
    for (j, &vj) in v.iter().enumerate().take(n.saturating_sub(1)) {
        let terms: Vec<(minilp::Variable, f64)> = (0..m).map(|i| (vars[i][j], 1.0)).collect();
        problem.add_constraint(&terms, ComparisonOp::Eq, vj);
    }
    let solution = problem.solve().map_err(|e| OtError::Lp(e.to_string()))?;
    Ok(solution.objective())
}

/// Minimum-cost perfect matching value on a square cost matrix via the
/// shortest-augmenting-path Hungarian method with potentials, O(n^3).
fn solve_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
        }
    }
    (1..=n).map(|j| cost[matched[j] - 1][j - 1]).sum()
}

/// Closed-form constants from the lower bound linking the mixture-to-
/// generated distance to the per-class distances and the latent divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremCoefficients {
    pub nu: f64,
    pub gamma: f64,
    /// sqrt(nu / 2); weight of the outlier-class distance.
    pub alpha: f64,
    /// sqrt((1 - nu) / 2); weight of the inlier-class distance.
    pub beta: f64,
    /// gamma * (1 - alpha - beta); weight of the latent divergence. Its sign
    /// is reported, never asserted: alpha + beta reaches 1 exactly at
    /// nu = 0.5 and stays below 1 elsewhere.
    pub delta: f64,
}

pub fn theorem_coefficients(nu: f64, gamma: f64) -> Result<TheoremCoefficients, OtError> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(OtError::BadNu(nu));
    }
    if !(gamma >= 0.0) {
        return Err(OtError::BadGamma(gamma));
    }
    let alpha = (nu / 2.0).sqrt();
    let beta = ((1.0 - nu) / 2.0).sqrt();
    let delta = gamma * (1.0 - alpha - beta);
    Ok(TheoremCoefficients {
        nu,
        gamma,
        alpha,
        beta,
        delta,
    })
}

/// Outcome of checking sqrt(a + b) >= (sqrt(a) + sqrt(b)) / sqrt(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtLemmaCheck {
    pub holds: bool,
    /// sqrt(a + b) - (sqrt(a) + sqrt(b)) / sqrt(2); nonnegative up to
    /// floating-point rounding at the equality case a = b.
    pub slack: f64,
}

pub fn check_sqrt_lemma(a: f64, b: f64) -> Result<SqrtLemmaCheck, OtError> {
    if a < 0.0 {
        return Err(OtError::NegativeInput(a));
    }
    if b < 0.0 {
        return Err(OtError::NegativeInput(b));
    }
    let slack = (a + b).sqrt() - (a.sqrt() + b.sqrt()) / std::f64::consts::SQRT_2;
    Ok(SqrtLemmaCheck {
        holds: slack >= -1e-12,
        slack,
    })
}

/// Two sides of mean(all) = nu * mean(outlier) + (1 - nu) * mean(inlier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    pub mixture_mean: f64,
    pub weighted_mean: f64,
    pub abs_diff: f64,
    pub holds: bool,
}

/// Verifies the mixture decomposition identity on stratified per-sample
/// costs; the label fractions must realize nu exactly.
pub fn mixture_decomposition_check(
    cost_per_sample: &[f64],
    labels: &[Label],
    nu: f64,
) -> Result<DecompositionReport, OtError> {
    if cost_per_sample.len() != labels.len() || labels.is_empty() {
        return Err(OtError::WeightCount {
            points: cost_per_sample.len(),
            weights: labels.len(),
        });
    }
    let n = labels.len();
    let n_out = labels.iter().filter(|l| l.is_outlier()).count();
    if ((nu * n as f64).round() as usize) != n_out || n_out == 0 || n_out == n {
        return Err(OtError::InconsistentFractions {
            nu,
            outliers: n_out,
            n,
        });
    }
    let mean = |pred: &dyn Fn(Label) -> bool| -> f64 {
        let (mut sum, mut count) = (0.0f64, 0usize);
        for (&c, &l) in cost_per_sample.iter().zip(labels) {
            if pred(l) {
                sum += c;
                count += 1;
            }
        }
        sum / count as f64
    };
    let mixture_mean = cost_per_sample.iter().sum::<f64>() / n as f64;
    let nu_exact = n_out as f64 / n as f64;
    let weighted_mean =
        nu_exact * mean(&|l: Label| l.is_outlier()) + (1.0 - nu_exact) * mean(&|l: Label| !l.is_outlier());
    let abs_diff = (mixture_mean - weighted_mean).abs();
    Ok(DecompositionReport {
        mixture_mean,
        weighted_mean,
        abs_diff,
        holds: abs_diff <= 1e-12 * mixture_mean.abs().max(1.0),
    })
}

/// Named empirical surrogates for every term in the lower bound's display.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// (term name, value) in display order; always contains at least the
    /// five display terms lhs / alpha_term / beta_term / delta_term / rhs.
    pub terms: Vec<(String, f64)>,
    pub lhs_surrogate: f64,
    pub rhs: f64,
    /// lhs_surrogate - rhs. Informational: the fixed encoder makes the lhs
    /// an upper bound of the true infimum, so no direction is asserted.
    pub gap: f64,
    pub coefficients: TheoremCoefficients,
    /// Empirical Lipschitz estimate used for gamma (max output/input
    /// distance ratio over decoder pairs), unless one was supplied.
    pub gamma_estimate: f64,
}

/// Evaluates empirical surrogates of every term in the bound on a small
/// stratified sample, with fixed encoder and decoders supplied as closures
/// over single feature vectors.
#[allow(clippy::too_many_arguments)]
pub fn bound_smoke_check(
    encode: &dyn Fn(&[f64]) -> Vec<f64>,
    decode_inlier: &dyn Fn(&[f64]) -> Vec<f64>,
    decode_outlier: &dyn Fn(&[f64]) -> Vec<f64>,
    samples: &[(Vec<f64>, Label)],
    nu: f64,
    gamma_estimate: Option<f64>,
    prior_seed: u64,
) -> Result<BoundReport, OtError> {
    if samples.is_empty() {
        return Err(OtError::Empty);
    }
    if samples.len() > 100 {
        return Err(OtError::TooManyPoints(samples.len()));
    }

    let latents: Vec<Vec<f64>> = samples.iter().map(|(x, _)| encode(x)).collect();
    let d_z = latents[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(prior_seed);
    let prior: Vec<Vec<f64>> = (0..samples.len())
        .map(|_| (0..d_z).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    let gen_out: Vec<Vec<f64>> = prior.iter().map(|z| decode_outlier(z)).collect();
    let gen_in: Vec<Vec<f64>> = prior.iter().map(|z| decode_inlier(z)).collect();

    // Empirical Lipschitz ratio over both decoders on the latent sample.
    let gamma = match gamma_estimate {
        Some(g) => {
            if !(g >= 0.0) {
                return Err(OtError::BadGamma(g));
            }
            g
        }
        None => {
            let mut ratio = 0.0f64;
            let zs: Vec<&Vec<f64>> = latents.iter().chain(prior.iter()).collect();
            for i in 0..zs.len() {
                for j in (i + 1)..zs.len() {
                    let dz = euclidean(zs[i], zs[j]);
                    if dz <= 1e-12 {
                        continue;
                    }
                    let do_ = euclidean(&decode_outlier(zs[i]), &decode_outlier(zs[j]));
                    let di = euclidean(&decode_inlier(zs[i]), &decode_inlier(zs[j]));
                    ratio = ratio.max(do_ / dz).max(di / dz);
                }
            }
            ratio
        }
    };
    let coeff = theorem_coefficients(nu, gamma)?;

    let inliers: Vec<Vec<f64>> = samples
        .iter()
        .filter(|(_, l)| !l.is_outlier())
        .map(|(x, _)| x.clone())
        .collect();
    let outliers: Vec<Vec<f64>> = samples
        .iter()
        .filter(|(_, l)| l.is_outlier())
        .map(|(x, _)| x.clone())
        .collect();
    if inliers.is_empty() || outliers.is_empty() {
        return Err(OtError::InconsistentFractions {
            nu,
            outliers: outliers.len(),
            n: samples.len(),
        });
    }

    let recon_sq = samples
        .iter()
        .map(|(x, _)| {
            let xhat = decode_outlier(&encode(x));
            x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum::<f64>()
        / samples.len() as f64;
    let lhs_recon = recon_sq.sqrt();

    let w2 = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Result<f64, OtError> {
        exact_wasserstein(
            &EmpiricalDistribution::uniform(a.to_vec())?,
            &EmpiricalDistribution::uniform(b.to_vec())?,
            2.0,
        )
    };
    let w2_latent = w2(&latents, &prior)?;
    let w2_out = w2(&outliers, &gen_out)?;
    let w2_in = w2(&inliers, &gen_in)?;

    let lhs_surrogate = lhs_recon + gamma * w2_latent;
    let alpha_term = coeff.alpha * w2_out;
    let beta_term = coeff.beta * w2_in;
    let delta_term = coeff.delta * w2_latent;
    let rhs = alpha_term + beta_term + delta_term;

    let terms = vec![
        ("lhs".to_string(), lhs_surrogate),
        ("alpha_term".to_string(), alpha_term),
        ("beta_term".to_string(), beta_term),
        ("delta_term".to_string(), delta_term),
        ("rhs".to_string(), rhs),
        ("lhs_reconstruction".to_string(), lhs_recon),
        ("lhs_latent_divergence".to_string(), gamma * w2_latent),
        ("w2_outlier_class".to_string(), w2_out),
        ("w2_inlier_class".to_string(), w2_in),
        ("w2_latent_prior".to_string(), w2_latent),
    ];
    Ok(BoundReport {
        terms,
        lhs_surrogate,
        rhs,
        gap: lhs_surrogate - rhs,
        coefficients: coeff,
        gamma_estimate: gamma,
    })
}
