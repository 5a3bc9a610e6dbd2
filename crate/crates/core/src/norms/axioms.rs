use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{golden_max, AnisotropicNorm};
use crate::{Error, Result, Vec2};

/// Numerical evidence that a norm satisfies the structural assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormAxiomReport {
    /// Largest `|F(tξ) - |t|F(ξ)| / F(ξ)` over samples and `t ∈ {-2, -1/2, 3}`.
    pub homogeneity_max_err: f64,
    /// Number of sampled pairs with `F((ξ+η)/2) > (F(ξ)+F(η))/2`.
    pub convexity_violations: usize,
    /// `min F` on the unit circle.
    pub a_est: f64,
    /// `max F` on the unit circle.
    pub b_est: f64,
    /// Worst (smallest) slack of
    /// `p[F(ξ)+F(η)]^{p-1} F(η-ξ) - |F(η)^p - F(ξ)^p|` over sampled pairs;
    /// non-negative means the Lipschitz estimate holds on every sample.
    pub lipschitz_lemma_max_slack: f64,
}

/// Slack of the estimate `|F(η)^p − F(ξ)^p| ≤ p[F(ξ)+F(η)]^{p−1} F(η−ξ)`.
pub fn lipschitz_slack(norm: &AnisotropicNorm, p: f64, xi: Vec2, eta: Vec2) -> f64 {
    let (fx, fe) = (norm.value(xi), norm.value(eta));
    p * (fx + fe).powf(p - 1.0) * norm.value(eta - xi) - (fe.powf(p) - fx.powf(p)).abs()
}

fn circle_extremes(norm: &AnisotropicNorm) -> (f64, f64) {
    let n = 4096;
    let step = 2.0 * PI / n as f64;
    let f = |t: f64| norm.value(Vec2::new(t.cos(), t.sin()));
    let samples: Vec<f64> = (0..n).map(|i| f(i as f64 * step)).collect();
    let (imin, _) = samples
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let (imax, _) = samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let tmin = imin as f64 * step;
    let tmax = imax as f64 * step;
    let a = -golden_max(&|t| -f(t), tmin - step, tmin + step, 1e-12);
    let b = golden_max(&f, tmax - step, tmax + step, 1e-12);
    (a, b)
}

/// Samples the norm axioms, the bounds `a|ξ| ≤ F(ξ) ≤ b|ξ|` and the
/// Lipschitz-type estimate for `F^p`.
pub fn check_norm_axioms(
    norm: &AnisotropicNorm,
    p: f64,
    sample_count: usize,
    seed: u64,
) -> Result<NormAxiomReport> {
    crate::check_p(p)?;
    if sample_count < 100 {
        return Err(Error::Precondition(format!(
            "check_norm_axioms needs at least 100 samples, got {sample_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));

    let mut homogeneity_max_err: f64 = 0.0;
    let mut convexity_violations = 0;
    let mut slack = f64::INFINITY;
    for _ in 0..sample_count {
        let xi = draw();
        let eta = draw();
        let fx = norm.value(xi);
        if fx > 0.0 {
            for t in [-2.0, -0.5, 3.0] {
                let err = (norm.value(xi * t) - f64::abs(t) * fx).abs() / fx;
                homogeneity_max_err = homogeneity_max_err.max(err);
            }
        }
        let fe = norm.value(eta);
        if norm.value((xi + eta) * 0.5) > 0.5 * (fx + fe) * (1.0 + 1e-12) {
            convexity_violations += 1;
        }
        slack = slack.min(lipschitz_slack(norm, p, xi, eta));
    }
    let (a_est, b_est) = circle_extremes(norm);
    Ok(NormAxiomReport {
        homogeneity_max_err,
        convexity_violations,
        a_est,
        b_est,
        lipschitz_lemma_max_slack: slack,
    })
}
