use std::sync::Arc;

use nalgebra::Matrix2;
use serde_json::{Map, Value};

use super::FinslerNorm;
use crate::{Error, Result, Vec2};

fn param(params: &Map<String, Value>, name: &str) -> Result<Option<f64>> {
    match params.get(name) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::InvalidInput(format!("norm parameter `{name}` must be a number"))),
    }
}

pub(super) fn euclidean_factory(_: &Map<String, Value>) -> Result<Arc<dyn FinslerNorm>> {
    Ok(Arc::new(Euclidean))
}

pub(super) fn lq_factory(params: &Map<String, Value>) -> Result<Arc<dyn FinslerNorm>> {
    let q = param(params, "q")?.ok_or_else(|| Error::InvalidInput("lq norm needs `q`".into()))?;
    Ok(Arc::new(Lq::new(q)?))
}

pub(super) fn smoothed_l1_factory(params: &Map<String, Value>) -> Result<Arc<dyn FinslerNorm>> {
    let eps = param(params, "eps")?.unwrap_or(SmoothedL1::DEFAULT_EPS);
    Ok(Arc::new(SmoothedL1::new(eps)?))
}

/// `|ξ|`.
#[derive(Debug, Clone, Copy)]
pub struct Euclidean;

impl FinslerNorm for Euclidean {
    fn kind(&self) -> &'static str {
        "euclidean"
    }

    fn params(&self) -> Map<String, Value> {
        Map::new()
    }

    fn value(&self, xi: Vec2) -> f64 {
        xi.x.hypot(xi.y)
    }

    fn gradient(&self, xi: Vec2) -> Vec2 {
        xi / self.value(xi)
    }

    fn hessian(&self, xi: Vec2) -> Matrix2<f64> {
        let r = self.value(xi);
        let t = xi / r;
        (Matrix2::identity() - t * t.transpose()) / r
    }

    fn dual_value(&self, x: Vec2) -> f64 {
        self.value(x)
    }
}

/// `(|ξ_1|^q + |ξ_2|^q)^{1/q}`, `q > 1`.
#[derive(Debug, Clone, Copy)]
pub struct Lq {
    q: f64,
}

impl Lq {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::InvalidInput(format!("lq norm needs q > 1, got {q}")));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    fn pnorm(v: Vec2, q: f64) -> f64 {
        let m = v.x.abs().max(v.y.abs());
        if m == 0.0 {
            return 0.0;
        }
        m * ((v.x / m).abs().powf(q) + (v.y / m).abs().powf(q)).powf(1.0 / q)
    }
}

impl FinslerNorm for Lq {
    fn kind(&self) -> &'static str {
        "lq"
    }

    fn params(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("q".into(), Value::from(self.q));
        m
    }

    fn value(&self, xi: Vec2) -> f64 {
        Self::pnorm(xi, self.q)
    }

    fn gradient(&self, xi: Vec2) -> Vec2 {
        let f = self.value(xi);
        xi.map(|c| c.signum() * (c.abs() / f).powf(self.q - 1.0))
    }

    fn hessian(&self, xi: Vec2) -> Matrix2<f64> {
        let f = self.value(xi);
        let g = self.gradient(xi);
        // |ξ_k/F|^{q-2} blows up on the axes when q < 2; clamp so the matrix stays finite.
        let d = xi.map(|c| (c.abs() / f).max(1e-12).powf(self.q - 2.0));
        (Matrix2::from_diagonal(&d) - g * g.transpose()) * ((self.q - 1.0) / f)
    }

    fn dual_value(&self, x: Vec2) -> f64 {
        Self::pnorm(x, self.q / (self.q - 1.0))
    }
}

/// `Σ_k sqrt(ξ_k² + ε²|ξ|²/2)`: a `C²` surrogate for the `ℓ1` norm whose square
/// is strictly convex. Each summand is an elliptic norm.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedL1 {
    eps: f64,
}

impl SmoothedL1 {
    pub const DEFAULT_EPS: f64 = 0.05;

    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput(format!("smoothed_l1 needs eps > 0, got {eps}")));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn shift(&self) -> f64 {
        self.eps * self.eps / 2.0
    }

    /// `A_k = e_k e_kᵀ + (ε²/2) I`.
    fn form(&self, k: usize) -> Matrix2<f64> {
        let mut a = Matrix2::identity() * self.shift();
        a[(k, k)] += 1.0;
        a
    }
}

impl FinslerNorm for SmoothedL1 {
    fn kind(&self) -> &'static str {
        "smoothed_l1"
    }

    fn params(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("eps".into(), Value::from(self.eps));
        m
    }

    fn value(&self, xi: Vec2) -> f64 {
        let c = self.shift() * xi.norm_squared();
        (xi.x * xi.x + c).sqrt() + (xi.y * xi.y + c).sqrt()
    }

    fn gradient(&self, xi: Vec2) -> Vec2 {
        (0..2)
            .map(|k| {
                let ax = self.form(k) * xi;
                ax / xi.dot(&ax).sqrt()
            })
            .sum()
    }

    fn hessian(&self, xi: Vec2) -> Matrix2<f64> {
        (0..2)
            .map(|k| {
                let a = self.form(k);
                let ax = a * xi;
                let f = xi.dot(&ax).sqrt();
                a / f - ax * ax.transpose() / (f * f * f)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kinds() -> Vec<Box<dyn FinslerNorm>> {
        vec![
            Box::new(Euclidean),
            Box::new(Lq::new(4.0).unwrap()),
            Box::new(Lq::new(2.5).unwrap()),
            Box::new(SmoothedL1::new(0.05).unwrap()),
        ]
    }

    fn random_vectors(n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .filter(|v: &Vec2| v.norm() > 1e-3)
            .collect()
    }

    #[test]
    fn homogeneity_of_every_kind() {
        for f in kinds() {
            for xi in random_vectors(1000, 1) {
                for t in [-2.0, -0.5, 3.0] {
                    let err = (f.value(xi * t) - f64::abs(t) * f.value(xi)).abs();
                    assert!(err <= 1e-12 * f.value(xi), "{} {err}", f.kind());
                }
            }
        }
    }

    #[test]
    fn euler_identity() {
        for f in kinds() {
            for xi in random_vectors(1000, 2) {
                let lhs = f.gradient(xi).dot(&xi);
                assert!((lhs - f.value(xi)).abs() <= 1e-10 * f.value(xi), "{}", f.kind());
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        for f in kinds() {
            for xi in random_vectors(200, 3) {
                let g = f.gradient(xi);
                for k in 0..2 {
                    let mut e = Vec2::zeros();
                    e[k] = h;
                    let fd = (f.value(xi + e) - f.value(xi - e)) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-5 * g.norm(), "{} {fd} {}", f.kind(), g[k]);
                }
            }
        }
    }

    #[test]
    fn hessian_matches_differences_of_gradient() {
        let h = 1e-6;
        for f in kinds() {
            for xi in random_vectors(100, 4) {
                let hess = f.hessian(xi);
                for k in 0..2 {
                    let mut e = Vec2::zeros();
                    e[k] = h;
                    let fd = (f.gradient(xi + e) - f.gradient(xi - e)) / (2.0 * h);
                    let col = hess.column(k).into_owned();
                    assert!((fd - col).norm() <= 1e-5 * hess.norm().max(1.0), "{}", f.kind());
                }
                // 1-homogeneity: ∇²F(ξ) ξ = 0.
                assert!((hess * xi).norm() <= 1e-10 * hess.norm() * xi.norm());
            }
        }
    }

    #[test]
    fn duality_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in kinds() {
            for _ in 0..2500 {
                let x = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let xi = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                assert!(x.dot(&xi) <= f.dual_value(x) * f.value(xi) * (1.0 + 1e-9) + 1e-15);
            }
        }
    }
}
