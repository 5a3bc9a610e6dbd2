use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, Polytope2};
use crate::norms::golden_max;
use crate::{cross, Vec2};

/// Angular grid for the hemisphere scan.
pub const HEMISPHERE_GRID: usize = 8192;

/// Default pairwise determinant threshold for general position.
pub const GENERAL_POSITION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HemisphereReport {
    pub concentrated: bool,
    /// Minimizer of `m(v)` when the measure is concentrated.
    pub witness: Option<[f64; 2]>,
    /// `min_v Σ α_k (v·u_k)_+`.
    pub margin: f64,
}

/// `m(v) = Σ α_k (v·u_k)_+`.
pub fn hemisphere_mass(mu: &DiscreteMeasure, v: Vec2) -> f64 {
    mu.atoms().iter().map(|a| a.weight * v.dot(&a.dir).max(0.0)).sum()
}

/// Minimizes `m(v)` over the unit circle.
///
/// `m` is concave between its kinks at `φ_k ± π/2`, so the kinks are
/// evaluated exactly; a refined grid scan guards the remaining pieces.
pub fn hemisphere_check(mu: &DiscreteMeasure) -> HemisphereReport {
    let m = |t: f64| hemisphere_mass(mu, Vec2::new(t.cos(), t.sin()));
    let step = 2.0 * PI / HEMISPHERE_GRID as f64;
    let mut best_t = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..HEMISPHERE_GRID {
        let t = i as f64 * step;
        let v = m(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let refined = -golden_max(&|t| -m(t), best_t - step, best_t + step, 1e-12);
    if refined < best {
        best = refined;
    }
    for a in mu.atoms() {
        let phi = a.dir.y.atan2(a.dir.x);
        for t in [phi + PI / 2.0, phi - PI / 2.0] {
            let v = m(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
    }
    let margin = best.max(0.0);
    let concentrated = margin <= 1e-12 * mu.total();
    HemisphereReport {
        concentrated,
        witness: concentrated.then(|| [best_t.cos(), best_t.sin()]),
        margin,
    }
}

/// `min_{i<j} |det(u_i, u_j)|`; infinite for fewer than two directions.
pub fn min_pair_determinant(dirs: &[Vec2]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..dirs.len() {
        for j in 0..i {
            d = d.min(cross(dirs[i], dirs[j]).abs());
        }
    }
    d
}

/// Every pair of directions is linearly independent beyond `tol`.
pub fn general_position_check(dirs: &[Vec2], tol: f64) -> bool {
    min_pair_determinant(dirs) > tol
}

/// Exact Hausdorff distance between convex polygons.
pub fn hausdorff_distance(p: &Polytope2, q: &Polytope2) -> f64 {
    let one_way = |a: &Polytope2, b: &Polytope2| {
        a.vertices()
            .iter()
            .map(|&v| b.distance_to(v))
            .fold(0.0, f64::max)
    };
    one_way(p, q).max(one_way(q, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square_measure(w: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_parts(
            &[Vec2::x(), Vec2::y(), -Vec2::x(), -Vec2::y()],
            &[w; 4],
        )
        .unwrap()
    }

    #[test]
    fn antipodal_pair_is_concentrated() {
        let m = DiscreteMeasure::from_parts(&[Vec2::x(), -Vec2::x()], &[1.0, 1.0]).unwrap();
        let r = hemisphere_check(&m);
        assert!(r.concentrated);
        assert!(r.margin.abs() < 1e-12);
        let w = r.witness.unwrap();
        assert!(w[0].abs() < 1e-9 && (w[1].abs() - 1.0).abs() < 1e-9);
    }

    /// Oracle: brute-force minimum over 10^5 grid directions.
    #[test]
    fn square_margin_matches_brute_force() {
        let m = square_measure(1.0);
        let r = hemisphere_check(&m);
        assert!(!r.concentrated && r.witness.is_none());
        let n = 100_000;
        let brute = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                hemisphere_mass(&m, Vec2::new(t.cos(), t.sin()))
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(brute, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.margin, brute, epsilon = 1e-12);
    }

    #[test]
    fn single_atom_is_concentrated() {
        let m = DiscreteMeasure::from_angles(&[0.7], &[2.0]).unwrap();
        assert!(hemisphere_check(&m).concentrated);
    }

    #[test]
    fn margin_is_permutation_invariant_and_linear_in_scale() {
        let angles = [0.1, 1.9, 3.0, 4.4, 5.5];
        let weights = [1.0, 0.4, 2.0, 0.7, 1.1];
        let a = DiscreteMeasure::from_angles(&angles, &weights).unwrap();
        let rev_a: Vec<f64> = angles.iter().rev().copied().collect();
        let rev_w: Vec<f64> = weights.iter().rev().copied().collect();
        let b = DiscreteMeasure::from_angles(&rev_a, &rev_w).unwrap();
        let ma = hemisphere_check(&a).margin;
        assert_relative_eq!(ma, hemisphere_check(&b).margin, max_relative = 1e-14);
        assert_relative_eq!(3.0 * ma, hemisphere_check(&a.scaled(3.0).unwrap()).margin, max_relative = 1e-13);
    }

    #[test]
    fn general_position_examples() {
        let s = 1.0 / 2f64.sqrt();
        assert!(general_position_check(&[Vec2::x(), Vec2::y(), Vec2::new(-s, -s)], GENERAL_POSITION_TOL));
        assert!(!general_position_check(&[Vec2::x(), -Vec2::x(), Vec2::y()], GENERAL_POSITION_TOL));
        assert!(!general_position_check(
            &[Vec2::x(), -Vec2::x(), Vec2::y(), -Vec2::y()],
            GENERAL_POSITION_TOL
        ));
    }

    #[test]
    fn hausdorff_examples() {
        let p = Polytope2::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap();
        let q = Polytope2::rectangle(-2.0, 2.0, -2.0, 2.0).unwrap();
        assert_relative_eq!(hausdorff_distance(&p, &q), 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(hausdorff_distance(&p, &p), 0.0);
        let t = Vec2::new(0.3, -0.4);
        let r = Polytope2::regular(9, 1.0, 0.2).unwrap();
        assert_relative_eq!(hausdorff_distance(&r, &r.translated(t)), 0.5, epsilon = 1e-12);
    }
}
