use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torsion_core::fem::{solve_body, SolverConfig};
use torsion_core::geometry::{hausdorff_distance, random_convex_polygon, Polytope2};
use torsion_core::torsion::{report_body, saint_venant_check, torsion_volume};
use torsion_core::{tau_degree, AnisotropicNorm, Vec2};

fn cfg(h: f64) -> SolverConfig {
    SolverConfig::default().with_h(h)
}

fn tau(body: &Polytope2, norm: &AnisotropicNorm, p: f64, h: f64) -> f64 {
    torsion_volume(&solve_body(body, norm, p, &cfg(h)).unwrap())
}

#[test]
fn translation_leaves_tau_unchanged() {
    let body = Polytope2::regular(6, 1.0, 0.3).unwrap();
    let e = AnisotropicNorm::lq(4.0).unwrap();
    let a = tau(&body, &e, 3.0, 0.04);
    let b = tau(&body.translated(Vec2::new(2.5, -1.25)), &e, 3.0, 0.04);
    // The lattice core is not translation covariant, so only up to O(h^2).
    assert!((a - b).abs() / a < 1e-4, "{a} vs {b}");
}

#[test]
fn dilation_scales_by_the_homogeneity_degree() {
    let body = Polytope2::regular(5, 1.0, 0.0).unwrap();
    let e = AnisotropicNorm::euclidean();
    for p in [2.0, 3.0] {
        let a = tau(&body, &e, p, 0.04);
        let b = tau(&body.scaled(1.7), &e, p, 0.04 * 1.7);
        let ratio = (b / a).ln() / 1.7f64.ln();
        assert!((ratio - tau_degree(p)).abs() < 1e-6, "p = {p}: {ratio}");
    }
}

#[test]
fn tau_is_monotone_under_inclusion() {
    let outer = Polytope2::rectangle(-1.0, 1.0, -0.6, 0.6).unwrap();
    let inner = Polytope2::rectangle(-0.9, 0.8, -0.5, 0.55).unwrap();
    let e = AnisotropicNorm::euclidean();
    assert!(tau(&inner, &e, 2.0, 0.03) < tau(&outer, &e, 2.0, 0.03));
}

#[test]
fn tau_is_continuous_in_the_hausdorff_metric() {
    let e = AnisotropicNorm::euclidean();
    let base = Polytope2::regular(6, 1.0, 0.0).unwrap();
    let t0 = tau(&base, &e, 2.0, 0.03);
    let mut last = f64::INFINITY;
    for eps in [0.1, 0.03, 0.01] {
        let h: Vec<f64> = base.offsets().iter().enumerate().map(|(k, h)| h + eps * (k % 2) as f64).collect();
        let near = base.with_offsets(&h).unwrap();
        assert!(hausdorff_distance(&near, &base) <= 2.0 * eps);
        let gap = (tau(&near, &e, 2.0, 0.03) - t0).abs();
        assert!(gap < last, "eps {eps}: {gap}");
        last = gap;
    }
    assert!(last / t0 < 0.05);
}

#[test]
fn three_tau_values_agree_on_random_polygons() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for norm in [AnisotropicNorm::euclidean(), AnisotropicNorm::smoothed_l1(0.05).unwrap()] {
        for _ in 0..2 {
            let body = random_convex_polygon(&mut rng, 6, 0.2);
            for p in [2.0, 3.0] {
                let (sol, rep) = report_body(&body, &norm, p, &cfg(0.04)).unwrap();
                assert!(sol.converged);
                assert!(rep.discretization_error_estimate < 0.03, "{rep:?}");
                assert!(rep.centroid_norm() < 1e-2);
                assert!(saint_venant_check(&body, &norm, p, rep.tau_volume).unwrap().satisfied);
            }
        }
    }
}

#[test]
fn disk_attains_the_saint_venant_bound() {
    let disk = Polytope2::regular(128, 1.0, 0.0).unwrap();
    let e = AnisotropicNorm::euclidean();
    let sv = saint_venant_check(&disk, &e, 2.0, tau(&disk, &e, 2.0, 0.03)).unwrap();
    assert!(sv.satisfied);
    assert!((sv.bound - PI / 8.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_polygons_are_fat_and_consistent(seed in any::<u64>(), n in 3usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_convex_polygon(&mut rng, n, 0.2);
        prop_assert!(body.len() >= 3);
        prop_assert!(body.area() > 0.0);
        let rebuilt = Polytope2::from_halfspaces(body.normals(), body.offsets()).unwrap();
        prop_assert!(hausdorff_distance(&rebuilt, &body) < 1e-9 * body.diameter());
        for v in body.vertices() {
            prop_assert!(body.depth(*v).abs() < 1e-9 * body.diameter());
        }
    }

    #[test]
    fn support_function_is_sublinear(seed in any::<u64>(), a in 0.0..2.0 * PI, b in 0.0..2.0 * PI, s in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_convex_polygon(&mut rng, 7, 0.2);
        let (x, y) = (Vec2::new(a.cos(), a.sin()), Vec2::new(b.cos(), b.sin()));
        let h = |v: Vec2| body.support_function(v);
        prop_assert!(h(x + y) <= h(x) + h(y) + 1e-12);
        prop_assert!((h(x * s) - s * h(x)).abs() < 1e-12 * s.max(1.0) * body.diameter());
    }

    #[test]
    fn hausdorff_is_a_metric_on_translates(seed in any::<u64>(), dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_convex_polygon(&mut rng, 5, 0.2);
        let moved = body.translated(Vec2::new(dx, dy));
        let d = hausdorff_distance(&body, &moved);
        prop_assert!((d - dx.hypot(dy)).abs() < 1e-9);
        prop_assert!((d - hausdorff_distance(&moved, &body)).abs() < 1e-12);
        prop_assert!(hausdorff_distance(&body, &body) < 1e-12);
    }
}

