//! Convex polygons in H-representation, discrete measures on the unit circle
//! and the predicates the inverse solvers validate against.

mod measure;
mod metrics;
mod polytope;
mod predicates;

pub use measure::{Atom, DiscreteMeasure};
pub use metrics::{body_metrics, inradius, BodyMetrics};
pub use polytope::{convex_hull, Polytope2, AREA_TOL, FACET_TOL};
pub use predicates::{
    general_position_check, hausdorff_distance, hemisphere_check, hemisphere_mass,
    min_pair_determinant, HemisphereReport, GENERAL_POSITION_TOL, HEMISPHERE_GRID,
};

use crate::{Result, Vec2};

/// `Polytope2::from_halfspaces` as a free function.
pub fn polytope_from_halfspaces(normals: &[Vec2], offsets: &[f64]) -> Result<Polytope2> {
    Polytope2::from_halfspaces(normals, offsets)
}

/// `h_P(v)`.
pub fn support_function(p: &Polytope2, v: Vec2) -> f64 {
    p.support_function(v)
}

/// Random convex polygon with `vertices` corners near an ellipse of radius
/// about 1, redrawn until `inradius / diameter ≥ min_fatness`. The corners
/// sit at jittered equispaced angles, so no facet is vanishingly short.
pub fn random_convex_polygon<R: rand::Rng + ?Sized>(rng: &mut R, vertices: usize, min_fatness: f64) -> Polytope2 {
    assert!(vertices >= 3 && min_fatness < 0.5);
    loop {
        let aspect = rng.gen_range(0.6..=1.0);
        let turn = rng.gen_range(0.0..std::f64::consts::PI);
        let gap = 2.0 * std::f64::consts::PI / vertices as f64;
        let pts: Vec<Vec2> = (0..vertices)
            .map(|i| {
                let t = gap * (i as f64 + rng.gen_range(-0.35..0.35));
                let r = rng.gen_range(0.7..=1.0);
                let (x, y) = (r * t.cos(), aspect * r * t.sin());
                Vec2::new(x * turn.cos() - y * turn.sin(), x * turn.sin() + y * turn.cos())
            })
            .collect();
        if let Ok(p) = Polytope2::from_vertices(&pts) {
            if p.len() >= 3 && inradius(&p) >= min_fatness * p.diameter() {
                return p;
            }
        }
    }
}
