use serde::{Deserialize, Serialize};

use super::Polytope2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BodyMetrics {
    pub area: f64,
    pub perimeter: f64,
    pub centroid: [f64; 2],
    pub diameter: f64,
    /// Radius of the largest inscribed disk.
    pub inradius: f64,
    /// Largest vertex norm (distance from the origin).
    pub outradius: f64,
}

/// Largest `r` such that `{u_k·x ≤ h_k − r}` is nonempty, by bisection.
pub fn inradius(p: &Polytope2) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.5 * p.diameter());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p.has_depth(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    lo
}

pub fn body_metrics(p: &Polytope2) -> BodyMetrics {
    let c = p.centroid();
    BodyMetrics {
        area: p.area(),
        perimeter: p.perimeter(),
        centroid: [c.x, c.y],
        diameter: p.diameter(),
        inradius: inradius(p),
        outradius: p.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square() {
        let m = body_metrics(&Polytope2::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap());
        assert_relative_eq!(m.area, 4.0, epsilon = 1e-13);
        assert_relative_eq!(m.perimeter, 8.0, epsilon = 1e-13);
        assert!(m.centroid[0].abs() < 1e-15 && m.centroid[1].abs() < 1e-15);
        assert_relative_eq!(m.diameter, 8f64.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(m.inradius, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.outradius, 2f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn triangle() {
        let t = Polytope2::from_vertices(&[Vec2::zeros(), Vec2::x(), Vec2::y()]).unwrap();
        let m = body_metrics(&t);
        assert_relative_eq!(m.area, 0.5, epsilon = 1e-14);
        assert_relative_eq!(m.centroid[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.centroid[1], 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.inradius, 1.0 - 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn homogeneity_under_scaling() {
        let p = Polytope2::regular(5, 1.0, 0.3).unwrap().translated(Vec2::new(0.2, 0.1));
        let (a, b) = (body_metrics(&p), body_metrics(&p.scaled(2.5)));
        assert_relative_eq!(b.area, a.area * 6.25, max_relative = 1e-12);
        for (x, y) in [
            (a.perimeter, b.perimeter),
            (a.diameter, b.diameter),
            (a.inradius, b.inradius),
            (a.outradius, b.outradius),
            (a.centroid[0], b.centroid[0]),
            (a.centroid[1], b.centroid[1]),
        ] {
            assert_relative_eq!(y, 2.5 * x, max_relative = 1e-11);
        }
    }
}
