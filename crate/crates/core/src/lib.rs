//! Anisotropic p-torsional rigidity of convex polygons.
//!
//! The forward problem solves the Finsler p-Laplacian Dirichlet problem
//! `div(F^{p-1}(∇u) ∇F(∇u)) = -1` on a convex polygon by minimizing the convex
//! energy `∫ F^p(∇v)/p - v` over piecewise-linear fields. From the solution we
//! read off the torsional rigidity `τ = ∫ u` and the boundary measures
//! `S_{F,p}` (torsional measure) and `τ^log` (cone torsional measure).
//!
//! The inverse problems reconstruct a polygon from a prescribed discrete
//! measure on the unit circle:
//! - [`minkowski::solve_minkowski`] finds `K` with `S_{F,p}(K, ·) = μ`;
//! - [`logmink::solve_log_minkowski`] finds `P ∋ o` with `τ^log(P, ·) = μ`.
//!
//! Norm kinds and energy minimizers are trait objects selected by name; see
//! [`norms::NormRegistry`] and [`fem::MinimizerRegistry`].

pub mod error;
pub mod fem;
pub mod geometry;
pub mod json;
pub mod logmink;
pub mod minkowski;
pub mod norms;
mod shape_opt;
pub mod torsion;

pub use error::{Error, ErrorReport, PartialResult, Result};
pub use fem::{Mesh, SolverConfig, TorsionSolution};
pub use geometry::{DiscreteMeasure, Polytope2};
pub use norms::AnisotropicNorm;
pub use torsion::TorsionReport;

/// Points and vectors in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Ambient dimension of every solver in this crate.
pub const DIM: f64 = 2.0;

/// `(p-1)/(n(p-1)+p)`: the exponent that makes `τ^c` 1-homogeneous, and the
/// constant in front of the boundary formula for `τ`.
pub fn tau_exponent(p: f64) -> f64 {
    (p - 1.0) / (DIM * (p - 1.0) + p)
}

/// Homogeneity degree of `τ` under dilation: `n + p/(p-1)`.
pub fn tau_degree(p: f64) -> f64 {
    DIM + p / (p - 1.0)
}

/// Homogeneity degree of `S_{F,p}` under dilation: `(np-n+1)/(p-1)`.
pub fn measure_degree(p: f64) -> f64 {
    (DIM * p - DIM + 1.0) / (p - 1.0)
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidP(p))
    }
}

pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}
