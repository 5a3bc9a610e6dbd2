//! The Minkowski problem for the torsional measure: given `μ = Σ α_k δ_{u_k}`
//! with zero centroid and not concentrated on a closed hemisphere, find a
//! polygon `K` with normals `u_k` and `S_{F,p}(K, ·) = μ`.
//!
//! `K` minimizes `Ψ(K) = Σ α_k h_k / τ(K)^c` with `c = (p−1)/(n(p−1)+p)`.
//! At a minimizer with `τ = 1`, `α_k = θ S_k` where `θ = c Σ α_k h_k`, and the
//! dilate `λK` with `λ^{(np−n+1)/(p−1)} = θ` carries exactly `μ`.

use serde::{Deserialize, Serialize};

use crate::error::PartialResult;
use crate::fem::SolverConfig;
use crate::geometry::{hemisphere_check, DiscreteMeasure, Polytope2};
use crate::norms::AnisotropicNorm;
use crate::shape_opt::{descend, Eval, Evaluator, Sample, ShapeObjective};
use crate::torsion::{facet_measure, TorsionReport};
use crate::{check_p, measure_degree, tau_exponent, Error, Result, Vec2};

/// Directions closer than this (`|sin|` of the angle) count as repeated.
const REPEAT_TOL: f64 = 1e-12;

/// Outcome of the necessary-condition checks on a classical input measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalValidation {
    pub ok: bool,
    /// `|Σ α_k u_k| / Σ α_k`.
    pub centroid_norm: f64,
    /// Worst closed-hemisphere mass over `|μ|`; positive when not concentrated.
    pub hemisphere_margin: f64,
}

/// Checks `|Σ α_k u_k| ≤ tol Σ α_k` and that `μ` is not concentrated on a
/// closed hemisphere.
pub fn validate_measure_classical(mu: &DiscreteMeasure, tol: f64) -> Result<ClassicalValidation> {
    if mu.len() < 3 {
        return Err(Error::Precondition(format!(
            "the classical problem needs at least 3 atoms, got {}",
            mu.len()
        )));
    }
    let total = mu.total();
    let centroid_norm = mu.centroid().norm() / total;
    let hemi = hemisphere_check(mu);
    let hemisphere_margin = hemi.margin / total;
    Ok(ClassicalValidation {
        ok: centroid_norm <= tol && !hemi.concentrated,
        centroid_norm,
        hemisphere_margin,
    })
}

/// `Σ α_k h_k / τ^c`, with `h` in atom order.
pub fn objective_psi(h: &[f64], mu: &DiscreteMeasure, tau: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    if h.len() != mu.len() {
        return Err(Error::InvalidInput(format!("{} offsets for {} atoms", h.len(), mu.len())));
    }
    let pairing: f64 = mu.atoms().iter().zip(h).map(|(a, h)| a.weight * h).sum();
    Ok(pairing / tau.powf(tau_exponent(p)))
}

/// Result of [`solve_minkowski`].
#[derive(Clone, Debug, Serialize)]
pub struct MinkowskiRun {
    pub input: DiscreteMeasure,
    /// `λ K₀`, translated so its centroid is the origin.
    pub solution: Polytope2,
    /// `Ψ` after every accepted step.
    pub psi_history: Vec<f64>,
    /// Indices into `psi_history` where the mesh was rebuilt.
    pub remesh_at: Vec<usize>,
    /// `λ`.
    pub final_scale: f64,
    /// `|S_k(solution) − α_k| / α_k`, in atom order.
    pub residual: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn check_distinct(dirs: &[Vec2]) -> Result<()> {
    for i in 0..dirs.len() {
        for j in 0..i {
            if crate::cross(dirs[i], dirs[j]).abs() <= REPEAT_TOL && dirs[i].dot(&dirs[j]) > 0.0 {
                return Err(Error::InvalidInput(format!("atoms {j} and {i} share a direction")));
            }
        }
    }
    Ok(())
}

/// Weights of `mu` reordered to the facets of `body` (built from `mu`'s directions).
pub(crate) fn facet_weights(body: &Polytope2, mu: &DiscreteMeasure) -> Vec<f64> {
    body.source_indices().iter().map(|&i| mu.atoms()[i].weight).collect()
}

/// Values in facet order put back into atom order.
pub(crate) fn to_atom_order(body: &Polytope2, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (f, &i) in body.source_indices().iter().enumerate() {
        out[i] = values[f];
    }
    out
}

/// Wulff shape of `norm` with normals `u_k`: `h_k = F(u_k)`.
pub(crate) fn wulff_start(mu: &DiscreteMeasure, norm: &AnisotropicNorm) -> Result<Polytope2> {
    let dirs = mu.directions();
    let h: Vec<f64> = dirs.iter().map(|&u| norm.value(u)).collect();
    Polytope2::from_halfspaces_strict(&dirs, &h)
}

struct Classical {
    alpha: Vec<f64>,
    c: f64,
}

impl ShapeObjective for Classical {
    /// `Ψ` is taken about the centroid `c` of the body, which makes it
    /// translation invariant even when `μ` has a small nonzero centroid `m`;
    /// the gradient then carries `−m·∂c/∂h_j` with `∂c/∂h_j = L_j (mid_j − c)/|K|`.
    fn eval(&mut self, sample: &Sample) -> Result<Eval> {
        let body = &sample.body;
        let h = body.offsets();
        let u = body.normals();
        let center = body.centroid();
        let pairing: f64 = (0..h.len()).map(|k| self.alpha[k] * (h[k] - u[k].dot(&center))).sum();
        if !(pairing > 0.0) {
            return Err(Error::InvalidInput(format!("nonpositive pairing {pairing:e}")));
        }
        let m: Vec2 = (0..h.len()).map(|k| u[k] * self.alpha[k]).sum();
        let area = body.area();
        let v = body.vertices();
        let n = h.len();
        let theta = self.c * pairing / sample.tau;
        let grad = (0..n)
            .map(|k| {
                let mid = (v[k] + v[(k + 1) % n]) * 0.5;
                let dc = (mid - center) * (body.facet_lengths()[k] / area);
                h[k] * ((self.alpha[k] - m.dot(&dc)) / pairing - self.c * sample.s[k] / sample.tau)
            })
            .collect();
        let residual = self
            .alpha
            .iter()
            .zip(&sample.s)
            .map(|(a, s)| (a - theta * s).abs() / a)
            .fold(0.0, f64::max);
        let psi = pairing / sample.tau.powf(self.c);
        Ok(Eval {
            value: psi.ln(),
            recorded: psi,
            grad,
            residual,
            center,
        })
    }
}

/// Finds `K` with normals `u_k` and `S_{F,p}(K, ·) = μ`.
///
/// The mesh size of each iterate is `cfg.h_max` times its diameter.
pub fn solve_minkowski(
    mu: &DiscreteMeasure,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<MinkowskiRun> {
    check_p(p)?;
    cfg.validate()?;
    let v = validate_measure_classical(mu, cfg.centroid_tol)?;
    if v.centroid_norm > cfg.centroid_tol {
        return Err(Error::CentroidNonzero {
            relative: v.centroid_norm,
        });
    }
    if !v.ok {
        return Err(Error::HemisphereConcentrated {
            margin: v.hemisphere_margin,
        });
    }
    check_distinct(&mu.directions())?;
    let start = wulff_start(mu, norm)?;
    let c = tau_exponent(p);
    let mut obj = Classical {
        alpha: facet_weights(&start, mu),
        c,
    };
    let mut ev = Evaluator::new(norm, p, cfg);
    let run = descend(&mut obj, &mut ev, &start, p, cfg)?;
    let pairing: f64 = obj.alpha.iter().zip(run.sample.body.offsets()).map(|(a, h)| a * h).sum();
    let theta = c * pairing / run.sample.tau;
    let lambda = theta.powf(1.0 / measure_degree(p));
    let solution = run.sample.body.scaled(lambda);
    let solution = solution.translated(-solution.centroid());
    let s_final: Vec<f64> = run.sample.s.iter().map(|s| s * theta).collect();
    let residual: Vec<f64> = to_atom_order(&solution, &s_final)
        .iter()
        .zip(mu.atoms())
        .map(|(s, a)| (s - a.weight).abs() / a.weight)
        .collect();
    let out = MinkowskiRun {
        input: mu.clone(),
        solution,
        psi_history: run.history,
        remesh_at: run.remesh_at,
        final_scale: lambda,
        residual,
        converged: run.converged,
        iterations: run.iterations,
    };
    log::info!(
        "minkowski: {} iterations, stationarity residual {:.3e}, {} meshes",
        out.iterations,
        run.eval.residual,
        ev.remeshes
    );
    if !out.converged {
        return Err(Error::NonConvergence {
            what: "minkowski solve",
            iterations: out.iterations,
            residual: run.eval.residual,
            partial: Some(PartialResult::Minkowski(Box::new(out))),
        });
    }
    Ok(out)
}

/// `|S_k(P) − α_k| / α_k` in atom order; `P` must have one facet per atom
/// direction. The mesh size is `cfg.h_max` times the diameter of `P`.
pub fn measure_residual(
    body: &Polytope2,
    mu: &DiscreteMeasure,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let facets = match_directions(body, mu)?;
    let local = cfg.clone().with_h(cfg.h_max * body.diameter());
    let sol = crate::fem::solve_body(body, norm, p, &local)?;
    let s = facet_measure(&sol, body)?;
    Ok(mu
        .atoms()
        .iter()
        .zip(&facets)
        .map(|(a, &f)| (s[f] - a.weight).abs() / a.weight)
        .collect())
}

/// Facet of `body` with normal `u_k`, for every atom.
pub(crate) fn match_directions(body: &Polytope2, mu: &DiscreteMeasure) -> Result<Vec<usize>> {
    if body.len() != mu.len() {
        return Err(Error::DirectionMismatch);
    }
    mu.atoms()
        .iter()
        .map(|a| {
            body.normals()
                .iter()
                .position(|u| (u - a.dir).norm() <= 1e-9)
                .ok_or(Error::DirectionMismatch)
        })
        .collect()
}

/// Report of the solution's own measure; convenience for callers that want
/// the full set of torsion quantities at the recovered body.
pub fn solution_report(
    run: &MinkowskiRun,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<TorsionReport> {
    let body = &run.solution;
    let local = cfg.clone().with_h(cfg.h_max * body.diameter());
    let sol = crate::fem::solve_body(body, norm, p, &local)?;
    TorsionReport::new(&sol, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn validation_examples() {
        let axes = DiscreteMeasure::equispaced(4, 1.0, 0.0).unwrap();
        let v = validate_measure_classical(&axes, 1e-2).unwrap();
        assert!(v.ok && v.centroid_norm < 1e-15);
        assert_relative_eq!(v.hemisphere_margin, 0.25, max_relative = 1e-9);

        let skew = DiscreteMeasure::from_parts(
            &[Vec2::x(), -Vec2::x(), Vec2::y(), -Vec2::y()],
            &[2.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let v = validate_measure_classical(&skew, 1e-2).unwrap();
        assert!(!v.ok);
        assert_relative_eq!(v.centroid_norm, 0.2, max_relative = 1e-15);

        let tri = DiscreteMeasure::equispaced(3, 1.0, 0.3).unwrap();
        assert!(validate_measure_classical(&tri, 1e-2).unwrap().ok);

        let two = DiscreteMeasure::equispaced(2, 1.0, 0.0).unwrap();
        assert_eq!(validate_measure_classical(&two, 1e-2).unwrap_err().kind(), "precondition");
    }

    #[test]
    fn psi_is_scale_invariant() {
        let mu = DiscreteMeasure::equispaced(4, 0.3, 0.0).unwrap();
        let h = [0.5, 0.7, 0.5, 0.2];
        let tau = 0.0351;
        let p = 2.0;
        let a = objective_psi(&h, &mu, tau, p).unwrap();
        let lambda: f64 = 1.7;
        let hs: Vec<f64> = h.iter().map(|h| h * lambda).collect();
        let b = objective_psi(&hs, &mu, tau * lambda.powf(crate::tau_degree(p)), p).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
        assert_relative_eq!(objective_psi(&h, &mu, 1.0, p).unwrap(), 0.3 * 1.9, max_relative = 1e-15);
        assert_eq!(objective_psi(&h, &mu, 0.0, p).unwrap_err().kind(), "nonpositive_tau");
    }

    #[test]
    fn rejects_invalid_measures() {
        let e = AnisotropicNorm::euclidean();
        let cfg = SolverConfig::default();
        let skew = DiscreteMeasure::from_parts(
            &[Vec2::x(), -Vec2::x(), Vec2::y(), -Vec2::y()],
            &[2.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(solve_minkowski(&skew, &e, 2.0, &cfg).unwrap_err().kind(), "centroid_nonzero");
        let half = DiscreteMeasure::from_angles(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4]).unwrap();
        let err = solve_minkowski(&half, &e, 2.0, &cfg).unwrap_err().kind();
        assert!(err == "centroid_nonzero" || err == "hemisphere_concentrated");
    }
}
