//! Torsional rigidity, boundary measures and the identity checks built on them.
//!
//! Every boundary quantity comes from one quadrature: the trace of
//! `F^p(∇u)` on each boundary edge times the edge length, summed per facet.
//! With `c = (p-1)/(n(p-1)+p)` and facet offsets `h_k`:
//!
//! - `S_k = Σ_{e ⊂ facet k} F^p(∇u)|e|` (torsional measure);
//! - `τ^log_k = c h_k S_k` (cone measure);
//! - `τ_boundary = Σ_k τ^log_k`.

use serde::{Deserialize, Serialize};

use crate::fem::{recovered_trace, solve_body, solve_torsion_pde_from, Mesh, SolverConfig};
use crate::geometry::Polytope2;
use crate::norms::AnisotropicNorm;
use crate::{check_p, tau_exponent, Error, Result, TorsionSolution, Vec2, DIM};

/// Column order of [`TorsionReport::csv_row`].
pub const CSV_HEADER: &str =
    "area,tau_volume,tau_boundary,tau_energy,pohozaev_residual,centroid_residual,discretization_error_estimate";

/// Everything measured from one converged solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsionReport {
    /// `∫ u`.
    pub tau_volume: f64,
    /// `c Σ_k h_k S_k`.
    pub tau_boundary: f64,
    /// `−p/(p−1) J_h(u)`.
    pub tau_energy: f64,
    pub facet_measure: Vec<f64>,
    pub cone_measure: Vec<f64>,
    pub pohozaev_residual: f64,
    /// `Σ S_k u_k / Σ S_k`.
    pub centroid_residual: [f64; 2],
    /// Largest pairwise relative gap among the three `τ` values.
    pub discretization_error_estimate: f64,
    pub p: f64,
    pub n: usize,
}

impl TorsionReport {
    pub fn new(sol: &TorsionSolution, body: &Polytope2) -> Result<Self> {
        let s = facet_measure(sol, body)?;
        let c = tau_exponent(sol.p);
        let cone: Vec<f64> = s.iter().zip(body.offsets()).map(|(s, h)| c * h * s).collect();
        let tau_volume = torsion_volume(sol);
        let tau_boundary = cone.iter().sum();
        let tau_energy = -sol.p / (sol.p - 1.0) * sol.energy;
        let total: f64 = s.iter().sum();
        let centroid = if total > 0.0 {
            s.iter().zip(body.normals()).map(|(s, u)| u * *s).sum::<Vec2>() / total
        } else {
            Vec2::zeros()
        };
        let taus = [tau_volume, tau_boundary, tau_energy];
        let mut spread: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                spread = spread.max(relative_gap(taus[i], taus[j]));
            }
        }
        Ok(Self {
            tau_volume,
            tau_boundary,
            tau_energy,
            facet_measure: s,
            cone_measure: cone,
            pohozaev_residual: pohozaev_from(sol.p, tau_volume, tau_boundary),
            centroid_residual: [centroid.x, centroid.y],
            discretization_error_estimate: spread,
            p: sol.p,
            n: DIM as usize,
        })
    }

    /// Norm of [`TorsionReport::centroid_residual`].
    pub fn centroid_norm(&self) -> f64 {
        self.centroid_residual[0].hypot(self.centroid_residual[1])
    }

    /// One CSV line in [`CSV_HEADER`] order.
    pub fn csv_row(&self, area: f64) -> String {
        [
            area,
            self.tau_volume,
            self.tau_boundary,
            self.tau_energy,
            self.pohozaev_residual,
            self.centroid_norm(),
            self.discretization_error_estimate,
        ]
        .iter()
        .map(|v| crate::json::fixed17(*v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn pohozaev_from(p: f64, tau_volume: f64, tau_boundary: f64) -> f64 {
    // (n(p−1)+p)∫u against (p−1)Σ h_k S_k, i.e. τ_volume against τ_boundary.
    let lhs = tau_volume / tau_exponent(p);
    let rhs = tau_boundary / tau_exponent(p);
    (lhs - rhs).abs() / lhs.abs()
}

fn check_facets(sol: &TorsionSolution, body: &Polytope2) -> Result<()> {
    if sol.mesh.facet_count() != body.len() {
        return Err(Error::DirectionMismatch);
    }
    Ok(())
}

/// Solves on `body` and builds its report.
pub fn report_body(
    body: &Polytope2,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<(TorsionSolution, TorsionReport)> {
    let sol = solve_body(body, norm, p, cfg)?;
    let report = TorsionReport::new(&sol, body)?;
    Ok((sol, report))
}

/// `Σ_T |T| · mean of u on T`.
pub fn torsion_volume(sol: &TorsionSolution) -> f64 {
    let mesh = &sol.mesh;
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let mean = tri.iter().map(|&i| sol.nodal_values[i]).sum::<f64>() / 3.0;
            mesh.triangle_area(t) * mean
        })
        .sum()
}

/// `c Σ_k h_k S_k`.
pub fn torsion_boundary(sol: &TorsionSolution, body: &Polytope2) -> Result<f64> {
    let c = tau_exponent(sol.p);
    Ok(facet_measure(sol, body)?
        .iter()
        .zip(body.offsets())
        .map(|(s, h)| c * h * s)
        .sum())
}

/// `S_k`, one entry per facet of `body`.
pub fn facet_measure(sol: &TorsionSolution, body: &Polytope2) -> Result<Vec<f64>> {
    check_facets(sol, body)?;
    let mut s = vec![0.0; body.len()];
    for e in recovered_trace(sol) {
        s[e.facet] += e.value * e.length;
    }
    Ok(s)
}

/// `τ^log_k = c h_k S_k`; the origin must be interior to `body`.
pub fn cone_measure(sol: &TorsionSolution, body: &Polytope2) -> Result<Vec<f64>> {
    let min_offset = body.offsets().iter().copied().fold(f64::INFINITY, f64::min);
    if min_offset <= 0.0 {
        return Err(Error::OriginNotInterior { min_offset });
    }
    let c = tau_exponent(sol.p);
    Ok(facet_measure(sol, body)?
        .iter()
        .zip(body.offsets())
        .map(|(s, h)| c * h * s)
        .collect())
}

/// `|(n(p−1)+p)∫u − (p−1)Σ_k h_k S_k| / ((n(p−1)+p)∫u)`.
pub fn pohozaev_residual(sol: &TorsionSolution, body: &Polytope2) -> Result<f64> {
    Ok(pohozaev_from(sol.p, torsion_volume(sol), torsion_boundary(sol, body)?))
}

/// Central difference of `τ` against the first-variation formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalCheck {
    pub fd_derivative: f64,
    pub formula_value: f64,
    pub rel_gap: f64,
}

/// Absolute floor under the denominator of `rel_gap`.
const GAP_FLOOR: f64 = 1e-14;

impl VariationalCheck {
    fn new(fd_derivative: f64, formula_value: f64) -> Self {
        Self {
            fd_derivative,
            formula_value,
            rel_gap: (fd_derivative - formula_value).abs() / formula_value.abs().max(GAP_FLOOR),
        }
    }
}

/// `τ_energy` on `body` using `base`'s mesh carried over to it.
fn perturbed_tau(
    base: &TorsionSolution,
    body: &Polytope2,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mesh: Mesh = base.mesh.transport(body)?;
    let sol = solve_torsion_pde_from(&mesh, body, &base.norm, base.p, cfg, Some(&base.nodal_values))?;
    Ok(-sol.p / (sol.p - 1.0) * sol.energy)
}

fn central_difference(
    base: &TorsionSolution,
    body: &Polytope2,
    offsets: impl Fn(f64) -> Vec<f64>,
    step: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let plus = body.with_offsets(&offsets(step))?;
    let minus = body.with_offsets(&offsets(-step))?;
    let tp = perturbed_tau(base, &plus, cfg)?;
    let tm = perturbed_tau(base, &minus, cfg)?;
    Ok((tp - tm) / (2.0 * step))
}

fn check_perturbation(body: &Polytope2, f: &[f64], step: f64) -> Result<()> {
    if f.len() != body.len() {
        return Err(Error::InvalidInput(format!(
            "{} perturbation values for {} facets",
            f.len(),
            body.len()
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    Ok(())
}

/// `d/dt τ(h + t f)` at `t = 0` against `Σ_k f_k S_k`.
pub fn variational_derivative_check(
    body: &Polytope2,
    f: &[f64],
    step: f64,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<VariationalCheck> {
    check_p(p)?;
    check_perturbation(body, f, step)?;
    let base = solve_body(body, norm, p, cfg)?;
    let s = facet_measure(&base, body)?;
    let formula: f64 = f.iter().zip(&s).map(|(f, s)| f * s).sum();
    let h = body.offsets();
    let fd = central_difference(
        &base,
        body,
        |t| h.iter().zip(f).map(|(h, f)| h + t * f).collect(),
        step,
        cfg,
    )?;
    Ok(VariationalCheck::new(fd, formula))
}

/// `d/dt τ(h e^{t f})` at `t = 0` against `((n(p−1)+p)/(p−1)) Σ_k f_k τ^log_k`.
pub fn log_variational_check(
    body: &Polytope2,
    f: &[f64],
    step: f64,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<VariationalCheck> {
    check_p(p)?;
    check_perturbation(body, f, step)?;
    let base = solve_body(body, norm, p, cfg)?;
    let cone = cone_measure(&base, body)?;
    let formula: f64 = f.iter().zip(&cone).map(|(f, c)| f * c).sum::<f64>() / tau_exponent(p);
    let h = body.offsets();
    let fd = central_difference(
        &base,
        body,
        |t| h.iter().zip(f).map(|(h, f)| h * (t * f).exp()).collect(),
        step,
        cfg,
    )?;
    Ok(VariationalCheck::new(fd, formula))
}

/// Upper bound on `τ` in terms of the area and the Wulff-shape area `κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaintVenant {
    pub bound: f64,
    pub satisfied: bool,
    /// `bound / τ`.
    pub slack: f64,
}

/// `τ ≤ c n^{−1/(p−1)} κ^{−p/(n(p−1))} |K|^{(n(p−1)+p)/(n(p−1))}`.
pub fn saint_venant_bound(area: f64, kappa: f64, p: f64) -> f64 {
    let n = DIM;
    tau_exponent(p)
        * n.powf(-1.0 / (p - 1.0))
        * kappa.powf(-p / (n * (p - 1.0)))
        * area.powf((n * (p - 1.0) + p) / (n * (p - 1.0)))
}

pub fn saint_venant_check(body: &Polytope2, norm: &AnisotropicNorm, p: f64, tau: f64) -> Result<SaintVenant> {
    check_p(p)?;
    let bound = saint_venant_bound(body.area(), norm.wulff_area(), p);
    Ok(SaintVenant {
        bound,
        satisfied: tau <= bound,
        slack: bound / tau,
    })
}

/// `τ` of the unit square for `p = 2`, Euclidean, from the double sine series
/// of `Δu = −1` (odd terms below 400, truncation error below 1e−9).
pub fn reference_square_tau() -> f64 {
    let mut s = 0.0;
    for m in (1..400).step_by(2) {
        for k in (1..400).step_by(2) {
            let (m, k) = (m as f64, k as f64);
            s += 1.0 / (m * m * k * k * (m * m + k * k));
        }
    }
    64.0 / std::f64::consts::PI.powi(6) * s
}

/// Radial solution on the Euclidean disk of radius `r`:
/// `u(ρ) = ((p−1)/p) 2^{−1/(p−1)} (r^q − ρ^q)`, `q = p/(p−1)`.
/// Returns `(u(0), τ)`.
pub fn reference_disk(p: f64, r: f64) -> (f64, f64) {
    let q = p / (p - 1.0);
    let a = (p - 1.0) / p * 2f64.powf(-1.0 / (p - 1.0));
    let tau = 2.0 * std::f64::consts::PI * a * r.powf(q + 2.0) * (0.5 - 1.0 / (q + 2.0));
    (a * r.powf(q), tau)
}
