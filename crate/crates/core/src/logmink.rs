//! The log-Minkowski problem for the cone torsional measure: given
//! `μ = Σ α_k δ_{u_k}` in general position and not concentrated on a closed
//! hemisphere, find `P ∋ o` with normals `u_k` and `τ^log(P, ·) = μ`.
//!
//! For a polygon `P` the inner functional `Ψ_{μ,P}(η) = Σ α_k log(h_k − η·u_k)`
//! is strictly concave on `Int P` with a unique maximizer `η(P)`. The outer
//! problem minimizes `Ψ_{μ,P}(η(P))` over offsets with `τ(P) = 1`; at a
//! solution recentered so that `η(P) = o`,
//! `α_k = (Σ α_i) c h_k S_k`, and the dilate by `(Σ α_i)^c` carries `μ`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::PartialResult;
use crate::fem::SolverConfig;
use crate::geometry::{
    hausdorff_distance, hemisphere_check, min_pair_determinant, Atom, DiscreteMeasure, Polytope2,
};
use crate::minkowski::{check_distinct, facet_weights, wulff_start};
use crate::norms::AnisotropicNorm;
use crate::shape_opt::{descend, Eval, Evaluator, Sample, ShapeObjective};
use crate::{check_p, tau_exponent, Error, Result, Vec2};

const INNER_MAX_ITERS: usize = 100;

/// Relative gradient tolerance of the inner maximizer.
const INNER_TOL: f64 = 1e-12;

/// Unique maximizer of `η ↦ Σ α_k log(h_k − η·u_k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerMax {
    pub eta: Vec2,
    pub value: f64,
    /// `|∇Ψ(η)|`.
    pub grad_norm: f64,
    /// `∇²Ψ(η) = −Σ α_k u_k u_kᵀ / (h_k − η·u_k)²`.
    pub hessian: Matrix2<f64>,
    pub iterations: usize,
}

fn log_objective(h: &[f64], dirs: &[Vec2], w: &[f64], eta: Vec2) -> Option<f64> {
    let mut v = 0.0;
    for k in 0..h.len() {
        let d = h[k] - eta.dot(&dirs[k]);
        if !(d > 0.0) {
            return None;
        }
        v += w[k] * d.ln();
    }
    Some(v)
}

fn log_derivatives(h: &[f64], dirs: &[Vec2], w: &[f64], eta: Vec2) -> (Vec2, Matrix2<f64>) {
    let mut g = Vec2::zeros();
    let mut hess = Matrix2::zeros();
    for k in 0..h.len() {
        let d = h[k] - eta.dot(&dirs[k]);
        g -= dirs[k] * (w[k] / d);
        hess -= dirs[k] * dirs[k].transpose() * (w[k] / (d * d));
    }
    (g, hess)
}

/// Damped Newton ascent from `start`, which must satisfy `h_k > start·u_k`.
/// `scale` is a length (the body diameter) used to make the stopping test
/// dimensionless.
pub(crate) fn maximize_inner(
    h: &[f64],
    dirs: &[Vec2],
    w: &[f64],
    start: Vec2,
    scale: f64,
) -> Result<InnerMax> {
    let total: f64 = w.iter().sum();
    let mut eta = start;
    let mut value = log_objective(h, dirs, w, eta)
        .ok_or_else(|| Error::Divergence("start point is not interior".into()))?;
    for it in 0..=INNER_MAX_ITERS {
        let (g, hess) = log_derivatives(h, dirs, w, eta);
        if g.norm() * scale <= INNER_TOL * total {
            return Ok(InnerMax {
                eta,
                value,
                grad_norm: g.norm(),
                hessian: hess,
                iterations: it,
            });
        }
        // Newton direction when it ascends, steepest ascent otherwise.
        let step = match hess.try_inverse().map(|inv| -(inv * g)) {
            Some(s) if g.dot(&s) > 0.0 => s,
            _ => g * (scale / g.norm()),
        };
        let slope = g.dot(&step);
        // Stay a fixed fraction away from every facet.
        let mut t: f64 = 1.0;
        for (k, u) in dirs.iter().enumerate() {
            let rate = u.dot(&step);
            if rate > 0.0 {
                t = t.min(0.95 * (h[k] - u.dot(&eta)) / rate);
            }
        }
        // Gains below the roundoff of the log sum are invisible to Armijo.
        let noise = 1e-13
            * dirs
                .iter()
                .zip(h)
                .zip(w)
                .map(|((u, h), w)| (w * (h - u.dot(&eta)).ln()).abs())
                .sum::<f64>();
        let mut moved = false;
        for _ in 0..60 {
            let trial = eta + step * t;
            if let Some(v) = log_objective(h, dirs, w, trial) {
                if v + noise >= value + 1e-4 * t * slope {
                    moved = trial != eta;
                    eta = trial;
                    value = v;
                    break;
                }
            }
            t *= 0.5;
        }
        if (eta - start).norm() > 1e8 * scale {
            return Err(Error::Divergence(format!("|eta| = {:e} left every bounded region", eta.norm())));
        }
        if !moved {
            // No ascent possible: roundoff floor at a maximizer, or divergence.
            let (g, hess) = log_derivatives(h, dirs, w, eta);
            if g.norm() * scale <= 1e-8 * total {
                return Ok(InnerMax {
                    eta,
                    value,
                    grad_norm: g.norm(),
                    hessian: hess,
                    iterations: it + 1,
                });
            }
            return Err(Error::Divergence("line search cannot keep eta interior".into()));
        }
    }
    Err(Error::Divergence(format!(
        "no convergence in {INNER_MAX_ITERS} Newton steps"
    )))
}

fn support_values(body: &Polytope2, mu: &DiscreteMeasure) -> Vec<f64> {
    mu.atoms().iter().map(|a| body.support_function(a.dir)).collect()
}

fn inner_for(body: &Polytope2, mu: &DiscreteMeasure) -> Result<InnerMax> {
    inner_maximizer(body, mu, None)
}

/// Full result of the inner maximization, started from `start` (default:
/// the centroid), which must lie in `Int P`.
pub fn inner_maximizer(body: &Polytope2, mu: &DiscreteMeasure, start: Option<Vec2>) -> Result<InnerMax> {
    let report = hemisphere_check(mu);
    if report.concentrated {
        return Err(Error::Divergence(format!(
            "measure is concentrated on a closed hemisphere (margin {:e})",
            report.margin
        )));
    }
    maximize_inner(
        &support_values(body, mu),
        &mu.directions(),
        &mu.weights(),
        start.unwrap_or_else(|| body.centroid()),
        body.diameter(),
    )
}

/// `η(P)`: the maximizer of `Σ α_k log(h_P(u_k) − η·u_k)` over `Int P`.
pub fn inner_maximizer_eta(body: &Polytope2, mu: &DiscreteMeasure) -> Result<Vec2> {
    inner_for(body, mu).map(|m| m.eta)
}

/// `Ψ_{μ,P}(η(P))`.
pub fn objective_log(body: &Polytope2, mu: &DiscreteMeasure) -> Result<f64> {
    inner_for(body, mu).map(|m| m.value)
}

/// Result of [`solve_log_minkowski`].
#[derive(Clone, Debug, Serialize)]
pub struct LogMinkowskiRun {
    pub input: DiscreteMeasure,
    /// `(Σ α_i)^c P₀` with `η(P₀) = o`.
    pub solution: Polytope2,
    /// `η` of every accepted iterate at `τ = 1`, before it is moved to the origin.
    pub eta_history: Vec<[f64; 2]>,
    /// `Ψ_{μ,P}(η(P))` of every accepted iterate at `τ = 1`.
    pub objective_history: Vec<f64>,
    /// Indices into `objective_history` where the mesh was rebuilt.
    pub remesh_at: Vec<usize>,
    /// `max_k |α_k − (Σ α_i) c h_k S_k| / α_k` at the final `τ = 1` iterate.
    pub stationarity_residual: f64,
    /// `(Σ α_i)^c`.
    pub final_scale: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct LogProblem {
    alpha: Vec<f64>,
    total: f64,
    c: f64,
    last_eta: Option<Vec2>,
}

impl ShapeObjective for LogProblem {
    fn eval(&mut self, sample: &Sample) -> Result<Eval> {
        let body = &sample.body;
        let h = body.offsets();
        let start = match self.last_eta {
            Some(e) if body.depth(e) < 0.0 => e,
            _ => body.centroid(),
        };
        let m = maximize_inner(h, body.normals(), &self.alpha, start, body.diameter())?;
        self.last_eta = Some(m.eta);
        let d: Vec<f64> = h
            .iter()
            .zip(body.normals())
            .map(|(h, u)| h - m.eta.dot(u))
            .collect();
        let k_tau = self.total * self.c / sample.tau;
        let grad = (0..h.len())
            .map(|k| h[k] * (self.alpha[k] / d[k] - k_tau * sample.s[k]))
            .collect();
        let residual = (0..h.len())
            .map(|k| (self.alpha[k] - k_tau * d[k] * sample.s[k]).abs() / self.alpha[k])
            .fold(0.0, f64::max);
        Ok(Eval {
            value: m.value - self.total * self.c * sample.tau.ln(),
            recorded: m.value,
            grad,
            residual,
            center: m.eta,
        })
    }
}

/// Validation shared by the discrete and general solvers.
fn validate_log_measure(mu: &DiscreteMeasure, cfg: &SolverConfig) -> Result<()> {
    let dirs = mu.directions();
    if dirs.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 atoms, got {}", dirs.len())));
    }
    check_distinct(&dirs)?;
    let min_det = min_pair_determinant(&dirs);
    if min_det < cfg.general_position_tol {
        // Antipodal pairs (a centered square) still have a unique inner
        // maximizer; only the existence argument needs general position.
        log::warn!("directions are not in general position (min |det| = {min_det:e})");
    }
    let hemi = hemisphere_check(mu);
    if hemi.concentrated {
        return Err(Error::HemisphereConcentrated { margin: hemi.margin });
    }
    Ok(())
}

/// Finds `P ∋ o` with normals `u_k` and `τ^log(P, ·) = μ`.
///
/// The mesh size of each iterate is `cfg.h_max` times its diameter.
pub fn solve_log_minkowski(
    mu: &DiscreteMeasure,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<LogMinkowskiRun> {
    solve_log_minkowski_from(mu, norm, p, cfg, None)
}

/// As [`solve_log_minkowski`], starting from the offsets of `start` (atom
/// order) instead of the Wulff shape.
pub fn solve_log_minkowski_from(
    mu: &DiscreteMeasure,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<LogMinkowskiRun> {
    check_p(p)?;
    cfg.validate()?;
    if p < 2.0 {
        log::warn!("p = {p} < 2: existence for general measures is only known for p >= 2");
    }
    validate_log_measure(mu, cfg)?;
    let body0 = match start {
        Some(h) => Polytope2::from_halfspaces_strict(&mu.directions(), h)?,
        None => wulff_start(mu, norm)?,
    };
    let c = tau_exponent(p);
    let total = mu.total();
    let mut obj = LogProblem {
        alpha: facet_weights(&body0, mu),
        total,
        c,
        last_eta: None,
    };
    let mut ev = Evaluator::new(norm, p, cfg);
    let run = descend(&mut obj, &mut ev, &body0, p, cfg)?;
    let final_scale = total.powf(c);
    let solution = run.sample.body.scaled(final_scale);
    let out = LogMinkowskiRun {
        input: mu.clone(),
        solution,
        eta_history: run.centers.iter().map(|e| [e.x, e.y]).collect(),
        objective_history: run.history,
        remesh_at: run.remesh_at,
        stationarity_residual: run.eval.residual,
        final_scale,
        converged: run.converged,
        iterations: run.iterations,
    };
    log::info!(
        "log-minkowski: {} atoms, {} iterations, residual {:.3e}, {} meshes",
        mu.len(),
        out.iterations,
        out.stationarity_residual,
        ev.remeshes
    );
    if !out.converged {
        return Err(Error::NonConvergence {
            what: "log-minkowski solve",
            iterations: out.iterations,
            residual: out.stationarity_residual,
            partial: Some(PartialResult::LogMinkowski(Box::new(out))),
        });
    }
    Ok(out)
}

/// Largest share of `|μ|` on one line through the origin, against the bound
/// `1 − (n(p−1)+p)(n−1)/(n(n+2)(p−1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    pub ok: bool,
    pub worst_ratio: f64,
    pub threshold: f64,
}

/// Threshold of the subspace mass inequality in the plane.
pub fn mass_threshold(p: f64) -> f64 {
    1.0 - (2.0 * (p - 1.0) + p) / (8.0 * (p - 1.0))
}

/// Directions closer than this (`|sin|` of the angle) lie on one line.
const LINE_TOL: f64 = 1e-12;

pub fn subspace_mass_check(mu: &DiscreteMeasure, p: f64) -> Result<MassCheck> {
    check_p(p)?;
    if p < 2.0 {
        return Err(Error::Precondition(format!(
            "the subspace mass inequality needs p >= 2, got {p}"
        )));
    }
    line_mass(mu.atoms(), mu.total(), p)
}

/// Subspace mass check of a density. Only its atoms put mass on a line.
pub fn density_mass_check(density: &Density, p: f64) -> Result<MassCheck> {
    check_p(p)?;
    if p < 2.0 {
        return Err(Error::Precondition(format!(
            "the subspace mass inequality needs p >= 2, got {p}"
        )));
    }
    let atoms: Vec<Atom> = match density {
        Density::AtomsPlusUniform { atoms, .. } => atoms
            .iter()
            .map(|a| Atom {
                dir: a.dir.normalize(),
                weight: a.weight,
            })
            .collect(),
        _ => Vec::new(),
    };
    line_mass(&atoms, density.total(), p)
}

fn line_mass(atoms: &[Atom], total: f64, p: f64) -> Result<MassCheck> {
    let mut worst: f64 = 0.0;
    let mut seen = vec![false; atoms.len()];
    for i in 0..atoms.len() {
        if seen[i] {
            continue;
        }
        let mut mass = 0.0;
        for j in i..atoms.len() {
            if crate::cross(atoms[i].dir, atoms[j].dir).abs() <= LINE_TOL {
                seen[j] = true;
                mass += atoms[j].weight;
            }
        }
        worst = worst.max(mass / total);
    }
    let threshold = mass_threshold(p);
    Ok(MassCheck {
        ok: worst < threshold,
        worst_ratio: worst,
        threshold,
    })
}

/// A finite measure on the unit circle, by angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Density {
    /// Constant density `value` (default 1).
    Uniform {
        #[serde(default = "one")]
        value: f64,
    },
    /// `a_0 + Σ_j (a_j cos jθ + b_j sin jθ)` with `coeffs = [a_0, a_1, b_1, a_2, b_2, …]`.
    Fourier { coeffs: Vec<f64> },
    /// Point masses on top of a constant density.
    AtomsPlusUniform {
        atoms: Vec<Atom>,
        #[serde(default)]
        uniform: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Grid used to check that a Fourier density is non-negative.
const DENSITY_GRID: usize = 4096;

impl Density {
    pub fn validate(&self) -> Result<()> {
        match self {
            Density::Uniform { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::InvalidInput(format!("uniform density {value} must be positive")));
                }
            }
            Density::Fourier { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("fourier density needs finite coefficients".into()));
                }
                let min = (0..DENSITY_GRID)
                    .map(|i| self.value(2.0 * PI * i as f64 / DENSITY_GRID as f64))
                    .fold(f64::INFINITY, f64::min);
                if min < 0.0 || coeffs[0] <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "fourier density takes the negative value {min:e}"
                    )));
                }
            }
            Density::AtomsPlusUniform { atoms, uniform } => {
                if !(uniform.is_finite() && *uniform >= 0.0) {
                    return Err(Error::InvalidInput(format!("uniform part {uniform} must be non-negative")));
                }
                if atoms.iter().any(|a| !(a.weight > 0.0) || !(a.dir.norm() > 0.0)) {
                    return Err(Error::InvalidInput("atoms need a direction and a positive weight".into()));
                }
                if atoms.is_empty() && *uniform == 0.0 {
                    return Err(Error::InvalidInput("density has no mass".into()));
                }
            }
        }
        Ok(())
    }

    /// Absolutely continuous part at angle `theta`.
    pub fn value(&self, theta: f64) -> f64 {
        match self {
            Density::Uniform { value } => *value,
            Density::Fourier { coeffs } => {
                let mut v = coeffs[0];
                for (j, pair) in coeffs[1..].chunks(2).enumerate() {
                    let m = (j + 1) as f64;
                    v += pair[0] * (m * theta).cos();
                    if let Some(b) = pair.get(1) {
                        v += b * (m * theta).sin();
                    }
                }
                v
            }
            Density::AtomsPlusUniform { uniform, .. } => *uniform,
        }
    }

    /// `μ([a, b))` for `0 ≤ a < b ≤ 2π`.
    pub fn arc_mass(&self, a: f64, b: f64) -> f64 {
        match self {
            Density::Uniform { value } => value * (b - a),
            Density::Fourier { coeffs } => {
                let mut m = coeffs[0] * (b - a);
                for (j, pair) in coeffs[1..].chunks(2).enumerate() {
                    let k = (j + 1) as f64;
                    m += pair[0] * ((k * b).sin() - (k * a).sin()) / k;
                    if let Some(bj) = pair.get(1) {
                        m -= bj * ((k * b).cos() - (k * a).cos()) / k;
                    }
                }
                m
            }
            Density::AtomsPlusUniform { atoms, uniform } => {
                let point: f64 = atoms
                    .iter()
                    .filter(|at| {
                        let t = at.dir.y.atan2(at.dir.x).rem_euclid(2.0 * PI);
                        a <= t && t < b
                    })
                    .map(|at| at.weight)
                    .sum();
                uniform * (b - a) + point
            }
        }
    }

    /// `|μ|`.
    pub fn total(&self) -> f64 {
        self.arc_mass(0.0, 2.0 * PI)
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Discrete measure on `N = ⌈2πk⌉` arcs of length `2π/N < 1/k`. Arc `i`
/// carries `μ(U_i) + 1/N²` at a direction inside the arc offset from its
/// midpoint by a golden-ratio rotation, so that no two directions are
/// parallel; weights are then scaled to total `|μ|`.
pub fn discretize_measure(density: &Density, k: usize) -> Result<DiscreteMeasure> {
    if k < 8 {
        return Err(Error::Precondition(format!("k must be at least 8, got {k}")));
    }
    density.validate()?;
    let n = (2.0 * PI * k as f64).ceil() as usize;
    let width = 2.0 * PI / n as f64;
    let mut angles = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let a = i as f64 * width;
        let b = if i + 1 == n { 2.0 * PI } else { a + width };
        let jitter = 0.5 * ((i as f64 * GOLDEN).fract() - 0.5);
        angles.push(a + width * (0.5 + jitter));
        weights.push(density.arc_mass(a, b).max(0.0) + 1.0 / (n * n) as f64);
    }
    let total = density.total();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= total / sum);
    let mu = DiscreteMeasure::from_angles(&angles, &weights)?;
    let min_det = min_pair_determinant(&mu.directions());
    if min_det < crate::geometry::GENERAL_POSITION_TOL {
        return Err(Error::GeneralPosition { min_det });
    }
    Ok(mu)
}

/// Solutions over a sequence of discretization levels.
#[derive(Clone, Debug, Serialize)]
pub struct GeneralRun {
    pub k_levels: Vec<usize>,
    pub levels: Vec<LogMinkowskiRun>,
    /// Hausdorff distance between the solutions of consecutive levels.
    pub hausdorff_steps: Vec<f64>,
}

impl GeneralRun {
    /// Solution at the finest level.
    pub fn finest(&self) -> &Polytope2 {
        &self.levels.last().expect("at least one level").solution
    }
}

/// Discretizes `density` at each `k` and solves, warm-starting every level
/// from the previous solution widened by a small Wulff shape.
pub fn solve_log_minkowski_general(
    density: &Density,
    norm: &AnisotropicNorm,
    p: f64,
    k_levels: &[usize],
    cfg: &SolverConfig,
) -> Result<GeneralRun> {
    check_p(p)?;
    if p < 2.0 {
        return Err(Error::Precondition(format!(
            "general measures need p >= 2, got {p}"
        )));
    }
    if k_levels.is_empty() {
        return Err(Error::InvalidInput("k_levels is empty".into()));
    }
    density.validate()?;
    let mass = density_mass_check(density, p)?;
    if !mass.ok {
        return Err(Error::MassInequality {
            worst_ratio: mass.worst_ratio,
            threshold: mass.threshold,
        });
    }
    let mut levels: Vec<LogMinkowskiRun> = Vec::new();
    let mut steps = Vec::new();
    for &k in k_levels {
        let mu = discretize_measure(density, k)?;
        let start: Option<Vec<f64>> = levels.last().map(|prev| {
            let widen = 0.05 * prev.solution.diameter();
            mu.atoms()
                .iter()
                .map(|a| prev.solution.support_function(a.dir) + widen * norm.value(a.dir))
                .collect()
        });
        let run = solve_log_minkowski_from(&mu, norm, p, cfg, start.as_deref())?;
        if let Some(prev) = levels.last() {
            steps.push(hausdorff_distance(&prev.solution, &run.solution));
        }
        levels.push(run);
    }
    Ok(GeneralRun {
        k_levels: k_levels.to_vec(),
        levels,
        hausdorff_steps: steps,
    })
}
