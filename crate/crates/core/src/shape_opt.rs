//! Offset-space descent shared by the two inverse solvers.
//!
//! Both objectives are invariant under dilation and translation of the body,
//! so the iterate is kept at `τ = 1` and recentered after every accepted step.
//! Steps are BFGS directions in `log h` coordinates; a step that kills a
//! facet or inverts a transported triangle is treated as a line-search
//! rejection.

use crate::fem::{shape_gradient, solve_torsion_pde, solve_torsion_pde_from, Mesh, SolverConfig};
use crate::geometry::Polytope2;
use crate::norms::AnisotropicNorm;
use crate::{measure_degree, tau_degree, Error, Result, TorsionSolution, Vec2};

/// Shape change (relative to the diameter) that triggers a fresh mesh.
const REMESH_DRIFT: f64 = 0.05;

/// Largest change of any `log h_k` in one step.
const STEP_CAP: f64 = 0.2;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Torsion data of one body, facets in the body's order. `s` is the exact
/// offset derivative of the discrete `τ`, the facet measure the optimizer sees.
#[derive(Clone, Debug)]
pub(crate) struct Sample {
    pub body: Polytope2,
    pub tau: f64,
    pub s: Vec<f64>,
    values: Vec<f64>,
}

impl Sample {
    /// Dilation by `lambda`, using the exact homogeneity of the discrete problem.
    fn scaled(&self, lambda: f64, p: f64) -> Sample {
        let ds = lambda.powf(measure_degree(p));
        Sample {
            body: self.body.scaled(lambda),
            tau: self.tau * lambda.powf(tau_degree(p)),
            s: self.s.iter().map(|s| s * ds).collect(),
            values: self.values.iter().map(|v| v * lambda.powf(p / (p - 1.0))).collect(),
        }
    }

    fn translated(&self, t: Vec2) -> Sample {
        Sample {
            body: self.body.translated(t),
            ..self.clone()
        }
    }

    /// Same body dilated to `τ = 1`.
    pub fn normalized(&self, p: f64) -> Sample {
        self.scaled(self.tau.powf(-1.0 / tau_degree(p)), p)
    }
}

/// Offsets about the centroid divided by the diameter.
fn shape_key(body: &Polytope2) -> Vec<f64> {
    let c = body.centroid();
    let d = body.diameter();
    body.normals()
        .iter()
        .zip(body.offsets())
        .map(|(u, h)| (h - u.dot(&c)) / d)
        .collect()
}

struct MeshCache {
    key: Vec<f64>,
    mesh: Mesh,
}

/// Forward solves on bodies with a fixed normal set, reusing one mesh
/// transported onto each body until the shape drifts too far.
pub(crate) struct Evaluator<'a> {
    norm: &'a AnisotropicNorm,
    p: f64,
    cfg: &'a SolverConfig,
    cache: Option<MeshCache>,
    pub remeshes: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(norm: &'a AnisotropicNorm, p: f64, cfg: &'a SolverConfig) -> Self {
        Self {
            norm,
            p,
            cfg,
            cache: None,
            remeshes: 0,
        }
    }

    fn sample(&self, sol: TorsionSolution, body: &Polytope2) -> Result<Sample> {
        let tau = -self.p / (self.p - 1.0) * sol.energy;
        if !(tau > 0.0) {
            return Err(Error::NonPositiveTau(tau));
        }
        Ok(Sample {
            body: body.clone(),
            tau,
            s: shape_gradient(&sol, body)?,
            values: sol.nodal_values,
        })
    }

    fn drift(&self, body: &Polytope2) -> f64 {
        match &self.cache {
            None => f64::INFINITY,
            Some(c) => shape_key(body)
                .iter()
                .zip(&c.key)
                .fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        }
    }

    /// Meshes `body` afresh (mesh size `h_max · diam`) and solves cold.
    pub fn remesh(&mut self, body: &Polytope2) -> Result<Sample> {
        let mesh = Mesh::triangulate(body, self.cfg.h_max * body.diameter())?;
        let sol = solve_torsion_pde(&mesh, body, self.norm, self.p, self.cfg)?;
        self.cache = Some(MeshCache {
            key: shape_key(body),
            mesh,
        });
        self.remeshes += 1;
        self.sample(sol, body)
    }

    /// Solves on the cached mesh carried over to `body`, warm-started from `near`.
    pub fn evaluate(&mut self, body: &Polytope2, near: Option<&Sample>) -> Result<Sample> {
        let cache = match &self.cache {
            Some(c) => c,
            None => return self.remesh(body),
        };
        let mesh = cache.mesh.transport(body)?;
        let warm = near.map(|s| s.values.as_slice());
        let sol = solve_torsion_pde_from(&mesh, body, self.norm, self.p, self.cfg, warm)?;
        self.sample(sol, body)
    }

    pub fn needs_remesh(&self, body: &Polytope2) -> bool {
        self.drift(body) > REMESH_DRIFT
    }
}

/// Objective value, `log h` gradient and convergence residual at a sample.
pub(crate) struct Eval {
    /// Value compared by the line search.
    pub value: f64,
    /// Value recorded in the run history.
    pub recorded: f64,
    pub grad: Vec<f64>,
    pub residual: f64,
    /// Point the body is translated to the origin from.
    pub center: Vec2,
}

pub(crate) trait ShapeObjective {
    /// Evaluates at a sample with `τ = 1`.
    fn eval(&mut self, sample: &Sample) -> Result<Eval>;
}

pub(crate) struct Descent {
    pub sample: Sample,
    pub eval: Eval,
    pub history: Vec<f64>,
    pub centers: Vec<Vec2>,
    pub remesh_at: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Normalizes to `τ = 1`, recenters and evaluates the objective there.
fn settle(obj: &mut dyn ShapeObjective, sample: &Sample, p: f64) -> Result<(Sample, Eval, Vec2)> {
    let s = sample.normalized(p);
    let e = obj.eval(&s)?;
    let center = e.center;
    let s = s.translated(-center);
    let e = obj.eval(&s)?;
    Ok((s, e, center))
}

fn rejects_step(e: &Error) -> bool {
    matches!(
        e,
        Error::FacetDeath { .. } | Error::EmptyInterior { .. } | Error::InvalidMesh(_) | Error::Divergence(_)
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `obj` over the offsets of `start` until `residual < cfg.tol`.
/// Exhausting `cfg.max_outer` or the line search returns the last iterate
/// with `converged = false`.
pub(crate) fn descend(
    obj: &mut dyn ShapeObjective,
    ev: &mut Evaluator,
    start: &Polytope2,
    p: f64,
    cfg: &SolverConfig,
) -> Result<Descent> {
    let first = ev.remesh(start)?;
    let (mut sample, mut eval, c) = settle(obj, &first, p)?;
    let n = sample.body.len();
    let mut out_history = vec![eval.recorded];
    let mut centers = vec![c];
    let mut remesh_at = Vec::new();
    // Inverse Hessian approximation, dense and row-major.
    let mut hinv: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut converged = eval.residual < cfg.tol;
    while !converged && iterations < cfg.max_outer {
        let g = eval.grad.clone();
        let mut d: Vec<f64> = match &hinv {
            Some(h) => (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect(),
            None => g.iter().map(|v| -v * (0.05 / inf_norm(&g).max(1e-300))).collect(),
        };
        if dot(&d, &g) >= 0.0 {
            hinv = None;
            d = g.iter().map(|v| -v * (0.05 / inf_norm(&g).max(1e-300))).collect();
        }
        let big = inf_norm(&d);
        if big > STEP_CAP {
            d.iter_mut().for_each(|v| *v *= STEP_CAP / big);
        }
        let slope = dot(&g, &d);
        let y0: Vec<f64> = sample.body.offsets().iter().map(|h| h.ln()).collect();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let h: Vec<f64> = y0.iter().zip(&d).map(|(y, d)| (y + t * d).exp()).collect();
            let trial = sample
                .body
                .with_offsets(&h)
                .and_then(|b| ev.evaluate(&b, Some(&sample)))
                .and_then(|s| settle(obj, &s, p));
            match trial {
                Ok((s, e, c)) if e.value <= eval.value + ARMIJO * t * slope => {
                    accepted = Some((s, e, c));
                    break;
                }
                Ok(_) => {}
                Err(err) if rejects_step(&err) => {}
                Err(err) => return Err(err),
            }
            t *= 0.5;
        }
        let Some((s_new, e_new, c)) = accepted else {
            log::debug!("shape descent: line search exhausted at residual {:.3e}", eval.residual);
            break;
        };
        iterations += 1;
        let step: Vec<f64> = d.iter().map(|v| t * v).collect();
        let yv: Vec<f64> = e_new.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &yv);
        if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&yv, &yv).sqrt() {
            let h = hinv.get_or_insert_with(|| {
                let gamma = sy / dot(&yv, &yv);
                let mut m = vec![0.0; n * n];
                (0..n).for_each(|i| m[i * n + i] = gamma);
                m
            });
            bfgs_update(h, n, &step, &yv, sy);
        }
        sample = s_new;
        eval = e_new;
        centers.push(c);
        if ev.needs_remesh(&sample.body) {
            let fresh = ev.remesh(&sample.body)?;
            let (s, e, c) = settle(obj, &fresh, p)?;
            sample = s;
            eval = e;
            *centers.last_mut().expect("nonempty") += c;
            remesh_at.push(out_history.len());
        }
        out_history.push(eval.recorded);
        log::debug!(
            "shape descent {iterations}: value {:.10e}, residual {:.3e}, step {t}",
            eval.value,
            eval.residual
        );
        converged = eval.residual < cfg.tol;
    }
    Ok(Descent {
        sample,
        eval,
        history: out_history,
        centers,
        remesh_at,
        iterations,
        converged,
    })
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [f64], n: usize, s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_update_satisfies_the_secant_equation() {
        let n = 3;
        let mut h = vec![0.0; 9];
        (0..3).for_each(|i| h[i * 3 + i] = 1.0 + i as f64);
        let s = [0.3, -0.1, 0.2];
        let y = [1.0, 0.5, 0.4];
        let sy = dot(&s, &y);
        bfgs_update(&mut h, n, &s, &y, sy);
        for i in 0..3 {
            let hy = dot(&h[i * 3..i * 3 + 3], &y);
            assert!((hy - s[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn normalization_is_exact_for_dilations() {
        let body = Polytope2::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap();
        let cfg = SolverConfig::default().with_h(0.1);
        let norm = AnisotropicNorm::euclidean();
        let mut ev = Evaluator::new(&norm, 2.0, &cfg);
        let s = ev.remesh(&body).unwrap();
        let n = s.normalized(2.0);
        let direct = ev.evaluate(&n.body, Some(&n)).unwrap();
        assert!((direct.tau - 1.0).abs() < 1e-9);
        for (a, b) in direct.s.iter().zip(&n.s) {
            assert!((a - b).abs() < 1e-8 * b);
        }
    }
}
