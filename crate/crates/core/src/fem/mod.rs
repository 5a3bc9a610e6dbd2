//! P1 finite elements for `Δ_p^F u = −1` with `u = 0` on the boundary.
//!
//! The solution minimizes the convex energy
//! `J_h(v) = Σ_T |T| (F_δ^p(∇v) − δ^p)/p − Σ_i b_i v_i` over piecewise-linear
//! fields vanishing on `∂P`, where `F_δ = sqrt(F² + δ²)`.

mod energy;
mod mesh;
mod minimizers;
mod sparse;

use serde::{Deserialize, Serialize};

pub use mesh::{BoundaryEdge, Mesh};
pub use minimizers::{
    GradientDescent, Lbfgs, MinimizeOptions, MinimizeOutcome, Minimizer, MinimizerFactory,
    MinimizerRegistry, Newton, Objective,
};
pub use sparse::{pcg, CgOutcome, Csr};

pub(crate) use energy::{EnergyProblem, Kernel};

use crate::error::PartialResult;
use crate::geometry::{Polytope2, GENERAL_POSITION_TOL};
use crate::norms::AnisotropicNorm;
use crate::{check_p, Error, Result, Vec2};

/// Solver settings shared by the forward and inverse problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Target mesh edge length.
    pub h_max: f64,
    /// Energy-gradient tolerance, scaled by the mesh area.
    pub grad_tol: f64,
    /// Iteration budget of the energy minimizer.
    pub max_iters: usize,
    /// Gradient regularization; `None` picks `1e-8·diam` for `p ≥ 2` and
    /// `1e-6` for `p < 2`.
    pub delta: Option<f64>,
    /// Registered minimizer name.
    pub method: String,
    /// Residual tolerance of the inverse solvers.
    pub tol: f64,
    /// Outer iteration budget of the inverse solvers.
    pub max_outer: usize,
    /// Pairwise determinant threshold for general position.
    pub general_position_tol: f64,
    /// Admissible `|Σ α_k u_k| / Σ α_k` for the classical problem.
    pub centroid_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h_max: 0.05,
            grad_tol: 1e-8,
            max_iters: 5000,
            delta: None,
            method: "newton".into(),
            tol: 1e-2,
            max_outer: 200,
            general_position_tol: GENERAL_POSITION_TOL,
            centroid_tol: 1e-2,
        }
    }
}

impl SolverConfig {
    pub fn with_h(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("h_max", self.h_max)?;
        positive("grad_tol", self.grad_tol)?;
        positive("tol", self.tol)?;
        positive("general_position_tol", self.general_position_tol)?;
        positive("centroid_tol", self.centroid_tol)?;
        if let Some(d) = self.delta {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidConfig(format!("delta must be non-negative, got {d}")));
            }
        }
        MinimizerRegistry::global().build(&self.method)?;
        Ok(())
    }

    /// Regularization actually used for exponent `p` on a body of diameter `diam`.
    pub fn resolved_delta(&self, p: f64, diam: f64) -> Result<f64> {
        match self.delta {
            Some(d) if p < 2.0 && d <= 0.0 => Err(Error::InvalidConfig(format!(
                "p = {p} < 2 needs a positive delta"
            ))),
            Some(d) => Ok(d),
            None if p < 2.0 => Ok(1e-6),
            None => Ok(1e-8 * diam),
        }
    }
}

/// Discrete solution of the torsion problem.
#[derive(Clone, Debug, Serialize)]
pub struct TorsionSolution {
    pub mesh: Mesh,
    /// One value per mesh node; exactly zero on boundary nodes.
    pub nodal_values: Vec<f64>,
    /// Constant gradient of `u` on each triangle.
    pub element_gradients: Vec<Vec2>,
    /// `J_h(u)`.
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub p: f64,
    pub norm: AnisotropicNorm,
    pub delta: f64,
    /// Final `max_i |∂J_h/∂u_i|`.
    pub grad_residual: f64,
    /// `J_h` after every accepted minimizer step.
    pub energy_history: Vec<f64>,
}

impl TorsionSolution {
    fn assemble(mesh: &Mesh, norm: &AnisotropicNorm, p: f64, delta: f64, values: Vec<f64>) -> Self {
        let element_gradients = (0..mesh.triangles().len())
            .map(|t| mesh.field_gradient(&values, t))
            .collect();
        Self {
            mesh: mesh.clone(),
            nodal_values: values,
            element_gradients,
            energy: 0.0,
            converged: false,
            iterations: 0,
            p,
            norm: norm.clone(),
            delta,
            grad_residual: f64::INFINITY,
            energy_history: Vec::new(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.nodal_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.nodal_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `min u ≥ −1e−8 · max u`.
    pub fn satisfies_max_principle(&self) -> bool {
        self.min_value() >= -1e-8 * self.max_value()
    }
}

/// Distance surrogate `min_k (h_k − u_k·x)`, clamped at zero.
fn distance_surrogate(mesh: &Mesh, body: &Polytope2) -> Vec<f64> {
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| if mesh.is_boundary(i) { 0.0 } else { (-body.depth(x)).max(0.0) })
        .collect()
}

/// Solves on `mesh`, starting from the scaled distance surrogate.
pub fn solve_torsion_pde(
    mesh: &Mesh,
    body: &Polytope2,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<TorsionSolution> {
    solve_torsion_pde_from(mesh, body, norm, p, cfg, None)
}

/// Solves on `mesh`; `warm` holds nodal values to start from.
pub fn solve_torsion_pde_from(
    mesh: &Mesh,
    body: &Polytope2,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<TorsionSolution> {
    check_p(p)?;
    cfg.validate()?;
    let delta = cfg.resolved_delta(p, body.diameter())?;
    let minimizer = MinimizerRegistry::global().build(&cfg.method)?;
    let problem = EnergyProblem::new(mesh, norm, p, delta);

    if cfg.max_iters == 0 {
        let mut sol = TorsionSolution::assemble(mesh, norm, p, delta, vec![0.0; mesh.nodes().len()]);
        let (_, g) = problem.value_gradient(&vec![0.0; problem.dim()]);
        sol.grad_residual = g.iter().fold(0.0, |m, v| m.max(v.abs()));
        sol.energy_history.push(0.0);
        return Err(Error::NonConvergence {
            what: "torsion solve",
            iterations: 0,
            residual: sol.grad_residual,
            partial: Some(PartialResult::Torsion(Box::new(sol))),
        });
    }

    let x0 = match warm {
        Some(v) if v.len() == mesh.nodes().len() => problem.restrict(v),
        Some(v) => {
            return Err(Error::InvalidInput(format!(
                "warm start has {} values for {} nodes",
                v.len(),
                mesh.nodes().len()
            )))
        }
        None => {
            let w = problem.restrict(&distance_surrogate(mesh, body));
            // Best multiple of the surrogate: s^{p-1} Σ|T|F^p(∇w) = Σ b_i w_i.
            let a = problem.p_dirichlet(&w);
            let b = problem.load_dot(&w);
            let s = if a > 0.0 { (b / a).powf(1.0 / (p - 1.0)) } else { 0.0 };
            w.iter().map(|v| v * s).collect()
        }
    };
    let opts = MinimizeOptions {
        grad_tol: cfg.grad_tol * mesh.area(),
        max_iters: cfg.max_iters,
    };
    let out = minimizer.minimize(&problem, x0, &opts);
    let mut sol = TorsionSolution::assemble(mesh, norm, p, delta, problem.expand(&out.x));
    sol.energy = out.value;
    sol.converged = out.converged;
    sol.iterations = out.iterations;
    sol.grad_residual = out.grad_inf;
    sol.energy_history = out.history;
    log::debug!(
        "torsion solve: {} nodes, {} iterations, |grad| = {:.2e}, J = {:.6e}",
        mesh.nodes().len(),
        sol.iterations,
        sol.grad_residual,
        sol.energy
    );
    if !sol.converged {
        return Err(Error::NonConvergence {
            what: "torsion solve",
            iterations: sol.iterations,
            residual: sol.grad_residual,
            partial: Some(PartialResult::Torsion(Box::new(sol))),
        });
    }
    if !sol.satisfies_max_principle() {
        return Err(Error::InvalidMesh(format!(
            "discrete maximum principle violated: min u = {:e}, max u = {:e}",
            sol.min_value(),
            sol.max_value()
        )));
    }
    Ok(sol)
}

/// Triangulates `body` with `cfg.h_max` and solves.
pub fn solve_body(
    body: &Polytope2,
    norm: &AnisotropicNorm,
    p: f64,
    cfg: &SolverConfig,
) -> Result<TorsionSolution> {
    let mesh = Mesh::triangulate(body, cfg.h_max)?;
    solve_torsion_pde(&mesh, body, norm, p, cfg)
}

/// One boundary edge with `F^p(∇u)` taken on the triangle that owns it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub facet: usize,
    pub length: f64,
    pub value: f64,
}

/// `F^p(∇u)` along the boundary, one entry per boundary edge, grouped by facet.
pub fn boundary_gradient_trace(sol: &TorsionSolution) -> Vec<TraceEntry> {
    let mesh = &sol.mesh;
    let mut out: Vec<TraceEntry> = mesh
        .boundary_edges()
        .iter()
        .map(|e| {
            let [a, b] = e.nodes;
            TraceEntry {
                facet: e.facet,
                length: (mesh.nodes()[b] - mesh.nodes()[a]).norm(),
                value: sol.norm.value(sol.element_gradients[e.triangle]).powf(sol.p),
            }
        })
        .collect();
    out.sort_by_key(|e| e.facet);
    out
}

/// Normal flux `q = −A(∇u)·ν` at the boundary nodes, recovered from the
/// discrete residual: `∫_∂ q φ_i = b_i − Σ_T |T| A(∇u_T)·∇φ_i`, solved with the
/// P1 mass matrix of the boundary loop. Zero at interior nodes.
pub fn boundary_flux(sol: &TorsionSolution) -> Vec<f64> {
    let mesh = &sol.mesh;
    let n = mesh.nodes().len();
    let kernel = Kernel {
        norm: &sol.norm,
        p: sol.p,
        delta: sol.delta,
    };
    let mut residual = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !tri.iter().any(|&i| mesh.is_boundary(i)) {
            continue;
        }
        let area = mesh.triangle_area(t);
        let flux = kernel.flux(sol.element_gradients[t]);
        let basis = mesh.basis_gradients(t);
        for a in 0..3 {
            if mesh.is_boundary(tri[a]) {
                residual[tri[a]] += area / 3.0 - area * flux.dot(&basis[a]);
            }
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for e in mesh.boundary_edges() {
        for &i in &e.nodes {
            if index[i] == usize::MAX {
                index[i] = nodes.len();
                nodes.push(i);
            }
        }
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for e in mesh.boundary_edges() {
        let [a, b] = e.nodes.map(|i| index[i]);
        rows[a].extend([a, b]);
        rows[b].extend([a, b]);
    }
    let mut mass = Csr::from_pattern(rows);
    for e in mesh.boundary_edges() {
        let len = (mesh.nodes()[e.nodes[1]] - mesh.nodes()[e.nodes[0]]).norm();
        let [a, b] = e.nodes.map(|i| index[i]);
        for (i, j, w) in [(a, a, 2.0), (b, b, 2.0), (a, b, 1.0), (b, a, 1.0)] {
            let s = mass.slot(i, j);
            mass.vals[s] += w * len / 6.0;
        }
    }
    let rhs: Vec<f64> = nodes.iter().map(|&i| residual[i]).collect();
    let q = pcg(&mass, &rhs, &mass.diagonal(), 1e-14, 10 * nodes.len() + 100).x;
    let mut out = vec![0.0; n];
    for (k, &i) in nodes.iter().enumerate() {
        out[i] = q[k];
    }
    out
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// `F^p(∇u)` along the boundary from the recovered flux, one entry per
/// boundary edge (edge mean), grouped by facet.
///
/// On `∂P` the gradient is `−g ν`, so `q = F^{p−1}(∇u) F(−ν)` and
/// `F^p(∇u) = (q / F(−ν))^{p/(p−1)}`. Negative recovered values are clamped.
pub fn recovered_trace(sol: &TorsionSolution) -> Vec<TraceEntry> {
    let mesh = &sol.mesh;
    let q = boundary_flux(sol);
    let expo = sol.p / (sol.p - 1.0);
    let mut out: Vec<TraceEntry> = mesh
        .boundary_edges()
        .iter()
        .map(|e| {
            let [a, b] = e.nodes;
            let scale = sol.norm.value(-mesh.facet_normal(e.facet));
            let value = GAUSS3
                .iter()
                .map(|&(s, w)| {
                    let qs = (1.0 - s) * q[a] + s * q[b];
                    w * (qs.max(0.0) / scale).powf(expo)
                })
                .sum();
            TraceEntry {
                facet: e.facet,
                length: (mesh.nodes()[b] - mesh.nodes()[a]).norm(),
                value,
            }
        })
        .collect();
    out.sort_by_key(|e| e.facet);
    out
}

/// `∂τ/∂h_k` of the discrete torsional rigidity `−p/(p−1) J_h(u)`, with mesh
/// nodes moving as in [`Mesh::transport`]. Since `u` minimizes `J_h`, only the
/// explicit dependence of `J_h` on node positions enters:
/// `∂J_h/∂x_a = Σ_{T∋a} |T| ((W(∇u) − ū_T) ∇φ_a − (A(∇u)·∇φ_a) ∇u)`.
pub fn shape_gradient(sol: &TorsionSolution, body: &Polytope2) -> Result<Vec<f64>> {
    let mesh = &sol.mesh;
    let m = body.len();
    if mesh.facet_count() != m {
        return Err(Error::DirectionMismatch);
    }
    let kernel = Kernel {
        norm: &sol.norm,
        p: sol.p,
        delta: sol.delta,
    };
    let mut node_grad = vec![Vec2::zeros(); mesh.nodes().len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let g = sol.element_gradients[t];
        let w = kernel.value(g);
        let flux = kernel.flux(g);
        let mean = tri.iter().map(|&i| sol.nodal_values[i]).sum::<f64>() / 3.0;
        let basis = mesh.basis_gradients(t);
        for a in 0..3 {
            node_grad[tri[a]] += (basis[a] * (w - mean) - g * flux.dot(&basis[a])) * area;
        }
    }
    // Pull node forces back to the centroid and the corners.
    let mut at_center = Vec2::zeros();
    let mut at_corner = vec![Vec2::zeros(); m];
    for (g, (k, l)) in node_grad.iter().zip(mesh.sector_coordinates()) {
        at_center += g * l[0];
        at_corner[k] += g * l[1];
        at_corner[(k + 1) % m] += g * l[2];
    }
    let area = body.area();
    let c = body.centroid();
    let v = body.vertices();
    let u = body.normals();
    let mut dj = vec![0.0; m];
    for k in 0..m {
        let len = body.facet_lengths()[k];
        let mid = (v[k] + v[(k + 1) % m]) * 0.5;
        dj[k] += at_center.dot(&((mid - c) * (len / area)));
        // Corner k lies on facets k−1 and k.
        let prev = (k + m - 1) % m;
        let rows = nalgebra::Matrix2::new(u[prev].x, u[prev].y, u[k].x, u[k].y);
        let inv = rows
            .try_inverse()
            .ok_or_else(|| Error::InvalidMesh(format!("parallel facets at corner {k}")))?;
        dj[prev] += at_corner[k].dot(&inv.column(0).into_owned());
        dj[k] += at_corner[k].dot(&inv.column(1).into_owned());
    }
    let factor = -sol.p / (sol.p - 1.0);
    Ok(dj.into_iter().map(|d| d * factor).collect())
}
