use nalgebra::Matrix2;
use rayon::prelude::*;

use super::minimizers::Objective;
use super::sparse::Csr;
use super::Mesh;
use crate::norms::{AnisotropicNorm, GRADIENT_DOMAIN_THRESHOLD};
use crate::Vec2;

/// Per-element pieces of `(1/p)(F_δ^p − δ^p)` at gradient `g`: value, first
/// derivative and second derivative.
pub(crate) struct Kernel<'a> {
    pub norm: &'a AnisotropicNorm,
    pub p: f64,
    pub delta: f64,
}

impl Kernel<'_> {
    fn f_delta(&self, f: f64) -> f64 {
        if self.delta == 0.0 {
            f
        } else {
            f.hypot(self.delta)
        }
    }

    pub fn value(&self, g: Vec2) -> f64 {
        let f = self.norm.value(g);
        (self.f_delta(f).powf(self.p) - self.delta.powf(self.p)) / self.p
    }

    /// `F_δ^{p−2} F ∇F`.
    pub fn flux(&self, g: Vec2) -> Vec2 {
        if g.norm() < GRADIENT_DOMAIN_THRESHOLD {
            return Vec2::zeros();
        }
        let inner = self.norm.inner();
        let f = inner.value(g);
        let fd = self.f_delta(f);
        inner.gradient(g) * (fd.powf(self.p - 2.0) * f)
    }

    /// `F_δ^{p−2} ∇²(F²/2) + (p−2) F_δ^{p−4} (F∇F)(F∇F)ᵀ`.
    pub fn hessian(&self, g: Vec2) -> Matrix2<f64> {
        let inner = self.norm.inner();
        if g.norm() < GRADIENT_DOMAIN_THRESHOLD {
            // ∇²(F²/2) is 0-homogeneous; take it along a reference direction.
            let e = Vec2::x();
            let (f, df, d2f) = (inner.value(e), inner.gradient(e), inner.hessian(e));
            let q = df * df.transpose() + d2f * f;
            return if self.delta > 0.0 {
                q * self.delta.powf(self.p - 2.0)
            } else if self.p == 2.0 {
                q
            } else {
                Matrix2::zeros()
            };
        }
        let (f, df, d2f) = (inner.value(g), inner.gradient(g), inner.hessian(g));
        let fd = self.f_delta(f);
        let q = df * df.transpose() + d2f * f;
        let w = df * f;
        q * fd.powf(self.p - 2.0) + w * w.transpose() * ((self.p - 2.0) * fd.powf(self.p - 4.0))
    }
}

/// Discrete energy `J_h(v) = Σ_T |T| (F_δ^p(∇v) − δ^p)/p − Σ_i b_i v_i` over
/// the interior nodes, with lumped load `b_i = Σ_{T∋i} |T|/3`.
pub(crate) struct EnergyProblem<'a> {
    mesh: &'a Mesh,
    kernel: Kernel<'a>,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    load: Vec<f64>,
    areas: Vec<f64>,
    basis: Vec<[Vec2; 3]>,
    pattern: Csr,
    slots: Vec<[Option<usize>; 9]>,
}

impl<'a> EnergyProblem<'a> {
    pub fn new(mesh: &'a Mesh, norm: &'a AnisotropicNorm, p: f64, delta: f64) -> Self {
        let n = mesh.nodes().len();
        let mut free_index = vec![None; n];
        let mut free_nodes = Vec::new();
        for i in 0..n {
            if !mesh.is_boundary(i) {
                free_index[i] = Some(free_nodes.len());
                free_nodes.push(i);
            }
        }
        let nt = mesh.triangles().len();
        let areas: Vec<f64> = (0..nt).map(|t| mesh.triangle_area(t)).collect();
        let basis: Vec<[Vec2; 3]> = (0..nt).map(|t| mesh.basis_gradients(t)).collect();
        let mut load = vec![0.0; free_nodes.len()];
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); free_nodes.len()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &a in tri {
                if let Some(i) = free_index[a] {
                    load[i] += areas[t] / 3.0;
                    for &b in tri {
                        if let Some(j) = free_index[b] {
                            rows[i].push(j);
                        }
                    }
                }
            }
        }
        let pattern = Csr::from_pattern(rows);
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [None; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        if let (Some(i), Some(j)) = (free_index[tri[a]], free_index[tri[b]]) {
                            s[3 * a + b] = Some(pattern.slot(i, j));
                        }
                    }
                }
                s
            })
            .collect();
        Self {
            mesh,
            kernel: Kernel { norm, p, delta },
            free_index,
            free_nodes,
            load,
            areas,
            basis,
            pattern,
            slots,
        }
    }

    /// Nodal values on the whole mesh from free values.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.mesh.nodes().len()];
        for (k, &i) in self.free_nodes.iter().enumerate() {
            v[i] = x[k];
        }
        v
    }

    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&i| values[i]).collect()
    }

    fn element_gradient(&self, x: &[f64], t: usize) -> Vec2 {
        let tri = self.mesh.triangles()[t];
        let mut g = Vec2::zeros();
        for a in 0..3 {
            if let Some(i) = self.free_index[tri[a]] {
                g += self.basis[t][a] * x[i];
            }
        }
        g
    }

    fn load_term(&self, x: &[f64]) -> f64 {
        self.load.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// `Σ_T |T| F^p(∇v)` without regularization; used for scaling trial fields.
    pub fn p_dirichlet(&self, x: &[f64]) -> f64 {
        let norm = self.kernel.norm;
        let per: Vec<f64> = (0..self.areas.len())
            .into_par_iter()
            .map(|t| self.areas[t] * norm.value(self.element_gradient(x, t)).powf(self.kernel.p))
            .collect();
        per.iter().sum()
    }

    pub fn load_dot(&self, x: &[f64]) -> f64 {
        self.load_term(x)
    }
}

impl Objective for EnergyProblem<'_> {
    fn dim(&self) -> usize {
        self.free_nodes.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let per: Vec<f64> = (0..self.areas.len())
            .into_par_iter()
            .map(|t| self.areas[t] * self.kernel.value(self.element_gradient(x, t)))
            .collect();
        per.iter().sum::<f64>() - self.load_term(x)
    }

    fn value_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let per: Vec<(f64, [f64; 3])> = (0..self.areas.len())
            .into_par_iter()
            .map(|t| {
                let g = self.element_gradient(x, t);
                let a = self.areas[t];
                let flux = self.kernel.flux(g) * a;
                let b = &self.basis[t];
                (a * self.kernel.value(g), [flux.dot(&b[0]), flux.dot(&b[1]), flux.dot(&b[2])])
            })
            .collect();
        let mut grad: Vec<f64> = self.load.iter().map(|b| -b).collect();
        let mut e = 0.0;
        for (t, (et, local)) in per.iter().enumerate() {
            e += et;
            let tri = self.mesh.triangles()[t];
            for a in 0..3 {
                if let Some(i) = self.free_index[tri[a]] {
                    grad[i] += local[a];
                }
            }
        }
        (e - self.load_term(x), grad)
    }

    fn hessian(&self, x: &[f64]) -> Option<Csr> {
        let per: Vec<[f64; 9]> = (0..self.areas.len())
            .into_par_iter()
            .map(|t| {
                let h = self.kernel.hessian(self.element_gradient(x, t)) * self.areas[t];
                let b = &self.basis[t];
                let mut local = [0.0; 9];
                for a in 0..3 {
                    let hb = h * b[a];
                    for c in 0..3 {
                        local[3 * a + c] = hb.dot(&b[c]);
                    }
                }
                local
            })
            .collect();
        let mut m = self.pattern.clone();
        m.clear();
        for (t, local) in per.iter().enumerate() {
            for (k, s) in self.slots[t].iter().enumerate() {
                if let Some(s) = s {
                    m.vals[*s] += local[k];
                }
            }
        }
        Some(m)
    }

    fn preconditioner(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.free_nodes.len()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            for a in 0..3 {
                if let Some(i) = self.free_index[tri[a]] {
                    d[i] += self.areas[t] * self.basis[t][a].norm_squared();
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polytope2;

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let p = Polytope2::regular(5, 1.0, 0.1).unwrap();
        let mesh = Mesh::triangulate(&p, 0.3).unwrap();
        for (norm, pe, delta) in [
            (AnisotropicNorm::euclidean(), 2.0, 0.0),
            (AnisotropicNorm::lq(4.0).unwrap(), 3.0, 1e-8),
            (AnisotropicNorm::smoothed_l1(0.05).unwrap(), 1.5, 1e-3),
        ] {
            let prob = EnergyProblem::new(&mesh, &norm, pe, delta);
            let n = prob.dim();
            let x: Vec<f64> = (0..n).map(|i| 0.05 + 0.03 * ((i * 7919) % 13) as f64 / 13.0).collect();
            let (_, g) = prob.value_gradient(&x);
            let h = prob.hessian(&x).unwrap();
            let eps = 1e-7;
            for k in [0, n / 2, n - 1] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += eps;
                xm[k] -= eps;
                let fd = (prob.value(&xp) - prob.value(&xm)) / (2.0 * eps);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3), "{fd} {}", g[k]);
                let (_, gp) = prob.value_gradient(&xp);
                let (_, gm) = prob.value_gradient(&xm);
                let mut col = vec![0.0; n];
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                h.mul(&e, &mut col);
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * eps);
                    assert!((fd - col[i]).abs() <= 1e-5 * col[k].abs(), "{} {pe} {fd} {}", norm.kind(), col[i]);
                }
            }
        }
    }
}
