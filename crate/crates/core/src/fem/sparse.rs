//! Symmetric sparse matrices in CSR form and Jacobi-preconditioned CG.

/// Square CSR matrix with a fixed sparsity pattern.
#[derive(Clone, Debug)]
pub struct Csr {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) cols: Vec<usize>,
    pub(crate) vals: Vec<f64>,
}

impl Csr {
    /// Pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Self { row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Storage slot of entry `(i, j)`; panics if absent from the pattern.
    pub fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&j).expect("entry outside sparsity pattern")
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim() {
            let mut s = 0.0;
            for s_idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[s_idx] * x[self.cols[s_idx]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.vals[self.slot(i, i)]).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a CG solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Set when a direction of non-positive curvature was met.
    pub negative_curvature: bool,
}

/// Solves `A x = b` to `‖r‖ ≤ rtol ‖b‖` with diagonal preconditioner `diag`.
pub fn pcg(a: &Csr, b: &[f64], diag: &[f64], rtol: f64, max_iters: usize) -> CgOutcome {
    let n = b.len();
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            negative_curvature: false,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut negative_curvature = false;
    while iterations < max_iters {
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            negative_curvature = true;
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        relative_residual: dot(&r, &r).sqrt() / bnorm,
        x,
        iterations,
        negative_curvature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D Dirichlet Laplacian; exact solution of `A x = 1` is `x_i = (i+1)(n-i)/2`.
    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut a = Csr::from_pattern(rows);
        for i in 0..n {
            let s = a.slot(i, i);
            a.vals[s] = 2.0;
            if i > 0 {
                let s = a.slot(i, i - 1);
                a.vals[s] = -1.0;
            }
            if i + 1 < n {
                let s = a.slot(i, i + 1);
                a.vals[s] = -1.0;
            }
        }
        let b = vec![1.0; n];
        let out = pcg(&a, &b, &a.diagonal(), 1e-13, 500);
        for (i, x) in out.x.iter().enumerate() {
            let exact = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((x - exact).abs() < 1e-9 * exact);
        }
        assert!(!out.negative_curvature);
    }
}
