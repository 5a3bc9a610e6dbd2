//! Unconstrained minimizers for smooth convex objectives, selectable by name.

use std::collections::{BTreeMap, VecDeque};
use std::sync::OnceLock;

use super::sparse::{dot, pcg, Csr};
use crate::{Error, Result};

/// Smooth objective on `ℝ^n`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn value_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);

    /// Sparse Hessian, if available.
    fn hessian(&self, _x: &[f64]) -> Option<Csr> {
        None
    }

    /// Positive diagonal scaling for gradient steps.
    fn preconditioner(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    /// Stop once `max_i |∂_i f| < grad_tol`.
    pub grad_tol: f64,
    pub max_iters: usize,
}

#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

pub trait Minimizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn minimize(&self, f: &dyn Objective, x0: Vec<f64>, opts: &MinimizeOptions) -> MinimizeOutcome;
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO: f64 = 1e-4;

/// Relative slack that lets a step through when the decrease is below roundoff.
const ROUNDOFF: f64 = 1e-13;

/// Backtracking from `t = t0`; returns the accepted step, value and point.
fn backtrack(
    f: &dyn Objective,
    x: &[f64],
    fx: f64,
    d: &[f64],
    slope: f64,
    t0: f64,
) -> Option<(f64, f64, Vec<f64>)> {
    let mut t = t0;
    for _ in 0..60 {
        let xn: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let fn_ = f.value(&xn);
        if fn_ <= fx + ARMIJO * t * slope || (fn_ <= fx + ROUNDOFF * fx.abs() && t < t0) {
            return Some((t, fn_, xn));
        }
        t *= 0.5;
    }
    None
}

struct Progress {
    x: Vec<f64>,
    fx: f64,
    g: Vec<f64>,
    history: Vec<f64>,
}

impl Progress {
    fn new(f: &dyn Objective, x: Vec<f64>) -> Self {
        let (fx, g) = f.value_gradient(&x);
        Self {
            x,
            fx,
            g,
            history: vec![fx],
        }
    }

    fn finish(self, iterations: usize, converged: bool) -> MinimizeOutcome {
        MinimizeOutcome {
            grad_inf: inf_norm(&self.g),
            value: self.fx,
            x: self.x,
            iterations,
            converged,
            history: self.history,
        }
    }
}

/// Newton's method with the Hessian system solved inexactly by
/// Jacobi-preconditioned CG and an Armijo line search.
#[derive(Debug, Default)]
pub struct Newton;

impl Minimizer for Newton {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn minimize(&self, f: &dyn Objective, x0: Vec<f64>, opts: &MinimizeOptions) -> MinimizeOutcome {
        let mut s = Progress::new(f, x0);
        let g0 = dot(&s.g, &s.g).sqrt().max(f64::MIN_POSITIVE);
        let precond = f.preconditioner();
        for it in 0..opts.max_iters {
            if inf_norm(&s.g) < opts.grad_tol {
                return s.finish(it, true);
            }
            let gnorm = dot(&s.g, &s.g).sqrt();
            let rhs: Vec<f64> = s.g.iter().map(|v| -v).collect();
            let mut d = match f.hessian(&s.x) {
                Some(h) => {
                    let forcing = (gnorm / g0).sqrt().min(0.1);
                    let cg_max = (10 * rhs.len()).clamp(50, 4000);
                    pcg(&h, &rhs, &h.diagonal(), forcing, cg_max).x
                }
                None => rhs.iter().zip(&precond).map(|(r, p)| r / p).collect(),
            };
            let mut slope = dot(&d, &s.g);
            if !(slope < 0.0) {
                d = rhs.iter().zip(&precond).map(|(r, p)| r / p).collect();
                slope = dot(&d, &s.g);
            }
            match backtrack(f, &s.x, s.fx, &d, slope, 1.0) {
                Some((_, _, xn)) => {
                    s.x = xn;
                    let (fx, g) = f.value_gradient(&s.x);
                    s.fx = fx;
                    s.g = g;
                    s.history.push(fx);
                }
                None => return s.finish(it, false),
            }
        }
        let done = inf_norm(&s.g) < opts.grad_tol;
        s.finish(opts.max_iters, done)
    }
}

/// Limited-memory BFGS with an Armijo line search.
#[derive(Debug)]
pub struct Lbfgs {
    pub memory: usize,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self { memory: 10 }
    }
}

impl Minimizer for Lbfgs {
    fn name(&self) -> &'static str {
        "lbfgs"
    }

    fn minimize(&self, f: &dyn Objective, x0: Vec<f64>, opts: &MinimizeOptions) -> MinimizeOutcome {
        let mut s = Progress::new(f, x0);
        let precond = f.preconditioner();
        let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        for it in 0..opts.max_iters {
            if inf_norm(&s.g) < opts.grad_tol {
                return s.finish(it, true);
            }
            // Two-loop recursion with a scaled diagonal initial matrix.
            let mut q = s.g.clone();
            let mut alphas = Vec::with_capacity(pairs.len());
            for (sk, yk, rho) in pairs.iter().rev() {
                let a = rho * dot(sk, &q);
                q.iter_mut().zip(yk).for_each(|(qi, yi)| *qi -= a * yi);
                alphas.push(a);
            }
            let gamma = match pairs.back() {
                Some((sk, yk, _)) => {
                    let yy: f64 = yk.iter().zip(&precond).map(|(y, p)| y * y / p).sum();
                    dot(sk, yk) / yy
                }
                None => 1.0,
            };
            let mut r: Vec<f64> = q.iter().zip(&precond).map(|(v, p)| gamma * v / p).collect();
            for ((sk, yk, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(yk, &r);
                r.iter_mut().zip(sk).for_each(|(ri, si)| *ri += (a - b) * si);
            }
            let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
            let mut slope = dot(&d, &s.g);
            if !(slope < 0.0) {
                pairs.clear();
                d = s.g.iter().zip(&precond).map(|(g, p)| -g / p).collect();
                slope = dot(&d, &s.g);
            }
            let Some((_, fx, xn)) = backtrack(f, &s.x, s.fx, &d, slope, 1.0) else {
                return s.finish(it, false);
            };
            let (_, g) = f.value_gradient(&xn);
            let sk: Vec<f64> = xn.iter().zip(&s.x).map(|(a, b)| a - b).collect();
            let yk: Vec<f64> = g.iter().zip(&s.g).map(|(a, b)| a - b).collect();
            let sy = dot(&sk, &yk);
            if sy > 1e-300 {
                if pairs.len() == self.memory {
                    pairs.pop_front();
                }
                pairs.push_back((sk, yk, 1.0 / sy));
            }
            s.x = xn;
            s.fx = fx;
            s.g = g;
            s.history.push(fx);
        }
        let done = inf_norm(&s.g) < opts.grad_tol;
        s.finish(opts.max_iters, done)
    }
}

/// Gradient descent scaled by the objective's diagonal preconditioner.
#[derive(Debug, Default)]
pub struct GradientDescent;

impl Minimizer for GradientDescent {
    fn name(&self) -> &'static str {
        "gradient-descent"
    }

    fn minimize(&self, f: &dyn Objective, x0: Vec<f64>, opts: &MinimizeOptions) -> MinimizeOutcome {
        let mut s = Progress::new(f, x0);
        let precond = f.preconditioner();
        let mut t = 1.0;
        for it in 0..opts.max_iters {
            if inf_norm(&s.g) < opts.grad_tol {
                return s.finish(it, true);
            }
            let d: Vec<f64> = s.g.iter().zip(&precond).map(|(g, p)| -g / p).collect();
            let slope = dot(&d, &s.g);
            let Some((ta, _, xn)) = backtrack(f, &s.x, s.fx, &d, slope, 2.0 * t) else {
                return s.finish(it, false);
            };
            t = ta;
            s.x = xn;
            let (fx, g) = f.value_gradient(&s.x);
            s.fx = fx;
            s.g = g;
            s.history.push(fx);
        }
        let done = inf_norm(&s.g) < opts.grad_tol;
        s.finish(opts.max_iters, done)
    }
}

pub type MinimizerFactory = fn() -> Box<dyn Minimizer>;

/// Minimizers available by name.
#[derive(Clone)]
pub struct MinimizerRegistry {
    factories: BTreeMap<String, MinimizerFactory>,
}

impl MinimizerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `newton`, `lbfgs` and `gradient-descent`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("newton", || Box::new(Newton));
        r.register("lbfgs", || Box::new(Lbfgs::default()));
        r.register("gradient-descent", || Box::new(GradientDescent));
        r
    }

    pub fn global() -> &'static MinimizerRegistry {
        static REGISTRY: OnceLock<MinimizerRegistry> = OnceLock::new();
        REGISTRY.get_or_init(MinimizerRegistry::with_builtins)
    }

    pub fn register(&mut self, name: &str, factory: MinimizerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn Minimizer>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownMinimizer(name.to_string()))
    }
}

impl Default for MinimizerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
