//! The invariant suite behind `ptorsion verify`.
//!
//! Every check reports `observed ≤ tolerance` as a pass. Inputs are drawn from
//! a seeded ChaCha stream and the report carries no timings, so the same seed
//! gives byte-identical reports.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use torsion_core::fem::solve_body;
use torsion_core::geometry::{hausdorff_distance, random_convex_polygon};
use torsion_core::logmink::{
    inner_maximizer, mass_threshold, objective_log, solve_log_minkowski, solve_log_minkowski_general,
    subspace_mass_check, Density,
};
use torsion_core::minkowski::{measure_residual, solve_minkowski};
use torsion_core::torsion::{
    cone_measure, facet_measure, log_variational_check, reference_disk, reference_square_tau, report_body,
    saint_venant_check, torsion_volume, variational_derivative_check,
};
use torsion_core::{measure_degree, tau_degree, AnisotropicNorm, DiscreteMeasure, Polytope2, SolverConfig, Vec2};

use crate::Suite;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: &'static str,
    pub observed: f64,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub suite: &'static str,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
}

struct Sizes {
    bodies: usize,
    norms: Vec<AnisotropicNorm>,
    h: f64,
    perturbations: usize,
    pairs: usize,
}

struct Runner {
    checks: Vec<Check>,
}

impl Runner {
    fn check(&mut self, name: impl Into<String>, observed: f64, tolerance: f64) {
        let status = if observed <= tolerance { "pass" } else { "fail" };
        self.checks.push(Check {
            name: name.into(),
            status,
            observed,
            tolerance,
        });
    }

    /// Runs `f`; an error counts as a failure with `observed = ∞`.
    fn attempt(&mut self, name: &str, tolerance: f64, f: impl FnOnce() -> torsion_core::Result<f64>) {
        match f() {
            Ok(v) => self.check(name, v, tolerance),
            Err(e) => {
                log::warn!("{name}: {e}");
                self.check(name, f64::INFINITY, tolerance);
            }
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn square() -> Polytope2 {
    Polytope2::rectangle(-0.5, 0.5, -0.5, 0.5).expect("unit square")
}

fn euclid() -> AnisotropicNorm {
    AnisotropicNorm::euclidean()
}

pub fn run_suite(suite: Suite, seed: u64) -> Report {
    let sizes = match suite {
        Suite::Fast => Sizes {
            bodies: 3,
            norms: vec![euclid(), AnisotropicNorm::lq(4.0).expect("q = 4")],
            h: 0.05,
            perturbations: 2,
            pairs: 5,
        },
        Suite::Full => Sizes {
            bodies: 10,
            norms: vec![
                euclid(),
                AnisotropicNorm::lq(4.0).expect("q = 4"),
                AnisotropicNorm::smoothed_l1(0.05).expect("eps = 0.05"),
            ],
            h: 0.03,
            perturbations: 5,
            pairs: 20,
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Runner { checks: Vec::new() };
    forward(&mut r);
    body_suite(&mut r, &sizes, &mut rng);
    scaling(&mut r);
    variations(&mut r, &sizes, &mut rng);
    inner(&mut r, &sizes, &mut rng);
    inverse(&mut r, matches!(suite, Suite::Full));
    let failed = r.checks.iter().filter(|c| c.status == "fail").count();
    Report {
        suite: match suite {
            Suite::Fast => "fast",
            Suite::Full => "full",
        },
        seed,
        passed: r.checks.len() - failed,
        failed,
        checks: r.checks,
    }
}

fn forward(r: &mut Runner) {
    let disk = Polytope2::regular(128, 1.0, 0.0).expect("128-gon");
    let cfg = SolverConfig::default().with_h(0.03);
    r.attempt("forward.disk_p2_tau", 0.015, || {
        let sol = solve_body(&disk, &euclid(), 2.0, &cfg)?;
        Ok(rel(torsion_volume(&sol), reference_disk(2.0, 1.0).1))
    });
    r.attempt("forward.disk_p3_center", 0.02, || {
        let sol = solve_body(&disk, &euclid(), 3.0, &cfg)?;
        Ok(rel(sol.max_value(), reference_disk(3.0, 1.0).0))
    });
    r.attempt("forward.square_p2_tau", 0.02, || {
        let sol = solve_body(&square(), &euclid(), 2.0, &SolverConfig::default().with_h(0.02))?;
        Ok(rel(torsion_volume(&sol), reference_square_tau()))
    });
    r.attempt("torsion.saint_venant_disk_slack", 0.05, || {
        let sol = solve_body(&disk, &euclid(), 2.0, &cfg)?;
        let sv = saint_venant_check(&disk, &euclid(), 2.0, torsion_volume(&sol))?;
        Ok((sv.slack - 1.0).abs())
    });
}

/// Three-way agreement, Pohozaev, centroid and Saint-Venant on random bodies.
fn body_suite(r: &mut Runner, sizes: &Sizes, rng: &mut ChaCha8Rng) {
    let bodies: Vec<Polytope2> = (0..sizes.bodies)
        .map(|_| {
            let n = rng.gen_range(4..=8);
            random_convex_polygon(rng, n, 0.2)
        })
        .collect();
    let cfg = SolverConfig::default().with_h(sizes.h);
    let (mut gap, mut poho, mut centroid, mut sv): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut failures = 0;
    for body in &bodies {
        for norm in &sizes.norms {
            for p in [2.0, 3.0] {
                match report_body(body, norm, p, &cfg).and_then(|(_, rep)| {
                    let s = saint_venant_check(body, norm, p, rep.tau_volume)?;
                    Ok((rep, s))
                }) {
                    Ok((rep, s)) => {
                        gap = gap.max(rep.discretization_error_estimate);
                        poho = poho.max(rep.pohozaev_residual);
                        centroid = centroid.max(rep.centroid_norm());
                        sv = sv.max(1.0 / s.slack);
                    }
                    Err(e) => {
                        log::warn!("suite body: {e}");
                        failures += 1;
                    }
                }
            }
        }
    }
    let bad = if failures > 0 { f64::INFINITY } else { 0.0 };
    r.check("torsion.three_way_max_gap", gap.max(bad), 0.03);
    r.check("torsion.pohozaev_max_residual", poho.max(bad), 0.03);
    r.check("torsion.centroid_max_residual", centroid.max(bad), 1e-2);
    r.check("torsion.saint_venant_max_ratio", sv.max(bad), 1.0);
}

fn scaling(r: &mut Runner) {
    let cfg = SolverConfig::default().with_h(0.02);
    let lambdas = [0.5, 0.75, 1.0, 1.5, 2.0];
    for p in [2.0, 3.0] {
        let fit = (|| {
            let (mut x, mut tau, mut s0) = (Vec::new(), Vec::new(), Vec::new());
            for l in lambdas {
                let body = square().scaled(l);
                let sol = solve_body(&body, &euclid(), p, &cfg)?;
                x.push(l.ln());
                tau.push(torsion_volume(&sol).ln());
                s0.push(facet_measure(&sol, &body)?[0].ln());
            }
            Ok::<_, torsion_core::Error>((slope(&x, &tau), slope(&x, &s0)))
        })();
        let (tau_slope, s_slope) = fit.unwrap_or((f64::INFINITY, f64::INFINITY));
        r.check(format!("torsion.homogeneity_slope_p{p}"), (tau_slope - tau_degree(p)).abs(), 0.01);
        if p == 2.0 {
            r.check("torsion.facet_measure_scaling_p2", rel(s_slope, measure_degree(p)), 0.01);
        }
    }
}

fn variations(r: &mut Runner, sizes: &Sizes, rng: &mut ChaCha8Rng) {
    let cfg = SolverConfig::default().with_h(0.02);
    let body = square();
    let fs: Vec<Vec<f64>> = (0..sizes.perturbations)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    r.attempt("torsion.variational_max_gap", 0.03, || {
        let mut worst: f64 = 0.0;
        for f in &fs {
            worst = worst.max(variational_derivative_check(&body, f, 1e-3, &euclid(), 2.0, &cfg)?.rel_gap);
        }
        Ok(worst)
    });
    r.attempt("torsion.log_variational_dilation_gap", 0.02, || {
        Ok(log_variational_check(&body, &[1.0; 4], 1e-3, &euclid(), 2.0, &cfg)?.rel_gap)
    });
}

/// Random triangle and 3-atom measure with every gap below `π`.
fn random_pair(rng: &mut ChaCha8Rng) -> (Polytope2, DiscreteMeasure) {
    loop {
        let body = random_convex_polygon(rng, 3, 0.1).translated(Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut angles: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps = [angles[1] - angles[0], angles[2] - angles[1], 2.0 * PI + angles[0] - angles[2]];
        if gaps.iter().all(|g| *g < PI - 0.1) {
            let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
            if let Ok(mu) = DiscreteMeasure::from_angles(&angles, &weights) {
                return (body, mu);
            }
        }
    }
}

const GRID: usize = 400;

fn inner(r: &mut Runner, sizes: &Sizes, rng: &mut ChaCha8Rng) {
    let pairs: Vec<(Polytope2, DiscreteMeasure)> = (0..sizes.pairs).map(|_| random_pair(rng)).collect();
    let starts: Vec<Vec<(f64, f64)>> = pairs
        .iter()
        .map(|_| (0..20).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect())
        .collect();
    r.attempt("logmink.inner_grid_excess", 1e-8, || {
        let mut worst = f64::NEG_INFINITY;
        for (body, mu) in &pairs {
            let value = objective_log(body, mu)?;
            worst = worst.max(grid_best(body, mu) - value);
        }
        Ok(worst)
    });
    r.attempt("logmink.inner_multistart_spread", 1e-8, || {
        let mut worst: f64 = 0.0;
        for ((body, mu), starts) in pairs.iter().zip(&starts) {
            let eta = inner_maximizer(body, mu, None)?.eta;
            let v = body.vertices();
            for &(a, b) in starts {
                // Uniform point of the triangle, pulled slightly inward.
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                let x = v[0] + (v[1] - v[0]) * (0.98 * a + 0.01) + (v[2] - v[0]) * (0.98 * b + 0.01);
                let e = inner_maximizer(body, mu, Some(x))?.eta;
                worst = worst.max((e - eta).norm() / body.diameter());
            }
        }
        Ok(worst)
    });
    r.attempt("logmink.inner_hessian_max_eigenvalue", 0.0, || {
        let mut worst = f64::NEG_INFINITY;
        for (body, mu) in &pairs {
            let ev = inner_maximizer(body, mu, None)?.hessian.symmetric_eigenvalues();
            worst = worst.max(ev.max());
        }
        Ok(if worst < 0.0 { 0.0 } else { worst })
    });
}

/// Largest `Σ α_k log(h_k − x·u_k)` over a grid of the bounding box.
fn grid_best(body: &Polytope2, mu: &DiscreteMeasure) -> f64 {
    let v = body.vertices();
    let (mut lo, mut hi) = (v[0], v[0]);
    for x in v {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    let h: Vec<f64> = mu.atoms().iter().map(|a| body.support_function(a.dir)).collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=GRID {
        for j in 0..=GRID {
            let x = Vec2::new(
                lo.x + (hi.x - lo.x) * i as f64 / GRID as f64,
                lo.y + (hi.y - lo.y) * j as f64 / GRID as f64,
            );
            let mut val = 0.0;
            let mut inside = true;
            for (a, h) in mu.atoms().iter().zip(&h) {
                let d = h - a.dir.dot(&x);
                if d <= 0.0 {
                    inside = false;
                    break;
                }
                val += a.weight * d.ln();
            }
            if inside {
                best = best.max(val);
            }
        }
    }
    best
}

fn inverse(r: &mut Runner, full: bool) {
    r.check("mass.threshold_p2", (mass_threshold(2.0) - 0.5).abs(), 0.0);
    let axes = DiscreteMeasure::equispaced(4, 1.0, 0.0).expect("four atoms");
    r.attempt("mass.boundary_case_rejected", 0.0, || {
        Ok(if subspace_mass_check(&axes, 2.0)?.ok { 1.0 } else { 0.0 })
    });

    let e = euclid();
    let forward_cfg = SolverConfig::default().with_h(0.02);
    let inverse_cfg = SolverConfig::default().with_h(0.02);
    let mut bodies = vec![("square", square())];
    if full {
        bodies.push(("rectangle_2_1", Polytope2::rectangle(-1.0, 1.0, -0.5, 0.5).expect("rectangle")));
    }
    for (name, body) in &bodies {
        let attempt = (|| {
            let sol = solve_body(body, &e, 2.0, &forward_cfg.clone().with_h(0.02 * body.diameter()))?;
            let mu = DiscreteMeasure::from_parts(body.normals(), &facet_measure(&sol, body)?)?;
            let run = solve_minkowski(&mu, &e, 2.0, &inverse_cfg)?;
            let aligned = body.translated(-body.centroid());
            let hd = hausdorff_distance(&run.solution, &aligned) / body.diameter();
            let res = measure_residual(&run.solution, &mu, &e, 2.0, &inverse_cfg)?;
            Ok::<_, torsion_core::Error>((hd, res.into_iter().fold(0.0, f64::max)))
        })();
        let (hd, res) = attempt.unwrap_or_else(|err| {
            log::warn!("minkowski {name}: {err}");
            (f64::INFINITY, f64::INFINITY)
        });
        r.check(format!("minkowski.{name}_hausdorff"), hd, 0.03);
        r.check(format!("minkowski.{name}_max_residual"), res, 0.05);
    }

    let attempt = (|| {
        let body = square();
        let sol = solve_body(&body, &e, 2.0, &forward_cfg)?;
        let mu = DiscreteMeasure::from_parts(body.normals(), &cone_measure(&sol, &body)?)?;
        let run = solve_log_minkowski(&mu, &e, 2.0, &inverse_cfg)?;
        Ok::<_, torsion_core::Error>((
            hausdorff_distance(&run.solution, &body) / body.diameter(),
            run.stationarity_residual,
        ))
    })();
    let (hd, res) = attempt.unwrap_or((f64::INFINITY, f64::INFINITY));
    r.check("logmink.square_hausdorff", hd, 0.03);
    r.check("logmink.square_stationarity", res, 0.05);

    r.attempt("logmink.pentagon_hausdorff", 0.03, || {
        let unit = Polytope2::regular(5, 1.0 / (PI / 5.0).cos(), PI / 5.0)?;
        let tau1 = torsion_volume(&solve_body(&unit, &e, 2.0, &SolverConfig::default().with_h(0.01))?);
        let alpha = 0.7;
        let mu = DiscreteMeasure::equispaced(5, alpha, 0.0)?;
        let run = solve_log_minkowski(&mu, &e, 2.0, &inverse_cfg)?;
        let oracle = unit.scaled((5.0 * alpha / tau1).powf(1.0 / tau_degree(2.0)));
        Ok(hausdorff_distance(&run.solution, &oracle) / oracle.diameter())
    });

    if full {
        let attempt = (|| {
            let run = solve_log_minkowski_general(
                &Density::Uniform { value: 1.0 },
                &e,
                2.0,
                &[8, 16, 32],
                &SolverConfig::default().with_h(0.03),
            )?;
            let b = run.finest();
            let ratio = 4.0 * PI * b.area() / b.perimeter().powi(2);
            let increases = run.hausdorff_steps.windows(2).filter(|w| w[1] >= w[0]).count();
            Ok::<_, torsion_core::Error>((1.0 - ratio, increases as f64))
        })();
        let (deficit, increases) = attempt.unwrap_or((f64::INFINITY, f64::INFINITY));
        r.check("logmink.uniform_isoperimetric_deficit", deficit, 0.01);
        r.check("logmink.uniform_hausdorff_increases", increases, 0.0);
    }
}
