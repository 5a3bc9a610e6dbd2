//! Acceptance criteria, one pass/fail line each on stderr.
//!
//! Run with `cargo test -p torsion-cli --test acceptance`. The lines bypass the
//! test harness's output capture so they show on success too.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torsion_core::fem::solve_body;
use torsion_core::geometry::{hausdorff_distance, random_convex_polygon, Atom};
use torsion_core::logmink::{
    density_mass_check, inner_maximizer, mass_threshold, objective_log, solve_log_minkowski,
    solve_log_minkowski_general, subspace_mass_check, Density,
};
use torsion_core::minkowski::{measure_residual, solve_minkowski};
use torsion_core::torsion::{
    cone_measure, facet_measure, log_variational_check, reference_disk, reference_square_tau, report_body,
    saint_venant_check, torsion_volume, variational_derivative_check, TorsionReport,
};
use torsion_core::{measure_degree, tau_degree, AnisotropicNorm, DiscreteMeasure, Polytope2, Result, SolverConfig, Vec2};

const SEED: u64 = 7;
const SUITE_BODIES: usize = 10;
const SUITE_H: f64 = 0.03;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn line(text: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{text}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn square() -> Polytope2 {
    Polytope2::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap()
}

fn euclid() -> AnisotropicNorm {
    AnisotropicNorm::euclidean()
}

fn cfg(h: f64) -> SolverConfig {
    SolverConfig::default().with_h(h)
}

fn suite_norms() -> Vec<(&'static str, AnisotropicNorm)> {
    vec![
        ("euclidean", euclid()),
        ("lq4", AnisotropicNorm::lq(4.0).unwrap()),
        ("smoothed_l1", AnisotropicNorm::smoothed_l1(0.05).unwrap()),
    ]
}

fn suite_bodies() -> Vec<Polytope2> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..SUITE_BODIES)
        .map(|_| {
            let n = rng.gen_range(4..=8);
            random_convex_polygon(&mut rng, n, 0.2)
        })
        .collect()
}

/// One report per (body, norm, p) of the suite at mesh size `h`.
fn suite_reports(h: f64) -> Vec<(String, Polytope2, AnisotropicNorm, f64, Result<TorsionReport>)> {
    let mut out = Vec::new();
    for (i, body) in suite_bodies().into_iter().enumerate() {
        for (name, norm) in suite_norms() {
            for p in [2.0, 3.0] {
                let rep = report_body(&body, &norm, p, &cfg(h)).map(|(_, r)| r);
                out.push((format!("body{i}/{name}/p{p}"), body.clone(), norm.clone(), p, rep));
            }
        }
    }
    out
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn c1_disk() -> Outcome {
    let disk = Polytope2::regular(128, 1.0, 0.0).unwrap();
    let t = Instant::now();
    let sol2 = solve_body(&disk, &euclid(), 2.0, &cfg(0.02)).unwrap();
    let t2 = t.elapsed();
    let e2 = rel(torsion_volume(&sol2), PI / 8.0);
    let t = Instant::now();
    let sol3 = solve_body(&disk, &euclid(), 3.0, &cfg(0.02)).unwrap();
    let t3 = t.elapsed();
    let e3 = rel(sol3.max_value(), reference_disk(3.0, 1.0).0);
    outcome(
        e2 <= 0.015 && e3 <= 0.02 && within(t2, 30) && within(t3, 30),
        format!("p=2 tau err {e2:.2e} (<=1.5e-2, {t2:.1?}); p=3 center err {e3:.2e} (<=2e-2, {t3:.1?})"),
    )
}

fn c2_square() -> Outcome {
    let t = Instant::now();
    let sol = solve_body(&square(), &euclid(), 2.0, &cfg(0.02)).unwrap();
    let elapsed = t.elapsed();
    let oracle = reference_square_tau();
    let e = rel(torsion_volume(&sol), oracle);
    outcome(
        e <= 0.02 && within(elapsed, 30) && (oracle - 0.03514).abs() < 1e-5,
        format!("oracle {oracle:.5}, err {e:.2e} (<=2e-2, {elapsed:.1?})"),
    )
}

fn c3_c4_c7_c8(reports: &[(String, Polytope2, AnisotropicNorm, f64, Result<TorsionReport>)], fine: &[(String, Polytope2, AnisotropicNorm, f64, Result<TorsionReport>)], elapsed: Duration) -> [Outcome; 4] {
    let mut errors = Vec::new();
    let (mut gap, mut poho, mut poho_fine, mut centroid, mut sv_worst): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut sv_violations = 0;
    for (name, body, norm, p, rep) in reports {
        match rep {
            Ok(rep) => {
                gap = gap.max(rep.discretization_error_estimate);
                poho = poho.max(rep.pohozaev_residual);
                centroid = centroid.max(rep.centroid_norm());
                let sv = saint_venant_check(body, norm, *p, rep.tau_volume).unwrap();
                sv_worst = sv_worst.max(rep.tau_volume / sv.bound);
                if !sv.satisfied {
                    sv_violations += 1;
                }
            }
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    for (name, _, _, _, rep) in fine {
        match rep {
            Ok(rep) => poho_fine = poho_fine.max(rep.pohozaev_residual),
            Err(e) => errors.push(format!("{name} (refined): {e}")),
        }
    }
    let ok = errors.is_empty();
    let note = if ok { String::new() } else { format!("; failed solves: {}", errors.join(", ")) };

    let disk = Polytope2::regular(128, 1.0, 0.0).unwrap();
    let disk_tau = torsion_volume(&solve_body(&disk, &euclid(), 2.0, &cfg(0.02)).unwrap());
    let slack = saint_venant_check(&disk, &euclid(), 2.0, disk_tau).unwrap().slack;
    // The analytic disk slack of this bound is 1 (equality for the Wulff shape).
    let slack_err = (slack - 1.0).abs();

    [
        outcome(
            ok && gap <= 0.03 && within(elapsed, 600),
            format!("{} solves, max pairwise gap {gap:.2e} (<=3e-2), {elapsed:.1?}{note}", reports.len()),
        ),
        outcome(
            ok && poho < 0.03 && poho_fine < poho,
            format!("max residual h={SUITE_H}: {poho:.2e} (<3e-2); h={}: {poho_fine:.2e}{note}", SUITE_H / 2.0),
        ),
        outcome(ok && centroid < 1e-2, format!("max |sum S_k u_k|/sum S_k {centroid:.2e} (<1e-2){note}")),
        outcome(
            ok && sv_violations == 0 && slack_err <= 0.05,
            format!("worst tau/bound {sv_worst:.3}, violations {sv_violations}; disk slack {slack:.4} vs 1 (err {slack_err:.2e} <=5e-2){note}"),
        ),
    ]
}

fn c5_homogeneity() -> Outcome {
    let lambdas = [0.5, 0.75, 1.0, 1.5, 2.0];
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [2.0, 3.0] {
        let (mut x, mut tau, mut s0) = (Vec::new(), Vec::new(), Vec::new());
        for l in lambdas {
            let body = square().scaled(l);
            let sol = solve_body(&body, &euclid(), p, &cfg(0.02)).unwrap();
            x.push(l.ln());
            tau.push(torsion_volume(&sol).ln());
            s0.push(facet_measure(&sol, &body).unwrap()[0].ln());
        }
        let ts = slope(&x, &tau);
        pass &= (ts - tau_degree(p)).abs() <= 0.01;
        parts.push(format!("p={p} slope {ts:.5} vs {:.5}", tau_degree(p)));
        if p == 2.0 {
            let ss = slope(&x, &s0);
            pass &= rel(ss, measure_degree(p)) <= 0.01;
            parts.push(format!("facet slope {ss:.5} vs {}", measure_degree(p)));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c6_variation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(variational_derivative_check(&square(), &f, 1e-3, &euclid(), 2.0, &cfg(0.02)).unwrap().rel_gap);
    }
    let log_gap = log_variational_check(&square(), &[1.0; 4], 1e-3, &euclid(), 2.0, &cfg(0.02)).unwrap().rel_gap;
    outcome(
        worst <= 0.03 && log_gap <= 0.02,
        format!("max gap over 5 f {worst:.2e} (<=3e-2); dilation gap {log_gap:.2e} (<=2e-2)"),
    )
}

fn minkowski_round_trip(body: &Polytope2) -> Result<(f64, f64, Duration)> {
    let t = Instant::now();
    let e = euclid();
    let sol = solve_body(body, &e, 2.0, &cfg(0.02 * body.diameter()))?;
    let mu = DiscreteMeasure::from_parts(body.normals(), &facet_measure(&sol, body)?)?;
    let run = solve_minkowski(&mu, &e, 2.0, &cfg(0.02))?;
    let aligned = body.translated(-body.centroid());
    let hd = hausdorff_distance(&run.solution, &aligned) / body.diameter();
    let res = measure_residual(&run.solution, &mu, &e, 2.0, &cfg(0.02))?;
    Ok((hd, res.into_iter().fold(0.0, f64::max), t.elapsed()))
}

fn c9_minkowski() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, body) in [("square", square()), ("rectangle 2:1", Polytope2::rectangle(-1.0, 1.0, -0.5, 0.5).unwrap())] {
        match minkowski_round_trip(&body) {
            Ok((hd, res, t)) => {
                pass &= hd <= 0.03 && res <= 0.05 && within(t, 900);
                parts.push(format!("{name}: hausdorff {hd:.2e} (<=3e-2), residual {res:.2e} (<=5e-2), {t:.1?}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c10_log_minkowski() -> Outcome {
    let e = euclid();
    let body = square();
    let sol = solve_body(&body, &e, 2.0, &cfg(0.02)).unwrap();
    let mu = DiscreteMeasure::from_parts(body.normals(), &cone_measure(&sol, &body).unwrap()).unwrap();
    let square_part = solve_log_minkowski(&mu, &e, 2.0, &cfg(0.02))
        .map(|run| (hausdorff_distance(&run.solution, &body) / body.diameter(), run.stationarity_residual));

    let unit = Polytope2::regular(5, 1.0 / (PI / 5.0).cos(), PI / 5.0).unwrap();
    let tau1 = torsion_volume(&solve_body(&unit, &e, 2.0, &cfg(0.01)).unwrap());
    let alpha = 0.7;
    let penta = DiscreteMeasure::equispaced(5, alpha, 0.0).unwrap();
    let oracle = unit.scaled((5.0 * alpha / tau1).powf(1.0 / tau_degree(2.0)));
    let penta_part = solve_log_minkowski(&penta, &e, 2.0, &cfg(0.02))
        .map(|run| hausdorff_distance(&run.solution, &oracle) / oracle.diameter());

    match (square_part, penta_part) {
        (Ok((hd, res)), Ok(phd)) => outcome(
            hd <= 0.03 && res <= 0.05 && phd <= 0.03,
            format!("square hausdorff {hd:.2e} (<=3e-2), stationarity {res:.2e} (<=5e-2); pentagon hausdorff {phd:.2e} (<=3e-2)"),
        ),
        (a, b) => outcome(false, format!("square {:?}; pentagon {:?}", a.err(), b.err())),
    }
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Polytope2, DiscreteMeasure) {
    loop {
        let shift = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let body = random_convex_polygon(rng, 3, 0.1).translated(shift);
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

/// Best objective value on a 400 x 400 grid over the bounding box.
fn grid_best(body: &Polytope2, mu: &DiscreteMeasure) -> f64 {
    let v = body.vertices();
    let (x0, x1) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (y0, y1) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.y), b.max(p.y)));
    let h: Vec<f64> = mu.atoms().iter().map(|a| body.support_function(a.dir)).collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=400 {
        for j in 0..=400 {
            let x = Vec2::new(x0 + (x1 - x0) * i as f64 / 400.0, y0 + (y1 - y0) * j as f64 / 400.0);
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

fn c11_inner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut excess, mut spread): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for _ in 0..20 {
        let (body, mu) = random_pair(&mut rng);
        let newton = match (objective_log(&body, &mu), inner_maximizer(&body, &mu, None)) {
            (Ok(v), Ok(m)) => (v, m.eta),
            (a, b) => return outcome(false, format!("inner maximizer failed: {:?} {:?}", a.err(), b.err())),
        };
        excess = excess.max(grid_best(&body, &mu) - newton.0);
        let v = body.vertices();
        for _ in 0..20 {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let x = v[0] + (v[1] - v[0]) * (0.98 * a + 0.01) + (v[2] - v[0]) * (0.98 * b + 0.01);
            match inner_maximizer(&body, &mu, Some(x)) {
                Ok(m) => spread = spread.max((m.eta - newton.1).norm() / body.diameter()),
                Err(e) => return outcome(false, format!("multistart from {x:?}: {e}")),
            }
        }
    }
    outcome(
        excess <= 1e-8 && spread <= 1e-8,
        format!("grid excess {excess:.2e} (<=1e-8); multistart spread {spread:.2e} (<=1e-8), 20 pairs"),
    )
}

fn c12_mass() -> Outcome {
    let threshold = mass_threshold(2.0);
    let axes = DiscreteMeasure::equispaced(4, 1.0, 0.0).unwrap();
    let check = subspace_mass_check(&axes, 2.0).unwrap();
    let spikes = Density::AtomsPlusUniform {
        atoms: (0..4)
            .map(|k| Atom {
                dir: Vec2::new((k as f64 * PI / 2.0).cos(), (k as f64 * PI / 2.0).sin()),
                weight: 1.0,
            })
            .collect(),
        uniform: 0.0,
    };
    let dcheck = density_mass_check(&spikes, 2.0).unwrap();
    let rejected = solve_log_minkowski_general(&spikes, &euclid(), 2.0, &[8], &cfg(0.05))
        .err()
        .map(|e| e.kind() == "mass_inequality_violated")
        .unwrap_or(false);
    outcome(
        threshold == 0.5 && !check.ok && !dcheck.ok && rejected,
        format!(
            "threshold {threshold}; boundary ratio {} rejected: measure {}, density {}, solver {rejected}",
            check.worst_ratio, !check.ok, !dcheck.ok
        ),
    )
}

fn c13_general() -> Outcome {
    let t = Instant::now();
    let run = match solve_log_minkowski_general(&Density::Uniform { value: 1.0 }, &euclid(), 2.0, &[8, 16, 32], &cfg(0.03)) {
        Ok(run) => run,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = t.elapsed();
    let b = run.finest();
    let ratio = 4.0 * PI * b.area() / b.perimeter().powi(2);
    let steps = &run.hausdorff_steps;
    let monotone = steps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ratio >= 0.99 && monotone && within(elapsed, 1800),
        format!("isoperimetric ratio {ratio:.5} (>=0.99) at k=32; level distances {steps:?}; {elapsed:.1?}"),
    )
}

fn verify_bytes(threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_ptorsion"))
        .args(["verify", "--suite", "fast", "--seed", "7"])
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("ptorsion runs");
    out.stdout
}

fn c14_determinism() -> Outcome {
    let (a, b) = (verify_bytes("1"), verify_bytes("4"));
    outcome(
        !a.is_empty() && a == b,
        format!("{} bytes with 1 thread, {} with 4, identical: {}", a.len(), b.len(), a == b),
    )
}

#[test]
fn acceptance_criteria() {
    let t = Instant::now();
    let coarse = suite_reports(SUITE_H);
    let suite_time = t.elapsed();
    let fine = suite_reports(SUITE_H / 2.0);
    let [c3, c4, c7, c8] = c3_c4_c7_c8(&coarse, &fine, suite_time);

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "disk oracle", c1_disk()),
        (2, "square oracle", c2_square()),
        (3, "three-way tau consistency", c3),
        (4, "pohozaev residual", c4),
        (5, "homogeneity", c5_homogeneity()),
        (6, "variational formula", c6_variation()),
        (7, "centroid-zero necessity", c7),
        (8, "saint-venant bound", c8),
        (9, "minkowski round trip", c9_minkowski()),
        (10, "log-minkowski round trip", c10_log_minkowski()),
        (11, "inner maximizer", c11_inner()),
        (12, "subspace mass inequality", c12_mass()),
        (13, "general-measure pipeline", c13_general()),
        (14, "determinism", c14_determinism()),
    ];
    line("");
    let mut failed = Vec::new();
    for (id, name, o) in &results {
        line(&format!("{} {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail));
        if !o.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
