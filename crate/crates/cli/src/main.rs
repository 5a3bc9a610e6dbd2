//! `ptorsion`: forward torsion solves, facet measures, the two inverse
//! solvers and an invariant suite, with JSON in and out.
//!
//! Exit status: 0 on success, 1 on invalid input (error JSON on stderr),
//! 2 when a solver runs out of budget (partial result still written).

mod io;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use torsion_core::error::PartialResult;
use torsion_core::fem::solve_body;
use torsion_core::logmink::{solve_log_minkowski, solve_log_minkowski_general, Density};
use torsion_core::minkowski::solve_minkowski;
use torsion_core::torsion::{cone_measure, facet_measure, report_body, CSV_HEADER};
use torsion_core::{AnisotropicNorm, DiscreteMeasure, Error, SolverConfig, TorsionSolution};

use crate::io::{emit, read_as, read_body, read_value, render, CliError, CliResult};

#[derive(Parser)]
#[command(name = "ptorsion", version, about = "Anisotropic p-torsional rigidity of convex polygons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Indent JSON output.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Args)]
struct Common {
    /// Norm as a JSON file or inline JSON, e.g. '{"kind":"lq","q":4}'.
    #[arg(long, default_value = r#"{"kind":"euclidean"}"#)]
    norm: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Solver settings JSON; the flags below override its fields.
    #[arg(long)]
    cfg: Option<String>,
    #[arg(long)]
    h_max: Option<f64>,
    /// Energy minimizer: newton, lbfgs or gradient-descent.
    #[arg(long)]
    method: Option<String>,
    /// Residual tolerance of the inverse solvers.
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn norm(&self) -> CliResult<AnisotropicNorm> {
        Ok(AnisotropicNorm::from_json(&read_value(&self.norm)?)?)
    }

    fn config(&self) -> CliResult<SolverConfig> {
        let mut cfg: SolverConfig = match &self.cfg {
            Some(arg) => read_as(arg)?,
            None => SolverConfig::default(),
        };
        if let Some(h) = self.h_max {
            cfg.h_max = h;
        }
        if let Some(m) = &self.method {
            cfg.method = m.clone();
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureKind {
    /// Torsional measure `S` (the Minkowski data).
    Surface,
    /// Cone torsional measure `τ^log` (the log-Minkowski data).
    Cone,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Suite {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Dirichlet problem and dump nodes, triangles and values.
    SolvePde {
        #[arg(long)]
        body: String,
        #[command(flatten)]
        common: Common,
    },
    /// Torsion report of one body, or a CSV sweep over several.
    Torsion {
        #[arg(long, required = true, num_args = 1..)]
        body: Vec<String>,
        /// Write one CSV row per body here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Facet measure of a body as a discrete measure on its normals.
    Measure {
        #[arg(long)]
        body: String,
        #[arg(long, value_enum, default_value = "surface")]
        kind: MeasureKind,
        #[command(flatten)]
        common: Common,
    },
    /// Polygon whose torsional measure is the given measure.
    Minkowski {
        #[arg(long)]
        measure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Polygon whose cone torsional measure is the given measure or density.
    LogMinkowski {
        #[arg(long, required_unless_present = "density", conflicts_with = "density")]
        measure: Option<String>,
        #[arg(long)]
        density: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
        k_levels: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant suite and write a pass/fail report.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        suite: Suite,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct SolutionDump<'a> {
    nodes: Vec<[f64; 2]>,
    triangles: &'a [[usize; 3]],
    values: &'a [f64],
    energy: f64,
    converged: bool,
    iterations: usize,
    grad_residual: f64,
}

impl<'a> From<&'a TorsionSolution> for SolutionDump<'a> {
    fn from(sol: &'a TorsionSolution) -> Self {
        SolutionDump {
            nodes: sol.mesh.nodes().iter().map(|x| [x.x, x.y]).collect(),
            triangles: sol.mesh.triangles(),
            values: &sol.nodal_values,
            energy: sol.energy,
            converged: sol.converged,
            iterations: sol.iterations,
            grad_residual: sol.grad_residual,
        }
    }
}

/// Writes the partial result carried by a non-convergence error, then
/// passes the error on.
fn with_partial<T>(result: Result<T, Error>, common: &Common, pretty: bool) -> CliResult<T> {
    match result {
        Ok(v) => Ok(v),
        Err(Error::NonConvergence {
            what,
            iterations,
            residual,
            partial: Some(partial),
        }) => {
            let text = match &partial {
                PartialResult::Torsion(sol) => render(&SolutionDump::from(sol.as_ref()), pretty),
                PartialResult::Minkowski(run) => render(run.as_ref(), pretty),
                PartialResult::LogMinkowski(run) => render(run.as_ref(), pretty),
            };
            emit(common.out.as_deref(), &text)?;
            Err(CliError::Core(Error::NonConvergence {
                what,
                iterations,
                residual,
                partial: None,
            }))
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let pretty = cli.pretty;
    match cli.command {
        Command::SolvePde { body, common } => {
            let body = read_body(&body)?;
            let sol = with_partial(solve_body(&body, &common.norm()?, common.p, &common.config()?), &common, pretty)?;
            emit(common.out.as_deref(), &render(&SolutionDump::from(&sol), pretty))
        }
        Command::Torsion { body, csv, common } => {
            let (norm, cfg) = (common.norm()?, common.config()?);
            let mut reports = Vec::with_capacity(body.len());
            let mut rows = format!("{CSV_HEADER}\n");
            for arg in &body {
                let b = read_body(arg)?;
                let (_, report) = with_partial(report_body(&b, &norm, common.p, &cfg), &common, pretty)?;
                rows.push_str(&report.csv_row(b.area()));
                rows.push('\n');
                reports.push(report);
            }
            if let Some(path) = &csv {
                emit(Some(path), &rows)?;
            }
            if reports.len() == 1 {
                emit(common.out.as_deref(), &render(&reports[0], pretty))
            } else {
                emit(common.out.as_deref(), &render(&reports, pretty))
            }
        }
        Command::Measure { body, kind, common } => {
            let b = read_body(&body)?;
            let sol = with_partial(solve_body(&b, &common.norm()?, common.p, &common.config()?), &common, pretty)?;
            let weights = match kind {
                MeasureKind::Surface => facet_measure(&sol, &b)?,
                MeasureKind::Cone => cone_measure(&sol, &b)?,
            };
            let mu = DiscreteMeasure::from_parts(b.normals(), &weights)?;
            emit(common.out.as_deref(), &render(&mu, pretty))
        }
        Command::Minkowski { measure, common } => {
            let mu: DiscreteMeasure = read_as(&measure)?;
            let run = with_partial(solve_minkowski(&mu, &common.norm()?, common.p, &common.config()?), &common, pretty)?;
            emit(common.out.as_deref(), &render(&run, pretty))
        }
        Command::LogMinkowski {
            measure,
            density,
            k_levels,
            common,
        } => {
            let (norm, cfg) = (common.norm()?, common.config()?);
            if let Some(m) = measure {
                let mu: DiscreteMeasure = read_as(&m)?;
                let run = with_partial(solve_log_minkowski(&mu, &norm, common.p, &cfg), &common, pretty)?;
                return emit(common.out.as_deref(), &render(&run, pretty));
            }
            let density: Density = read_as(density.as_deref().expect("clap requires one input"))?;
            let run = with_partial(
                solve_log_minkowski_general(&density, &norm, common.p, &k_levels, &cfg),
                &common,
                pretty,
            )?;
            emit(common.out.as_deref(), &render(&run, pretty))
        }
        Command::Verify { suite, seed, out } => {
            let report = verify::run_suite(suite, seed);
            emit(out.as_deref(), &render(&report, true))?;
            for c in &report.checks {
                eprintln!("{:<4} {}", c.status, c.name);
            }
            match report.failed {
                0 => Ok(()),
                failed => Err(CliError::VerifyFailed { failed }),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("reports serialize"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
