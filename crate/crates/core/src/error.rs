//! Error type shared by every module.
//!
//! Each variant maps to a stable machine-readable `kind()` string; the CLI
//! serializes errors as `{kind, message, context}`.

use serde::Serialize;
use thiserror::Error;

use crate::fem::TorsionSolution;
use crate::logmink::LogMinkowskiRun;
use crate::minkowski::MinkowskiRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Last iterate of a solve that ran out of budget.
#[derive(Debug, Clone)]
pub enum PartialResult {
    Torsion(Box<TorsionSolution>),
    Minkowski(Box<MinkowskiRun>),
    LogMinkowski(Box<LogMinkowskiRun>),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent p = {0}; expected 1 < p < inf")]
    InvalidP(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("gradient of the norm is undefined at |xi| = {norm:e}")]
    Domain { norm: f64 },

    #[error("unknown norm kind `{0}`")]
    UnknownNorm(String),

    #[error("unknown minimizer `{0}`")]
    UnknownMinimizer(String),

    #[error("halfspace normals are concentrated on a closed hemisphere; the intersection is unbounded")]
    UnboundedRegion,

    #[error("halfspace intersection has empty interior (area {area:e})")]
    EmptyInterior { area: f64 },

    #[error("facet {facet} degenerated (length {length:e})")]
    FacetDeath { facet: usize, length: f64 },

    #[error("origin is not interior to the body (min offset {min_offset:e})")]
    OriginNotInterior { min_offset: f64 },

    #[error("measure centroid is not zero: |sum a_k u_k| / |mu| = {relative:e}")]
    CentroidNonzero { relative: f64 },

    #[error("measure is concentrated on a closed hemisphere (margin {margin:e})")]
    HemisphereConcentrated { margin: f64 },

    #[error("directions are not in general position (min |det| = {min_det:e})")]
    GeneralPosition { min_det: f64 },

    #[error("subspace mass inequality violated: worst ratio {worst_ratio} >= threshold {threshold}")]
    MassInequality { worst_ratio: f64, threshold: f64 },

    #[error("polytope normals do not match the measure directions")]
    DirectionMismatch,

    #[error("mesh is invalid: {0}")]
    InvalidMesh(String),

    #[error("inner maximizer diverged: {0}")]
    Divergence(String),

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        partial: Option<PartialResult>,
    },

    #[error("nonpositive torsional rigidity {0:e}")]
    NonPositiveTau(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidP(_) => "invalid_p",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Precondition(_) => "precondition",
            Error::Domain { .. } => "domain",
            Error::UnknownNorm(_) => "unknown_norm",
            Error::UnknownMinimizer(_) => "unknown_minimizer",
            Error::UnboundedRegion => "unbounded_region",
            Error::EmptyInterior { .. } => "empty_interior",
            Error::FacetDeath { .. } => "facet_death",
            Error::OriginNotInterior { .. } => "origin_not_interior",
            Error::CentroidNonzero { .. } => "centroid_nonzero",
            Error::HemisphereConcentrated { .. } => "hemisphere_concentrated",
            Error::GeneralPosition { .. } => "general_position",
            Error::MassInequality { .. } => "mass_inequality_violated",
            Error::DirectionMismatch => "direction_mismatch",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::Divergence(_) => "divergence",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NonPositiveTau(_) => "nonpositive_tau",
            Error::InvalidInput(_) => "invalid_input",
        }
    }

    /// Structured payload for machine consumers.
    pub fn report(&self) -> ErrorReport {
        let context = match self {
            Error::InvalidP(p) => serde_json::json!({ "p": p }),
            Error::Domain { norm } => serde_json::json!({ "norm": norm }),
            Error::EmptyInterior { area } => serde_json::json!({ "area": area }),
            Error::FacetDeath { facet, length } => {
                serde_json::json!({ "facet": facet, "length": length })
            }
            Error::OriginNotInterior { min_offset } => {
                serde_json::json!({ "min_offset": min_offset })
            }
            Error::CentroidNonzero { relative } => serde_json::json!({ "relative": relative }),
            Error::HemisphereConcentrated { margin } => serde_json::json!({ "margin": margin }),
            Error::GeneralPosition { min_det } => serde_json::json!({ "min_det": min_det }),
            Error::MassInequality {
                worst_ratio,
                threshold,
            } => serde_json::json!({ "worst_ratio": worst_ratio, "threshold": threshold }),
            Error::NonConvergence {
                what,
                iterations,
                residual,
                ..
            } => serde_json::json!({ "what": what, "iterations": iterations, "residual": residual }),
            Error::NonPositiveTau(t) => serde_json::json!({ "tau": t }),
            _ => serde_json::Value::Null,
        };
        ErrorReport {
            kind: self.kind(),
            message: self.to_string(),
            context,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub context: serde_json::Value,
}
