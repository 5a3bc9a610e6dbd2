use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use torsion_core::{json as fixed, Error, Polytope2, Vec2};

/// Everything that ends a run early.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, message: String },
    Parse { what: String, message: String },
    VerifyFailed { failed: usize },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// `2` for solver non-convergence, `1` for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::NonConvergence { .. }) => 2,
            _ => 1,
        }
    }

    /// `{kind, message, context}`.
    pub fn report(&self) -> Value {
        match self {
            CliError::Core(e) => serde_json::to_value(e.report()).expect("error reports serialize"),
            CliError::Io { path, message } => json!({
                "kind": "io",
                "message": format!("{}: {message}", path.display()),
                "context": { "path": path.display().to_string() },
            }),
            CliError::Parse { what, message } => json!({
                "kind": "parse",
                "message": format!("cannot parse {what}: {message}"),
                "context": { "input": what },
            }),
            CliError::VerifyFailed { failed } => json!({
                "kind": "verification_failed",
                "message": format!("{failed} invariant(s) failed"),
                "context": { "failed": failed },
            }),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Inline JSON if `arg` starts with `{`, else the contents of the file `arg`.
pub fn read_value(arg: &str) -> CliResult<Value> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Io {
            path: arg.into(),
            message: e.to_string(),
        })?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        what: arg.to_string(),
        message: e.to_string(),
    })
}

pub fn read_as<T: DeserializeOwned>(arg: &str) -> CliResult<T> {
    serde_json::from_value(read_value(arg)?).map_err(|e| CliError::Parse {
        what: arg.to_string(),
        message: e.to_string(),
    })
}

/// A body as `{"normals": […], "offsets": […]}` or `{"vertices": [[x, y], …]}`.
pub fn read_body(arg: &str) -> CliResult<Polytope2> {
    let v = read_value(arg)?;
    if let Some(vs) = v.get("vertices") {
        let pts: Vec<[f64; 2]> = serde_json::from_value(vs.clone()).map_err(|e| CliError::Parse {
            what: arg.to_string(),
            message: e.to_string(),
        })?;
        let pts: Vec<Vec2> = pts.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        return Ok(Polytope2::from_vertices(&pts)?);
    }
    serde_json::from_value(v).map_err(|e| CliError::Parse {
        what: arg.to_string(),
        message: e.to_string(),
    })
}

/// Serializes with 17 significant digits per float.
pub fn render<T: Serialize + ?Sized>(value: &T, pretty: bool) -> String {
    let mut s = fixed::to_string(value, pretty).expect("outputs serialize");
    s.push('\n');
    s
}

/// Writes `text` to `out`, or to standard output.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })
        }
    }
}
