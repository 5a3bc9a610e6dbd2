//! Finsler norms `F` on the plane, their duals `F_0` and Wulff shapes.
//!
//! Each norm kind implements [`FinslerNorm`] and is registered by name in a
//! [`NormRegistry`]. [`AnisotropicNorm`] is the cheap, clonable handle the rest
//! of the crate passes around; it (de)serializes as
//! `{"kind":"lq","q":4.0}` through the built-in registry.

mod axioms;
mod builtin;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::Matrix2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::geometry::Polytope2;
use crate::{Error, Result, Vec2};

pub use axioms::{check_norm_axioms, NormAxiomReport};
pub use builtin::{Euclidean, Lq, SmoothedL1};

/// Below this Euclidean length the gradient of a norm is treated as undefined.
pub const GRADIENT_DOMAIN_THRESHOLD: f64 = 1e-14;

/// Grid used for the angular supremum in the generic dual norm.
pub const DUAL_GRID: usize = 4096;

/// Angular width at which the golden-section refinement stops.
pub const DUAL_ANGLE_TOL: f64 = 1e-10;

/// An even, positively 1-homogeneous, convex function on the plane that is
/// positive away from the origin and `C²` on `ℝ² \ {0}`.
pub trait FinslerNorm: Send + Sync + fmt::Debug {
    /// Registry name of this kind.
    fn kind(&self) -> &'static str;

    /// Parameters (without `kind`) as they appear in the JSON spec.
    fn params(&self) -> Map<String, Value>;

    fn value(&self, xi: Vec2) -> f64;

    /// `∇F(xi)` for `xi ≠ 0`.
    fn gradient(&self, xi: Vec2) -> Vec2;

    /// `∇²F(xi)` for `xi ≠ 0`.
    fn hessian(&self, xi: Vec2) -> Matrix2<f64>;

    /// `F_0(x) = sup_{ξ≠0} <x,ξ>/F(ξ)`.
    fn dual_value(&self, x: Vec2) -> f64 {
        grid_dual(|xi| self.value(xi), x)
    }
}

/// Dual norm by angular grid search plus golden-section refinement.
pub fn grid_dual(f: impl Fn(Vec2) -> f64, x: Vec2) -> f64 {
    if x.norm() == 0.0 {
        return 0.0;
    }
    let ratio = |t: f64| {
        let xi = Vec2::new(t.cos(), t.sin());
        x.dot(&xi) / f(xi)
    };
    let step = 2.0 * PI / DUAL_GRID as f64;
    let (best, _) = (0..DUAL_GRID)
        .map(|i| (i, ratio(i as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let centre = best as f64 * step;
    golden_max(&ratio, centre - step, centre + step, DUAL_ANGLE_TOL)
}

/// Maximum of a unimodal function on `[lo, hi]` by golden-section search.
pub(crate) fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    let mut best = fa.max(fb);
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
        best = best.max(fa).max(fb);
    }
    best.max(f(0.5 * (lo + hi)))
}

/// Builds a norm from its JSON parameters.
pub type NormFactory = fn(&Map<String, Value>) -> Result<Arc<dyn FinslerNorm>>;

/// Norm kinds available by name.
#[derive(Clone)]
pub struct NormRegistry {
    factories: BTreeMap<String, NormFactory>,
}

impl NormRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `euclidean`, `lq` and `smoothed_l1`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("euclidean", builtin::euclidean_factory);
        reg.register("lq", builtin::lq_factory);
        reg.register("smoothed_l1", builtin::smoothed_l1_factory);
        reg
    }

    /// Shared instance holding the built-in kinds.
    pub fn global() -> &'static NormRegistry {
        static REGISTRY: OnceLock<NormRegistry> = OnceLock::new();
        REGISTRY.get_or_init(NormRegistry::with_builtins)
    }

    pub fn register(&mut self, kind: &str, factory: NormFactory) {
        self.factories.insert(kind.to_string(), factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Builds a norm from `{"kind": ..., <params>}`.
    pub fn build(&self, spec: &Value) -> Result<AnisotropicNorm> {
        let obj = spec
            .as_object()
            .ok_or_else(|| Error::InvalidInput("norm spec must be a JSON object".into()))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidInput("norm spec needs a string `kind`".into()))?;
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| Error::UnknownNorm(kind.to_string()))?;
        let mut params = obj.clone();
        params.remove("kind");
        let description = match params.remove("description") {
            Some(Value::String(s)) => s,
            _ => String::new(),
        };
        Ok(AnisotropicNorm {
            inner: factory(&params)?,
            description,
        })
    }
}

impl Default for NormRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Handle to a Finsler norm plus free-text description.
#[derive(Clone)]
pub struct AnisotropicNorm {
    inner: Arc<dyn FinslerNorm>,
    description: String,
}

impl AnisotropicNorm {
    pub fn new(inner: Arc<dyn FinslerNorm>) -> Self {
        Self {
            inner,
            description: String::new(),
        }
    }

    pub fn euclidean() -> Self {
        Self::new(Arc::new(Euclidean))
    }

    pub fn lq(q: f64) -> Result<Self> {
        Ok(Self::new(Arc::new(Lq::new(q)?)))
    }

    pub fn smoothed_l1(eps: f64) -> Result<Self> {
        Ok(Self::new(Arc::new(SmoothedL1::new(eps)?)))
    }

    /// Parses a JSON norm spec with the built-in registry.
    pub fn from_json(spec: &Value) -> Result<Self> {
        NormRegistry::global().build(spec)
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    pub fn spec(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("kind".into(), Value::String(self.kind().into()));
        obj.extend(self.inner.params());
        if !self.description.is_empty() {
            obj.insert("description".into(), Value::String(self.description.clone()));
        }
        Value::Object(obj)
    }

    pub fn inner(&self) -> &dyn FinslerNorm {
        self.inner.as_ref()
    }

    pub fn value(&self, xi: Vec2) -> f64 {
        self.inner.value(xi)
    }

    /// `∇F(xi)`; undefined at the origin.
    pub fn gradient(&self, xi: Vec2) -> Result<Vec2> {
        let n = xi.norm();
        if n < GRADIENT_DOMAIN_THRESHOLD {
            return Err(Error::Domain { norm: n });
        }
        Ok(self.inner.gradient(xi))
    }

    pub fn hessian(&self, xi: Vec2) -> Result<Matrix2<f64>> {
        let n = xi.norm();
        if n < GRADIENT_DOMAIN_THRESHOLD {
            return Err(Error::Domain { norm: n });
        }
        Ok(self.inner.hessian(xi))
    }

    pub fn dual_value(&self, x: Vec2) -> f64 {
        self.inner.dual_value(x)
    }

    /// Polygon inscribed in the Wulff shape `{x : F_0(x) ≤ 1}` with vertices at
    /// equally spaced polar angles.
    pub fn wulff_shape(&self, vertex_count: usize) -> Result<Polytope2> {
        if vertex_count < 8 {
            return Err(Error::Precondition(format!(
                "wulff_shape needs at least 8 vertices, got {vertex_count}"
            )));
        }
        let points: Vec<Vec2> = (0..vertex_count)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / vertex_count as f64;
                let dir = Vec2::new(t.cos(), t.sin());
                dir / self.dual_value(dir)
            })
            .collect();
        Polytope2::from_vertices(&points)
    }

    /// Area of the Wulff shape, `κ_2`, from a fine inscribed polygon.
    pub fn wulff_area(&self) -> f64 {
        self.wulff_shape(2048)
            .map(|w| w.area())
            .expect("Wulff shape of a valid norm is a bounded polygon")
    }
}

impl fmt::Debug for AnisotropicNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnisotropicNorm({})", self.spec())
    }
}

impl PartialEq for AnisotropicNorm {
    fn eq(&self, other: &Self) -> bool {
        self.spec() == other.spec()
    }
}

impl Serialize for AnisotropicNorm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AnisotropicNorm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = Value::deserialize(deserializer)?;
        AnisotropicNorm::from_json(&spec).map_err(serde::de::Error::custom)
    }
}

/// `F(xi)`.
pub fn norm_value(norm: &AnisotropicNorm, xi: Vec2) -> f64 {
    norm.value(xi)
}

/// `∇_ξ F(xi)`.
pub fn norm_gradient(norm: &AnisotropicNorm, xi: Vec2) -> Result<Vec2> {
    norm.gradient(xi)
}

/// `F_0(x)`.
pub fn dual_norm_value(norm: &AnisotropicNorm, x: Vec2) -> f64 {
    norm.dual_value(x)
}

pub fn wulff_shape(norm: &AnisotropicNorm, vertex_count: usize) -> Result<Polytope2> {
    norm.wulff_shape(vertex_count)
}
