use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// Point mass `weight·δ_dir` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(with = "vec2_array")]
    pub dir: Vec2,
    pub weight: f64,
}

mod vec2_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Vec2;

    pub fn serialize<S: Serializer>(v: &Vec2, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec2, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Vec2::new(x, y))
    }
}

/// `μ = Σ α_k δ_{u_k}` with `α_k > 0` and unit `u_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec")]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct MeasureSpec {
    atoms: Vec<Atom>,
}

impl TryFrom<MeasureSpec> for DiscreteMeasure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        DiscreteMeasure::new(spec.atoms)
    }
}

impl DiscreteMeasure {
    /// Normalizes directions; rejects empty input, zero directions and
    /// non-positive weights.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        let mut out = Vec::with_capacity(atoms.len());
        for (i, a) in atoms.into_iter().enumerate() {
            let r = a.dir.norm();
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidInput(format!("atom {i} has no direction")));
            }
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom {i} has weight {}; weights must be positive",
                    a.weight
                )));
            }
            let r = if (r - 1.0).abs() <= 4.0 * f64::EPSILON { 1.0 } else { r };
            out.push(Atom {
                dir: a.dir / r,
                weight: a.weight,
            });
        }
        Ok(Self { atoms: out })
    }

    pub fn from_parts(dirs: &[Vec2], weights: &[f64]) -> Result<Self> {
        if dirs.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} directions but {} weights",
                dirs.len(),
                weights.len()
            )));
        }
        Self::new(
            dirs.iter()
                .zip(weights)
                .map(|(&dir, &weight)| Atom { dir, weight })
                .collect(),
        )
    }

    /// Atoms at polar angles (radians).
    pub fn from_angles(angles: &[f64], weights: &[f64]) -> Result<Self> {
        let dirs: Vec<Vec2> = angles.iter().map(|t| Vec2::new(t.cos(), t.sin())).collect();
        Self::from_parts(&dirs, weights)
    }

    /// `n` equal atoms at angles `phase + 2πj/n`.
    pub fn equispaced(n: usize, weight: f64, phase: f64) -> Result<Self> {
        let angles: Vec<f64> = (0..n).map(|j| phase + 2.0 * PI * j as f64 / n as f64).collect();
        Self::from_angles(&angles, &vec![weight; n])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn directions(&self) -> Vec<Vec2> {
        self.atoms.iter().map(|a| a.dir).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// `|μ| = Σ α_k`.
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Σ α_k u_k`.
    pub fn centroid(&self) -> Vec2 {
        self.atoms.iter().map(|a| a.dir * a.weight).sum()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.atoms
                .iter()
                .map(|a| Atom {
                    dir: a.dir,
                    weight: a.weight * s,
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_round_trip_and_total() {
        let v = json!({"atoms": [
            {"dir": [1.0, 0.0], "weight": 0.5},
            {"dir": [0.0, 2.0], "weight": 1.5}
        ]});
        let m: DiscreteMeasure = serde_json::from_value(v).unwrap();
        assert_eq!(m.total(), 2.0);
        assert_eq!(m.atoms()[1].dir, Vec2::new(0.0, 1.0));
        let back: DiscreteMeasure = serde_json::from_value(serde_json::to_value(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_atoms() {
        let zero = json!({"atoms": [{"dir": [1.0, 0.0], "weight": 0.0}]});
        assert!(serde_json::from_value::<DiscreteMeasure>(zero).is_err());
        let nodir = json!({"atoms": [{"dir": [0.0, 0.0], "weight": 1.0}]});
        assert!(serde_json::from_value::<DiscreteMeasure>(nodir).is_err());
        assert!(DiscreteMeasure::new(vec![]).is_err());
    }

    #[test]
    fn unit_directions() {
        let m = DiscreteMeasure::equispaced(7, 1.0, 0.3).unwrap();
        for a in m.atoms() {
            assert!((a.dir.norm() - 1.0).abs() < 1e-12);
        }
        assert!(m.centroid().norm() < 1e-14);
    }
}
