use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{cross, Error, Result, Vec2};

/// A halfspace supports a facet only if its edge is longer than this times
/// the diameter.
pub const FACET_TOL: f64 = 1e-9;

/// Regions with area below this times `diameter²` count as empty.
pub const AREA_TOL: f64 = 1e-12;

/// Convex polygon `∩_k {x : u_k·x ≤ h_k}` where every stored halfspace
/// supports an edge of positive length.
///
/// Facets are stored counterclockwise; vertex `k` is the start of facet `k`,
/// i.e. the intersection of the lines of facets `k-1` and `k`.
#[derive(Clone, Debug)]
pub struct Polytope2 {
    normals: Vec<Vec2>,
    offsets: Vec<f64>,
    vertices: Vec<Vec2>,
    facet_lengths: Vec<f64>,
    source: Vec<usize>,
}

/// Geometric equality; the input-index labels are ignored.
impl PartialEq for Polytope2 {
    fn eq(&self, other: &Self) -> bool {
        self.normals == other.normals && self.offsets == other.offsets
    }
}

#[derive(Serialize, Deserialize)]
struct PolytopeSpec {
    normals: Vec<[f64; 2]>,
    offsets: Vec<f64>,
}

impl Serialize for Polytope2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeSpec {
            normals: self.normals.iter().map(|u| [u.x, u.y]).collect(),
            offsets: self.offsets.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polytope2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = PolytopeSpec::deserialize(d)?;
        let normals: Vec<Vec2> = spec.normals.iter().map(|n| Vec2::new(n[0], n[1])).collect();
        Polytope2::from_halfspaces(&normals, &spec.offsets).map_err(serde::de::Error::custom)
    }
}

/// Edge of a clipped polygon: start point and the halfspace that produced it
/// (`None` for the initial bounding box).
type Labeled = (Vec2, Option<usize>);

/// Unit normals with offsets rescaled accordingly.
fn normalize(normals: &[Vec2], offsets: &[f64]) -> Result<(Vec<Vec2>, Vec<f64>)> {
    if normals.len() != offsets.len() {
        return Err(Error::InvalidInput(format!(
            "{} normals but {} offsets",
            normals.len(),
            offsets.len()
        )));
    }
    let mut us = Vec::with_capacity(normals.len());
    let mut hs = Vec::with_capacity(normals.len());
    for (u, &h) in normals.iter().zip(offsets) {
        let r = u.norm();
        if !(r.is_finite() && r > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("bad halfspace ({}, {}; {h})", u.x, u.y)));
        }
        // Leave already-unit normals untouched so offsets round-trip bit for bit.
        let r = if (r - 1.0).abs() <= 4.0 * f64::EPSILON { 1.0 } else { r };
        us.push(u / r);
        hs.push(h / r);
    }
    Ok((us, hs))
}

/// Largest angular gap between consecutive normals, and the sorted order.
fn angular_order(normals: &[Vec2]) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..normals.len()).collect();
    let angle = |i: usize| normals[i].y.atan2(normals[i].x);
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    let mut gap: f64 = 0.0;
    for w in 0..order.len() {
        let a = angle(order[w]);
        let b = if w + 1 < order.len() {
            angle(order[w + 1])
        } else {
            angle(order[0]) + 2.0 * PI
        };
        gap = gap.max(b - a);
    }
    (order, gap)
}

/// Upper bound of `d·x` over the region, from the two consecutive normals
/// whose cone contains `d`.
fn bracket_bound(normals: &[Vec2], offsets: &[f64], order: &[usize], d: Vec2) -> f64 {
    let n = order.len();
    let mut best = f64::INFINITY;
    for w in 0..n {
        let (i, j) = (order[w], order[(w + 1) % n]);
        let (a, b) = (normals[i], normals[j]);
        let det = cross(a, b);
        if det <= 0.0 {
            continue;
        }
        // d = s a + t b with s, t ≥ 0.
        let s = cross(d, b) / det;
        let t = cross(a, d) / det;
        if s >= -1e-15 && t >= -1e-15 {
            best = best.min(s.max(0.0) * offsets[i] + t.max(0.0) * offsets[j]);
        }
    }
    for (u, &h) in normals.iter().zip(offsets) {
        if (u - d).norm() < 1e-15 {
            best = best.min(h);
        }
    }
    best
}

/// Sutherland–Hodgman clip of a labeled polygon by `u·x ≤ h`.
fn clip(poly: &[Labeled], u: Vec2, h: f64, label: usize) -> Vec<Labeled> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for j in 0..n {
        let (a, la) = poly[j];
        let b = poly[(j + 1) % n].0;
        let da = u.dot(&a) - h;
        let db = u.dot(&b) - h;
        let cut = || a + (b - a) * (da / (da - db));
        match (da <= 0.0, db <= 0.0) {
            (true, true) => out.push((a, la)),
            (true, false) => {
                out.push((a, la));
                out.push((cut(), Some(label)));
            }
            (false, true) => out.push((cut(), la)),
            (false, false) => {}
        }
    }
    out
}

/// Intersection of the halfspaces clipped from a bounding box; may be empty.
/// Requires normals not to lie in a closed half-circle.
fn clip_region(normals: &[Vec2], offsets: &[f64], order: &[usize]) -> Vec<Labeled> {
    let axes = [Vec2::x(), Vec2::y(), -Vec2::x(), -Vec2::y()];
    let b: Vec<f64> = axes
        .iter()
        .map(|&d| bracket_bound(normals, offsets, order, d))
        .collect();
    let (xmax, ymax, xmin, ymin) = (b[0], b[1], -b[2], -b[3]);
    if !(xmin < xmax && ymin < ymax) {
        return Vec::new();
    }
    let pad = 1e-3 * ((xmax - xmin) + (ymax - ymin));
    let (xmin, xmax, ymin, ymax) = (xmin - pad, xmax + pad, ymin - pad, ymax + pad);
    let mut poly: Vec<Labeled> = vec![
        (Vec2::new(xmin, ymin), None),
        (Vec2::new(xmax, ymin), None),
        (Vec2::new(xmax, ymax), None),
        (Vec2::new(xmin, ymax), None),
    ];
    for &i in order {
        poly = clip(&poly, normals[i], offsets[i], i);
        if poly.len() < 3 {
            return Vec::new();
        }
    }
    poly
}

fn shoelace(points: &[Vec2]) -> f64 {
    let n = points.len();
    (0..n).map(|i| cross(points[i], points[(i + 1) % n])).sum::<f64>() / 2.0
}

fn line_intersection(ua: Vec2, ha: f64, ub: Vec2, hb: f64) -> Vec2 {
    let det = cross(ua, ub);
    Vec2::new((ha * ub.y - hb * ua.y) / det, (ua.x * hb - ub.x * ha) / det)
}

impl Polytope2 {
    /// Intersection of the halfspaces `normals[i]·x ≤ offsets[i]`. Halfspaces
    /// that do not support an edge are dropped; [`Self::source_indices`]
    /// records which inputs survive.
    pub fn from_halfspaces(normals: &[Vec2], offsets: &[f64]) -> Result<Self> {
        Self::build(normals, offsets).map(|(p, _)| p)
    }

    /// Like [`Self::from_halfspaces`] but fails with `FacetDeath` unless every
    /// input halfspace supports an edge.
    pub fn from_halfspaces_strict(normals: &[Vec2], offsets: &[f64]) -> Result<Self> {
        let (p, raw) = Self::build(normals, offsets)?;
        if p.len() < normals.len() {
            let mut alive = vec![false; normals.len()];
            for &s in &p.source {
                alive[s] = true;
            }
            let facet = alive.iter().position(|a| !a).unwrap_or(0);
            return Err(Error::FacetDeath {
                facet,
                length: raw[facet],
            });
        }
        Ok(p)
    }

    fn build(normals: &[Vec2], offsets: &[f64]) -> Result<(Self, Vec<f64>)> {
        if normals.len() < 3 {
            return Err(Error::UnboundedRegion);
        }
        let (us, hs) = normalize(normals, offsets)?;
        let (order, gap) = angular_order(&us);
        if gap >= PI - 1e-12 {
            return Err(Error::UnboundedRegion);
        }
        let poly = clip_region(&us, &hs, &order);
        if poly.is_empty() {
            return Err(Error::EmptyInterior { area: 0.0 });
        }
        let n = poly.len();
        let mut raw = vec![0.0; us.len()];
        let mut diam: f64 = 0.0;
        for j in 0..n {
            let len = (poly[(j + 1) % n].0 - poly[j].0).norm();
            if let Some(l) = poly[j].1 {
                raw[l] += len;
            }
            for k in 0..j {
                diam = diam.max((poly[j].0 - poly[k].0).norm());
            }
        }
        let points: Vec<Vec2> = poly.iter().map(|p| p.0).collect();
        let area = shoelace(&points);
        if !(diam > 0.0) || area < AREA_TOL * diam * diam {
            return Err(Error::EmptyInterior { area: area.max(0.0) });
        }

        // Keep edges above tolerance; merge repeats of the same label.
        let mut source: Vec<usize> = Vec::new();
        for j in 0..n {
            let len = (poly[(j + 1) % n].0 - poly[j].0).norm();
            let label = match poly[j].1 {
                Some(l) => l,
                None => return Err(Error::UnboundedRegion),
            };
            if len > FACET_TOL * diam && source.last() != Some(&label) {
                source.push(label);
            }
        }
        while source.len() > 1 && source.first() == source.last() {
            source.pop();
        }
        if source.len() < 3 {
            return Err(Error::EmptyInterior { area });
        }
        // Start at the facet with the smallest polar angle of its normal.
        let start = (0..source.len())
            .min_by(|&a, &b| {
                let ang = |i: usize| {
                    let u = us[source[i]];
                    u.y.atan2(u.x)
                };
                ang(a).total_cmp(&ang(b))
            })
            .unwrap_or(0);
        source.rotate_left(start);

        let normals: Vec<Vec2> = source.iter().map(|&s| us[s]).collect();
        let offsets: Vec<f64> = source.iter().map(|&s| hs[s]).collect();
        let m = source.len();
        let vertices: Vec<Vec2> = (0..m)
            .map(|k| {
                let prev = (k + m - 1) % m;
                line_intersection(normals[prev], offsets[prev], normals[k], offsets[k])
            })
            .collect();
        let facet_lengths = (0..m).map(|k| (vertices[(k + 1) % m] - vertices[k]).norm()).collect();
        let p = Polytope2 {
            normals,
            offsets,
            vertices,
            facet_lengths,
            source,
        };
        if p.area() < AREA_TOL * diam * diam {
            return Err(Error::EmptyInterior { area: p.area() });
        }
        Ok((p, raw))
    }

    /// Convex hull of `points`.
    pub fn from_vertices(points: &[Vec2]) -> Result<Self> {
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(Error::EmptyInterior { area: 0.0 });
        }
        let n = hull.len();
        let mut normals = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let e = hull[(i + 1) % n] - hull[i];
            let u = Vec2::new(e.y, -e.x).normalize();
            normals.push(u);
            offsets.push(u.dot(&hull[i]));
        }
        Self::from_halfspaces(&normals, &offsets)
    }

    /// Same normals, new offsets (in facet order). Fails if a facet dies.
    pub fn with_offsets(&self, offsets: &[f64]) -> Result<Self> {
        let p = Self::from_halfspaces_strict(&self.normals, offsets)?;
        Ok(p.relabel(&self.source))
    }

    /// Replaces source indices `i` by `map[i]`.
    fn relabel(mut self, map: &[usize]) -> Self {
        for s in &mut self.source {
            *s = map[*s];
        }
        self
    }

    pub fn translated(&self, t: Vec2) -> Self {
        let mut p = self.clone();
        for (u, h) in p.normals.iter().zip(p.offsets.iter_mut()) {
            *h += u.dot(&t);
        }
        for v in &mut p.vertices {
            *v += t;
        }
        p
    }

    /// Dilation about the origin by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        assert!(s > 0.0, "scale factor must be positive");
        let mut p = self.clone();
        p.offsets.iter_mut().for_each(|h| *h *= s);
        p.vertices.iter_mut().for_each(|v| *v *= s);
        p.facet_lengths.iter_mut().for_each(|l| *l *= s);
        p
    }

    /// Axis-aligned box `[x0,x1]×[y0,y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::from_halfspaces(
            &[Vec2::x(), Vec2::y(), -Vec2::x(), -Vec2::y()],
            &[x1, y1, -x0, -y0],
        )
    }

    /// Regular `n`-gon with circumradius `r` centered at the origin, vertex at angle `phase`.
    pub fn regular(n: usize, r: f64, phase: f64) -> Result<Self> {
        let pts: Vec<Vec2> = (0..n)
            .map(|j| {
                let t = phase + 2.0 * PI * j as f64 / n as f64;
                Vec2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        Self::from_vertices(&pts)
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Counterclockwise; vertex `k` starts facet `k`.
    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn facet_lengths(&self) -> &[f64] {
        &self.facet_lengths
    }

    /// Input index of the halfspace behind each facet.
    pub fn source_indices(&self) -> &[usize] {
        &self.source
    }

    /// Facet supported by input halfspace `i`, if it survived.
    pub fn facet_of_source(&self, i: usize) -> Option<usize> {
        self.source.iter().position(|&s| s == i)
    }

    /// `h_P(v) = max_{x∈P} ⟨v, x⟩`.
    pub fn support_function(&self, v: Vec2) -> f64 {
        self.vertices
            .iter()
            .map(|x| v.dot(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.facet_lengths.iter().sum()
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        // Shift to a vertex first for better conditioning.
        let o = self.vertices[0];
        let mut c = Vec2::zeros();
        let mut a2 = 0.0;
        for i in 0..n {
            let (p, q) = (self.vertices[i] - o, self.vertices[(i + 1) % n] - o);
            let w = cross(p, q);
            a2 += w;
            c += (p + q) * w;
        }
        o + c / (3.0 * a2)
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in 0..i {
                d = d.max((v[i] - v[j]).norm());
            }
        }
        d
    }

    /// `max_k (u_k·x - h_k)`: negative inside, zero on the boundary.
    pub fn depth(&self, x: Vec2) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(u, h)| u.dot(&x) - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.depth(x) <= 0.0
    }

    /// Euclidean distance from `x` to the polygon (zero inside).
    pub fn distance_to(&self, x: Vec2) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(x, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether some nonempty region `{u_k·x ≤ h_k − r}` exists.
    pub(crate) fn has_depth(&self, r: f64) -> bool {
        let hs: Vec<f64> = self.offsets.iter().map(|h| h - r).collect();
        let order: Vec<usize> = (0..self.len()).collect();
        !clip_region(&self.normals, &hs, &order).is_empty()
    }
}

fn segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let t = ((x - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
    (x - (a + e * t)).norm()
}

/// Andrew's monotone chain; counterclockwise, collinear points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.iter().copied().filter(|p| p.iter().all(|c| c.is_finite())).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Vec2, a: Vec2, b: Vec2| cross(a - o, b - o);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
