use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::geometry::{inradius, Polytope2};
use crate::{cross, Error, Result, Vec2};

/// Depths of the boundary-layer rings as fractions of the layer thickness.
const LAYER_FRACTIONS: [f64; 5] = [0.0, 0.125, 0.25, 0.5, 1.0];

/// Interior lattice points closer than this times `h` to the inner ring are dropped.
const LATTICE_CLEARANCE: f64 = 0.35;

/// Interior triangles with an edge longer than this times `h` get a centroid inserted.
const REFINE_RATIO: f64 = 1.3;

/// Triangles smaller than this times `h²` are treated as roundoff slivers.
const SLIVER_AREA: f64 = 1e-10;

/// Edge on `∂P`: node pair (counterclockwise), the facet it lies on and the
/// triangle that owns it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub facet: usize,
    pub triangle: usize,
}

/// Conforming P1 triangulation of a convex polygon.
///
/// Boundary nodes sit on `∂P` at spacing at most `h_max`. Four graded layers
/// of quadrilaterals, obtained by shrinking the boundary ring toward the
/// centroid, resolve the boundary gradient; the core is a constrained
/// Delaunay triangulation of an equilateral lattice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    on_boundary: Vec<bool>,
    h_max: f64,
    /// Polygon the mesh was built on (or transported to) and its centroid.
    normals: Vec<Vec2>,
    corners: Vec<Vec2>,
    center: Vec2,
}

fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * cross(b - a, c - a)
}

/// Boundary points of `p` at spacing at most `h`, with the facet index of the
/// edge starting at each point.
fn boundary_ring(p: &Polytope2, h: f64) -> (Vec<Vec2>, Vec<usize>) {
    let v = p.vertices();
    let m = v.len();
    let mut pts = Vec::new();
    let mut facet = Vec::new();
    for k in 0..m {
        let (a, b) = (v[k], v[(k + 1) % m]);
        let n = ((b - a).norm() / h).ceil().max(1.0) as usize;
        for j in 0..n {
            pts.push(a + (b - a) * (j as f64 / n as f64));
            facet.push(k);
        }
    }
    (pts, facet)
}

/// Removes nodes that belong to no triangle and renumbers the rest.
fn drop_unused(
    nodes: Vec<Vec2>,
    on_boundary: Vec<bool>,
    triangles: &mut [[usize; 3]],
    boundary_edges: &mut [BoundaryEdge],
) -> (Vec<Vec2>, Vec<bool>) {
    let mut used = vec![false; nodes.len()];
    triangles.iter().flatten().for_each(|&i| used[i] = true);
    if used.iter().all(|&u| u) {
        return (nodes, on_boundary);
    }
    let mut map = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    let mut kept_boundary = Vec::new();
    for i in 0..nodes.len() {
        if used[i] {
            map[i] = kept.len();
            kept.push(nodes[i]);
            kept_boundary.push(on_boundary[i]);
        }
    }
    triangles.iter_mut().flatten().for_each(|i| *i = map[*i]);
    boundary_edges
        .iter_mut()
        .for_each(|e| e.nodes = e.nodes.map(|i| map[i]));
    (kept, kept_boundary)
}

impl Mesh {
    /// Triangulates `p` with target edge length `h_max`.
    pub fn triangulate(p: &Polytope2, h_max: f64) -> Result<Mesh> {
        let diam = p.diameter();
        if !(h_max.is_finite() && h_max > 0.0 && h_max < diam) {
            return Err(Error::Precondition(format!(
                "h_max = {h_max} must lie in (0, diameter = {diam})"
            )));
        }
        let h = h_max;
        let r_in = inradius(p);
        if r_in < 2.0 * h {
            log::warn!("thin body: inradius {r_in:.3e} < 2 h_max = {:.3e}", 2.0 * h);
        }
        let c = p.centroid();
        let rho_max = p
            .normals()
            .iter()
            .zip(p.offsets())
            .map(|(u, hk)| hk - u.dot(&c))
            .fold(0.0, f64::max);
        let sigma = (0.5 * h / rho_max).min(0.3);

        let (ring0, facet_of) = boundary_ring(p, h);
        let nr = ring0.len();
        let mut nodes: Vec<Vec2> = Vec::with_capacity(nr * LAYER_FRACTIONS.len());
        for f in LAYER_FRACTIONS {
            let s = 1.0 - sigma * f;
            nodes.extend(ring0.iter().map(|&b| c + (b - c) * s));
        }
        let ring = |j: usize, i: usize| j * nr + (i % nr);

        let mut triangles = Vec::new();
        let mut boundary_edges = Vec::with_capacity(nr);
        for j in 0..LAYER_FRACTIONS.len() - 1 {
            for i in 0..nr {
                let (a, b) = (ring(j, i), ring(j, i + 1));
                let (cc, d) = (ring(j + 1, i + 1), ring(j + 1, i));
                let diag_ac = (nodes[cc] - nodes[a]).norm();
                let diag_bd = (nodes[d] - nodes[b]).norm();
                let outer = triangles.len();
                if diag_ac <= diag_bd {
                    triangles.push([a, b, cc]);
                    triangles.push([a, cc, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, cc, d]);
                }
                if j == 0 {
                    boundary_edges.push(BoundaryEdge {
                        nodes: [a, b],
                        facet: facet_of[i],
                        triangle: outer,
                    });
                }
            }
        }

        // Core: CDT of the innermost ring plus a trimmed lattice.
        let inner_ring = (LAYER_FRACTIONS.len() - 1) * nr;
        let s_in = 1.0 - sigma;
        let inner_offsets: Vec<f64> = p
            .normals()
            .iter()
            .zip(p.offsets())
            .map(|(u, hk)| u.dot(&c) + s_in * (hk - u.dot(&c)))
            .collect();
        let depth = |x: Vec2| {
            p.normals()
                .iter()
                .zip(&inner_offsets)
                .map(|(u, hk)| u.dot(&x) - hk)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let inner_pts = &nodes[inner_ring..];
        let (lo, hi) = inner_pts.iter().fold(
            (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)),
            |(lo, hi), q| (lo.inf(q), hi.sup(q)),
        );
        let dy = h * 3f64.sqrt() / 2.0;
        let rows = ((hi.y - lo.y) / dy).floor() as usize + 1;
        let cols = ((hi.x - lo.x) / h).floor() as usize + 2;
        let mut lattice = Vec::new();
        for j in 0..rows {
            let y = lo.y + 0.5 * ((hi.y - lo.y) - (rows - 1) as f64 * dy) + j as f64 * dy;
            let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
            for i in 0..cols {
                let x = Vec2::new(lo.x + shift + i as f64 * h, y);
                if depth(x) <= -LATTICE_CLEARANCE * h {
                    lattice.push(x);
                }
            }
        }

        let mut cdt_pts: Vec<Point2<f64>> = inner_pts.iter().map(|q| Point2::new(q.x, q.y)).collect();
        cdt_pts.extend(lattice.iter().map(|q| Point2::new(q.x, q.y)));
        let edges: Vec<[usize; 2]> = (0..nr).map(|i| [i, (i + 1) % nr]).collect();
        let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(cdt_pts, edges)
            .map_err(|e| Error::InvalidMesh(format!("triangulation failed: {e:?}")))?;
        if cdt.num_vertices() != nr + lattice.len() {
            return Err(Error::InvalidMesh("duplicate mesh vertices".into()));
        }
        for _ in 0..20 {
            let extra: Vec<Point2<f64>> = cdt
                .inner_faces()
                .filter_map(|f| {
                    let v = f.vertices().map(|v| {
                        let q = v.position();
                        Vec2::new(q.x, q.y)
                    });
                    let longest = (0..3).map(|k| (v[(k + 1) % 3] - v[k]).norm()).fold(0.0, f64::max);
                    let sliver = signed_area(v[0], v[1], v[2]).abs() < 1e-6 * h * h;
                    let g = (v[0] + v[1] + v[2]) / 3.0;
                    (longest > REFINE_RATIO * h && !sliver).then(|| Point2::new(g.x, g.y))
                })
                .collect();
            if extra.is_empty() {
                break;
            }
            for q in extra {
                cdt.insert(q)
                    .map_err(|e| Error::InvalidMesh(format!("refinement failed: {e:?}")))?;
            }
        }
        let base = nodes.len();
        for v in cdt.vertices().skip(nr) {
            let q = v.position();
            nodes.push(Vec2::new(q.x, q.y));
        }
        let global = |k: usize| if k < nr { inner_ring + k } else { base + (k - nr) };
        for f in cdt.inner_faces() {
            let idx = f.vertices().map(|v| global(v.fix().index()));
            let area = signed_area(nodes[idx[0]], nodes[idx[1]], nodes[idx[2]]);
            if area.abs() < SLIVER_AREA * h * h {
                continue;
            }
            triangles.push(if area > 0.0 { idx } else { [idx[0], idx[2], idx[1]] });
        }

        let mut on_boundary = vec![false; nodes.len()];
        on_boundary[..nr].iter_mut().for_each(|b| *b = true);
        let (nodes, on_boundary) = drop_unused(nodes, on_boundary, &mut triangles, &mut boundary_edges);
        let mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
            on_boundary,
            h_max: h,
            normals: p.normals().to_vec(),
            corners: p.vertices().to_vec(),
            center: c,
        };
        mesh.check_orientation()?;
        Ok(mesh)
    }

    fn check_orientation(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(t);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} {tri:?} has signed area {a:e}"
                )));
            }
        }
        Ok(())
    }

    /// Maps the mesh onto `to`, which must have the same facet normals as the
    /// polygon the mesh lives on. Each sector `(c, V_k, V_{k+1})` is mapped
    /// affinely onto the corresponding sector of `to`; dilations and
    /// translations are reproduced exactly.
    pub fn transport(&self, to: &Polytope2) -> Result<Mesh> {
        if to.len() != self.normals.len()
            || to
                .normals()
                .iter()
                .zip(&self.normals)
                .any(|(a, b)| (a - b).norm() > 1e-12)
        {
            return Err(Error::DirectionMismatch);
        }
        let c1 = to.centroid();
        let w1 = to.vertices();
        let m = w1.len();
        let mut nodes: Vec<Vec2> = self
            .sector_coordinates()
            .into_iter()
            .map(|(k, l)| c1 * l[0] + w1[k] * l[1] + w1[(k + 1) % m] * l[2])
            .collect();
        // Boundary nodes land on their facet's line up to roundoff; snap them.
        for e in &self.boundary_edges {
            for &i in &e.nodes {
                let u = to.normals()[e.facet];
                let off = u.dot(&nodes[i]) - to.offsets()[e.facet];
                nodes[i] -= u * off;
            }
        }
        let mesh = Mesh {
            nodes,
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            on_boundary: self.on_boundary.clone(),
            h_max: self.h_max,
            normals: to.normals().to_vec(),
            corners: to.vertices().to_vec(),
            center: c1,
        };
        mesh.check_orientation()?;
        Ok(mesh)
    }

    /// For every node, the sector `k` (triangle of the centroid and corners
    /// `k`, `k + 1`) containing it and its barycentric coordinates there.
    /// [`Self::transport`] keeps these fixed.
    pub fn sector_coordinates(&self) -> Vec<(usize, [f64; 3])> {
        let m = self.corners.len();
        let c0 = self.center;
        self.nodes
            .iter()
            .map(|&x| {
                let mut best = (f64::NEG_INFINITY, 0, [0.0; 3]);
                for k in 0..m {
                    let (a, b) = (self.corners[k], self.corners[(k + 1) % m]);
                    let total = signed_area(c0, a, b);
                    let l1 = signed_area(c0, x, b) / total;
                    let l2 = signed_area(c0, a, x) / total;
                    let l0 = 1.0 - l1 - l2;
                    let worst = l0.min(l1).min(l2);
                    if worst >= 0.0 {
                        return (k, [l0, l1, l2]);
                    }
                    if worst > best.0 {
                        best = (worst, k, [l0, l1, l2]);
                    }
                }
                (best.1, best.2)
            })
            .collect()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    /// Outer unit normal of facet `k` of the polygon the mesh lives on.
    pub fn facet_normal(&self, k: usize) -> Vec2 {
        self.normals[k]
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn facet_count(&self) -> usize {
        self.normals.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Longest edge over all triangles.
    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| (self.nodes[a] - self.nodes[b]).norm())
            .fold(0.0, f64::max)
    }

    /// Gradients of the three hat functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let two_area = cross(b - a, c - a);
        let perp = |v: Vec2| Vec2::new(-v.y, v.x);
        [perp(c - b) / two_area, perp(a - c) / two_area, perp(b - a) / two_area]
    }

    /// Gradient of the piecewise-linear field `values` on triangle `t`.
    pub fn field_gradient(&self, values: &[f64], t: usize) -> Vec2 {
        let g = self.basis_gradients(t);
        let tri = self.triangles[t];
        g[0] * values[tri[0]] + g[1] * values[tri[1]] + g[2] * values[tri[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Polytope2 {
        Polytope2::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap()
    }

    fn check_invariants(p: &Polytope2, m: &Mesh) {
        assert!(m.max_edge() <= 1.5 * m.h_max(), "max edge {}", m.max_edge());
        check_cover(p, m);
    }

    fn check_cover(p: &Polytope2, m: &Mesh) {
        for t in 0..m.triangles().len() {
            assert!(m.triangle_area(t) > 0.0);
        }
        assert_relative_eq!(m.area(), p.area(), max_relative = 1e-9);
        let diam = p.diameter();
        for e in m.boundary_edges() {
            let (u, h) = (p.normals()[e.facet], p.offsets()[e.facet]);
            for &i in &e.nodes {
                assert!((u.dot(&m.nodes()[i]) - h).abs() < 1e-10 * diam);
            }
            assert!(m.triangles()[e.triangle].contains(&e.nodes[0]));
            assert!(m.triangles()[e.triangle].contains(&e.nodes[1]));
        }
        let mut per_facet = vec![0.0; p.len()];
        for e in m.boundary_edges() {
            per_facet[e.facet] += (m.nodes()[e.nodes[1]] - m.nodes()[e.nodes[0]]).norm();
        }
        for (a, b) in per_facet.iter().zip(p.facet_lengths()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn square_mesh_covers_the_polygon() {
        let p = Polytope2::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap();
        let m = Mesh::triangulate(&p, 0.1).unwrap();
        assert!(m.triangles().len() >= 400, "{}", m.triangles().len());
        check_invariants(&p, &m);
    }

    #[test]
    fn triangle_and_thin_bodies() {
        let t = Polytope2::from_vertices(&[Vec2::zeros(), Vec2::new(1.0, 0.0), Vec2::new(0.2, 0.7)]).unwrap();
        check_invariants(&t, &Mesh::triangulate(&t, 0.05).unwrap());
        let thin = Polytope2::rectangle(0.0, 3.0, 0.0, 0.2).unwrap();
        check_invariants(&thin, &Mesh::triangulate(&thin, 0.05).unwrap());
        let acute = Polytope2::from_vertices(&[Vec2::zeros(), Vec2::new(2.0, 0.0), Vec2::new(2.0, 0.35)]).unwrap();
        check_invariants(&acute, &Mesh::triangulate(&acute, 0.04).unwrap());
    }

    #[test]
    fn every_node_is_used() {
        let p = Polytope2::regular(128, 1.0, 0.0).unwrap();
        let m = Mesh::triangulate(&p, 0.03).unwrap();
        let mut used = vec![false; m.nodes().len()];
        for t in m.triangles() {
            for &i in t {
                used[i] = true;
            }
        }
        let unused: Vec<usize> = (0..used.len()).filter(|&i| !used[i]).collect();
        assert!(unused.is_empty(), "{} unused of {}: {:?}", unused.len(), used.len(), &unused[..unused.len().min(10)]);
    }

    #[test]
    fn h_max_must_be_below_diameter() {
        let t = Polytope2::from_vertices(&[Vec2::zeros(), Vec2::x(), Vec2::y()]).unwrap();
        let err = Mesh::triangulate(&t, t.diameter()).unwrap_err();
        assert_eq!(err.kind(), "precondition");
    }

    #[test]
    fn halving_h_triples_triangle_count() {
        let p = Polytope2::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mut prev = Mesh::triangulate(&p, 0.1).unwrap().triangles().len();
        for h in [0.05, 0.025] {
            let n = Mesh::triangulate(&p, h).unwrap().triangles().len();
            assert!(n >= 3 * prev, "h = {h}: {n} vs {prev}");
            prev = n;
        }
    }

    #[test]
    fn transport_reproduces_dilation_and_translation() {
        let p = Polytope2::regular(6, 1.0, 0.2).unwrap();
        let m = Mesh::triangulate(&p, 0.1).unwrap();
        let q = p.scaled(1.7).translated(Vec2::new(0.3, -0.2));
        let mq = m.transport(&q).unwrap();
        let c0 = p.centroid();
        let c1 = q.centroid();
        for (a, b) in m.nodes().iter().zip(mq.nodes()) {
            let expect = c1 + (a - c0) * 1.7;
            assert!((expect - b).norm() < 1e-12);
        }
        check_cover(&q, &mq);
    }

    #[test]
    fn transport_follows_an_offset_change() {
        let p = Polytope2::regular(5, 1.0, 0.0).unwrap();
        let m = Mesh::triangulate(&p, 0.08).unwrap();
        let h: Vec<f64> = p.offsets().iter().enumerate().map(|(k, h)| h * (1.0 + 0.03 * k as f64)).collect();
        let q = p.with_offsets(&h).unwrap();
        let mq = m.transport(&q).unwrap();
        assert_relative_eq!(mq.area(), q.area(), max_relative = 1e-9);
        for e in mq.boundary_edges() {
            for &i in &e.nodes {
                assert!((q.normals()[e.facet].dot(&mq.nodes()[i]) - q.offsets()[e.facet]).abs() < 1e-12);
            }
        }
        let other = Polytope2::regular(6, 1.0, 0.0).unwrap();
        assert_eq!(m.transport(&other).unwrap_err().kind(), "direction_mismatch");
    }

    #[test]
    fn field_gradient_is_exact_for_linear_fields() {
        let p = unit_square();
        let m = Mesh::triangulate(&p, 0.2).unwrap();
        let g = Vec2::new(0.7, -1.3);
        let vals: Vec<f64> = m.nodes().iter().map(|x| g.dot(x) + 0.25).collect();
        for t in 0..m.triangles().len() {
            assert!((m.field_gradient(&vals, t) - g).norm() < 1e-9);
        }
    }
}
