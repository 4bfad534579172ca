//! Constrained Delaunay meshing of tagged outlines.

use std::collections::HashMap;
use std::io::Write;

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use thiserror::Error;

use super::outline::{segment_distance, BoundaryTag, Outline, Vec2};

/// Smallest acceptable shortest-edge to circumradius ratio (min angle 14.48 deg).
pub const QUALITY_FLOOR: f64 = 0.5;
/// Outline corners sharper than this cannot host triangles above the floor.
pub const SHARP_CORNER_DEG: f64 = 15.0;
/// Angle target handed to the refiner.
const REFINE_ANGLE_DEG: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("outline has a degenerate loop")]
    DegenerateLoop,
    #[error("outline edges intersect")]
    SelfIntersection,
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("boundary edge ({0}, {1}) does not lie on an outline edge")]
    UntaggedEdge(usize, usize),
    #[error("mesh has no mount nodes")]
    NoMount,
    #[error("invalid mesh size range [{0}, {1}]")]
    InvalidSize(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints ordered so the solid lies on the left.
    pub a: usize,
    pub b: usize,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh2D {
    pub vertices: Vec<Vec2>,
    /// Counter-clockwise index triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Nodes held by the mount.
    pub mount_nodes: Vec<usize>,
    /// Target element size used for this mesh.
    pub element_size: f64,
    /// Vertices sitting on outline corners sharper than [`SHARP_CORNER_DEG`].
    pub sharp_corners: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub elements: usize,
    pub nodes: usize,
    pub min_angle_deg: f64,
    pub min_edge: f64,
    pub max_edge: f64,
    /// Smallest shortest-edge to circumradius ratio over all triangles.
    pub min_quality: f64,
    /// Same, ignoring triangles touching sharp outline corners.
    pub min_quality_regular: f64,
}

/// Shortest edge over circumradius, 2 sin(min angle): sqrt(3) for an equilateral triangle.
pub fn triangle_quality(p: [Vec2; 3]) -> f64 {
    let a = (p[1] - p[2]).norm();
    let b = (p[2] - p[0]).norm();
    let c = (p[0] - p[1]).norm();
    let area = 0.5 * ((p[1] - p[0]).perp(&(p[2] - p[0]))).abs();
    if area <= 0.0 {
        return 0.0;
    }
    let r = a * b * c / (4.0 * area);
    a.min(b).min(c) / r
}

pub fn signed_area(p: [Vec2; 3]) -> f64 {
    0.5 * (p[1] - p[0]).perp(&(p[2] - p[0]))
}

fn min_angle(p: [Vec2; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..3 {
        let u = p[(i + 1) % 3] - p[i];
        let v = p[(i + 2) % 3] - p[i];
        m = m.min(u.perp(&v).abs().atan2(u.dot(&v)));
    }
    m
}

/// Boundary spacing for an outline under the configured range. Interior
/// elements grade up to `h_max`.
pub fn target_size(outline: &Outline, h_min: f64, h_max: f64) -> f64 {
    match outline.min_feature {
        Some(t) => t.clamp(h_min, h_max),
        None => h_max,
    }
}

/// Meshes the outline with quality refinement. Boundary edges inherit the
/// tag of the outline edge they lie on.
pub fn triangulate(outline: &Outline, h_min: f64, h_max: f64) -> Result<TriMesh2D, MeshError> {
    if !(h_min > 0.0 && h_min <= h_max && h_max.is_finite()) {
        return Err(MeshError::InvalidSize(h_min, h_max));
    }
    let h = target_size(outline, h_min, h_max);
    let loops: Vec<_> = outline.loops().collect();
    for l in &loops {
        if l.len() < 3 || l.signed_area().abs() < 1e-12 {
            return Err(MeshError::DegenerateLoop);
        }
    }

    let mut points: Vec<Point2<f64>> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    for l in &loops {
        let start = points.len();
        for i in 0..l.len() {
            let (a, b) = l.edge(i);
            let len = (b - a).norm();
            if len < 1e-9 {
                return Err(MeshError::DegenerateLoop);
            }
            let k = ((len / h) - 1e-9).ceil().max(1.0) as usize;
            for j in 0..k {
                let p = a + (b - a) * (j as f64 / k as f64);
                points.push(Point2::new(p.x, p.y));
            }
        }
        let end = points.len();
        for i in start..end {
            let j = if i + 1 == end { start } else { i + 1 };
            edges.push([i, j]);
        }
    }
    let input_count = points.len();

    let mut conflict = false;
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::try_bulk_load_cdt(points, edges, |_| conflict = true)
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if conflict || cdt.num_vertices() != input_count {
        return Err(MeshError::SelfIntersection);
    }

    let area_max = 0.25 * 3f64.sqrt() * h_max * h_max;
    let area_min = 0.25 * 3f64.sqrt() * h_min * h_min * 0.5;
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
        .with_max_allowed_area(area_max)
        .with_min_required_area(area_min)
        .with_max_additional_vertices(20 * input_count + 2000);
    let result = cdt.refine(params);
    let excluded: std::collections::HashSet<_> = result.excluded_faces.iter().copied().collect();

    let mut remap = vec![usize::MAX; cdt.num_vertices()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let pos = vs.map(|v| {
            let p = v.position();
            Vec2::new(p.x, p.y)
        });
        let centroid = (pos[0] + pos[1] + pos[2]) / 3.0;
        if !outline.contains(centroid) {
            continue;
        }
        let mut tri = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            let old = v.fix().index();
            if remap[old] == usize::MAX {
                remap[old] = vertices.len();
                vertices.push(pos[k]);
            }
            tri[k] = remap[old];
        }
        if signed_area([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]) <= 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    if triangles.is_empty() {
        return Err(MeshError::Triangulation("no interior triangles".into()));
    }
    build_mesh(outline, vertices, triangles, h)
}

/// Derives boundary edges, tags, mount nodes and sharp corners.
fn build_mesh(
    outline: &Outline,
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    h: f64,
) -> Result<TriMesh2D, MeshError> {
    let mut count: HashMap<(usize, usize), (usize, (usize, usize))> = HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            count.entry(key).or_insert((0, (a, b))).0 += 1;
        }
    }
    let segs: Vec<(Vec2, Vec2, BoundaryTag)> = outline
        .loops()
        .flat_map(|l| (0..l.len()).map(move |i| (l.edge(i).0, l.edge(i).1, l.tags[i])))
        .collect();
    let scale = vertices.iter().fold(1.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    let tol = 1e-9 * scale;
    let mut boundary_edges = Vec::new();
    for &(n, (a, b)) in count.values() {
        if n != 1 {
            continue;
        }
        let (pa, pb) = (vertices[a], vertices[b]);
        let seg = segs
            .iter()
            .find(|(s0, s1, _)| segment_distance(pa, *s0, *s1) <= tol && segment_distance(pb, *s0, *s1) <= tol)
            .ok_or(MeshError::UntaggedEdge(a, b))?;
        boundary_edges.push(BoundaryEdge { a, b, tag: seg.2 });
    }
    boundary_edges.sort_by_key(|e| (e.a, e.b));

    let mut mount_nodes: Vec<usize> = boundary_edges
        .iter()
        .filter(|e| e.tag == BoundaryTag::Mount)
        .flat_map(|e| [e.a, e.b])
        .collect();
    mount_nodes.sort_unstable();
    mount_nodes.dedup();

    let mut sharp_corners = Vec::new();
    for l in outline.loops() {
        let n = l.len();
        for i in 0..n {
            let prev = l.points[(i + n - 1) % n];
            let p = l.points[i];
            let next = l.points[(i + 1) % n];
            let din = p - prev;
            let dout = next - p;
            let turn = din.perp(&dout).atan2(din.dot(&dout));
            let interior = std::f64::consts::PI - turn;
            if interior.to_degrees() < SHARP_CORNER_DEG {
                if let Some(idx) = vertices.iter().position(|v| (v - p).norm() <= tol) {
                    sharp_corners.push(idx);
                }
            }
        }
    }

    Ok(TriMesh2D {
        vertices,
        triangles,
        boundary_edges,
        mount_nodes,
        element_size: h,
        sharp_corners,
    })
}

impl TriMesh2D {
    pub fn triangle_points(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    /// Nodes touching at least one edge with `tag`, sorted.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| [e.a, e.b])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary_edges.iter().flat_map(|e| [e.a, e.b]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| signed_area(self.triangle_points(t)))
            .sum()
    }

    pub fn quality(&self) -> MeshQuality {
        let mut q = MeshQuality {
            elements: self.triangles.len(),
            nodes: self.vertices.len(),
            min_angle_deg: f64::INFINITY,
            min_edge: f64::INFINITY,
            max_edge: 0.0,
            min_quality: f64::INFINITY,
            min_quality_regular: f64::INFINITY,
        };
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let e = (p[(k + 1) % 3] - p[k]).norm();
                q.min_edge = q.min_edge.min(e);
                q.max_edge = q.max_edge.max(e);
            }
            q.min_angle_deg = q.min_angle_deg.min(min_angle(p).to_degrees());
            let tq = triangle_quality(p);
            q.min_quality = q.min_quality.min(tq);
            if !tri.iter().any(|v| self.sharp_corners.contains(v)) {
                q.min_quality_regular = q.min_quality_regular.min(tq);
            }
        }
        q
    }

    /// Checks winding, edge sharing and tagging invariants.
    pub fn check(&self) -> Result<(), String> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if signed_area(self.triangle_points(t)) <= 0.0 {
                return Err(format!("triangle {t} not positively oriented"));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary = 0;
        for (&e, &n) in &count {
            match n {
                1 => boundary += 1,
                2 => {}
                _ => return Err(format!("edge {e:?} shared by {n} triangles")),
            }
        }
        if boundary != self.boundary_edges.len() {
            return Err("boundary edge list incomplete".into());
        }
        if self.mount_nodes.is_empty() {
            return Err("no mount nodes".into());
        }
        Ok(())
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} 0", v.x, v.y)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,x,y")?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "{i},{},{}", v.x, v.y)?;
        }
        Ok(())
    }

    pub fn write_elements_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "element,n0,n1,n2")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Structured mesh of a `width` x `height` rectangle with `nx` x `ny` cells
/// split along alternating diagonals. Left edge nodes form the mount.
pub fn structured_rectangle(width: f64, height: f64, nx: usize, ny: usize) -> TriMesh2D {
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(width * i as f64 / nx as f64, height * j as f64 / ny as f64));
        }
    }
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let outline = Outline::rectangle(width, height);
    let mut outline = outline;
    // left side is the clamped end
    outline.outer.tags = vec![
        BoundaryTag::BackSurface,
        BoundaryTag::Tip,
        BoundaryTag::ContactSurface,
        BoundaryTag::Mount,
    ];
    build_mesh(&outline, vertices, triangles, width.min(height) / nx.min(ny) as f64)
        .expect("structured rectangle")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{benchmark_design, DesignBounds};
    use crate::fem2d::outline::finger_outline;

    #[test]
    fn unit_square() {
        let m = triangulate(&Outline::rectangle(1.0, 1.0), 0.5, 0.5).unwrap();
        m.check().unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12);
        assert!(m.quality().min_quality >= QUALITY_FLOOR);
    }

    #[test]
    fn halving_size_doubles_count() {
        let o = Outline::rectangle(10.0, 4.0);
        let a = triangulate(&o, 0.5, 2.0).unwrap().triangles.len();
        let b = triangulate(&o, 0.5, 1.0).unwrap().triangles.len();
        assert!(b >= 2 * a, "{a} -> {b}");
    }

    #[test]
    fn finger_mesh_quality_and_tags() {
        for f in [benchmark_design().fingers[0], DesignBounds::default().lower_design().fingers[0]] {
            let o = finger_outline(&f).unwrap();
            let m = triangulate(&o.outline, 1.0, 3.0).unwrap();
            m.check().unwrap();
            let q = m.quality();
            assert!(q.min_quality_regular >= QUALITY_FLOOR, "{q:?}");
            assert!(q.min_edge >= 0.5 - 1e-9, "{q:?}");
            assert!((m.area() - o.outline.area()).abs() < 1e-9 * m.area());
            for e in m.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::ContactSurface) {
                assert!(m.vertices[e.a].x.abs() < 1e-9 && m.vertices[e.b].x.abs() < 1e-9);
            }
            assert!(!m.mount_nodes.is_empty());
            assert!(m.mount_nodes.iter().all(|&n| m.vertices[n].y.abs() < 1e-9));
        }
    }

    #[test]
    fn deterministic() {
        let o = finger_outline(&benchmark_design().fingers[0]).unwrap();
        assert_eq!(triangulate(&o.outline, 1.0, 3.0).unwrap(), triangulate(&o.outline, 1.0, 3.0).unwrap());
    }

    #[test]
    fn obj_export() {
        let m = structured_rectangle(2.0, 1.0, 2, 1);
        let mut buf = Vec::new();
        m.write_obj(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 6);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 4);
    }
}
