//! Penalty contact against rigid silhouettes with regularized Coulomb friction,
//! plus node-to-segment self-contact within one finger.

use serde::{Deserialize, Serialize};

use super::mesh::{BoundaryEdge, TriMesh2D};
use super::outline::Vec2;

/// Rigid obstacle profile in the finger plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Silhouette {
    Circle { center: Vec2, radius: f64 },
    /// Convex polygon, counter-clockwise.
    Polygon(Vec<Vec2>),
}

/// Penetration of a point into a silhouette.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    pub depth: f64,
    /// Outward normal of the silhouette at the contact.
    pub normal: Vec2,
    /// Closest point on the silhouette boundary.
    pub point: Vec2,
}

impl Silhouette {
    pub fn translated(&self, by: Vec2) -> Silhouette {
        match self {
            Silhouette::Circle { center, radius } => Silhouette::Circle {
                center: center + by,
                radius: *radius,
            },
            Silhouette::Polygon(p) => Silhouette::Polygon(p.iter().map(|q| q + by).collect()),
        }
    }

    /// Lowest x over the profile.
    pub fn min_x(&self) -> f64 {
        match self {
            Silhouette::Circle { center, radius } => center.x - radius,
            Silhouette::Polygon(p) => p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min),
        }
    }

    /// Highest x over the profile.
    pub fn max_x(&self) -> f64 {
        match self {
            Silhouette::Circle { center, radius } => center.x + radius,
            Silhouette::Polygon(p) => p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Largest x of the profile on the horizontal line at height `y`, if it crosses.
    pub fn max_x_at(&self, y: f64) -> Option<f64> {
        match self {
            Silhouette::Circle { center, radius } => {
                let dy = y - center.y;
                (dy.abs() <= *radius).then(|| center.x + (radius * radius - dy * dy).sqrt())
            }
            Silhouette::Polygon(p) => {
                let mut best: Option<f64> = None;
                for k in 0..p.len() {
                    let (a, b) = (p[k], p[(k + 1) % p.len()]);
                    if (a.y - y) * (b.y - y) <= 0.0 && a.y != b.y {
                        let t = (y - a.y) / (b.y - a.y);
                        let x = a.x + t * (b.x - a.x);
                        best = Some(best.map_or(x, |v: f64| v.max(x)));
                    } else if a.y == y && b.y == y {
                        best = Some(best.map_or(a.x.max(b.x), |v: f64| v.max(a.x).max(b.x)));
                    }
                }
                best
            }
        }
    }

    pub fn penetration(&self, p: Vec2) -> Option<Penetration> {
        match self {
            Silhouette::Circle { center, radius } => {
                let d = p - center;
                let r = d.norm();
                if r >= *radius {
                    return None;
                }
                let normal = if r > 0.0 { d / r } else { Vec2::new(1.0, 0.0) };
                Some(Penetration {
                    depth: radius - r,
                    normal,
                    point: center + normal * *radius,
                })
            }
            Silhouette::Polygon(poly) => {
                let mut best: Option<Penetration> = None;
                for k in 0..poly.len() {
                    let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                    let e = b - a;
                    let len = e.norm();
                    if len == 0.0 {
                        continue;
                    }
                    let normal = Vec2::new(e.y, -e.x) / len;
                    let depth = -(p - a).dot(&normal);
                    if depth <= 0.0 {
                        return None;
                    }
                    if best.is_none_or(|q| depth < q.depth) {
                        best = Some(Penetration {
                            depth,
                            normal,
                            point: p + normal * depth,
                        });
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// N/mm
    pub stiffness: f64,
    pub mu: f64,
    /// mm/s
    pub friction_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactNode {
    pub node: usize,
    /// N
    pub normal_force: f64,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactSummary {
    pub total_normal_force: f64,
    pub contact_nodes: Vec<ContactNode>,
    pub converged: bool,
}

/// Contact response of one node, with its linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeContact {
    pub node: usize,
    pub force: Vec2,
    pub normal_force: f64,
    pub normal: Vec2,
    pub point: Vec2,
    /// Penalty stiffness along the normal, N/mm.
    pub stiffness: f64,
    /// Tangential friction damping, N*s/mm.
    pub damping: f64,
}

/// Contact forces on the candidate nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactForces {
    pub nodes: Vec<NodeContact>,
}

impl ContactForces {
    pub fn add_to(&self, f: &mut [f64]) {
        for c in &self.nodes {
            f[2 * c.node] += c.force.x;
            f[2 * c.node + 1] += c.force.y;
        }
    }

    /// Force exerted on the obstacle.
    pub fn reaction(&self) -> Vec2 {
        -self.nodes.iter().fold(Vec2::zeros(), |s, c| s + c.force)
    }

    pub fn summary(&self, converged: bool) -> ContactSummary {
        let contact_nodes: Vec<ContactNode> = self
            .nodes
            .iter()
            .map(|c| ContactNode {
                node: c.node,
                normal_force: c.normal_force,
                point: [c.point.x, c.point.y],
            })
            .collect();
        ContactSummary {
            total_normal_force: contact_nodes.iter().map(|c| c.normal_force).sum(),
            contact_nodes,
            converged,
        }
    }
}

/// Nodes of the mesh that can touch the obstacle.
pub fn contact_candidates(mesh: &TriMesh2D) -> Vec<usize> {
    mesh.nodes_with_tag(super::BoundaryTag::ContactSurface)
}

/// Penalty normal force and regularized friction at each penetrating candidate.
pub fn contact_forces(
    candidates: &[usize],
    x: &[Vec2],
    v: &[Vec2],
    obstacle: &Silhouette,
    params: &ContactParams,
) -> ContactForces {
    let mut nodes = Vec::new();
    for &n in candidates {
        let Some(pen) = obstacle.penetration(x[n]) else {
            continue;
        };
        let normal_force = params.stiffness * pen.depth;
        let vt = v[n] - pen.normal * v[n].dot(&pen.normal);
        let speed = vt.norm();
        // viscous below the regularization speed, capped at mu*N above it
        let damping = params.mu * normal_force / speed.max(params.friction_velocity);
        nodes.push(NodeContact {
            node: n,
            force: pen.normal * normal_force - vt * damping,
            normal_force,
            normal: pen.normal,
            point: pen.point,
            stiffness: params.stiffness,
            damping,
        });
    }
    ContactForces { nodes }
}

/// A node pushed away from a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfContactPair {
    /// Node, segment start, segment end.
    pub nodes: [usize; 3],
    /// Gap gradient weights: gap = n . (x0 - w1 x1 - w2 x2).
    pub weights: [f64; 3],
    pub normal: Vec2,
    pub gap: f64,
    pub force: f64,
}

/// Node-to-segment repulsion between boundary parts that are not neighbours.
#[derive(Debug, Clone)]
pub struct SelfContact {
    nodes: Vec<usize>,
    edges: Vec<BoundaryEdge>,
    /// Edges excluded per node (adjacent along the boundary or touching at rest).
    excluded: Vec<Vec<usize>>,
    /// Activation distance, mm.
    pub distance: f64,
    /// N/mm
    pub stiffness: f64,
}

impl SelfContact {
    pub fn new(mesh: &TriMesh2D, distance: f64, stiffness: f64) -> Self {
        let nodes = mesh.boundary_nodes();
        let edges = mesh.boundary_edges.clone();
        let excluded = nodes
            .iter()
            .map(|&n| {
                let p = mesh.vertices[n];
                // edges sharing the node or one of its boundary neighbours
                let mut near: Vec<usize> = vec![n];
                for e in &edges {
                    if e.a == n {
                        near.push(e.b);
                    }
                    if e.b == n {
                        near.push(e.a);
                    }
                }
                edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| {
                        near.contains(&e.a)
                            || near.contains(&e.b)
                            || super::outline::segment_distance(p, mesh.vertices[e.a], mesh.vertices[e.b])
                                < 2.0 * distance
                    })
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        SelfContact {
            nodes,
            edges,
            excluded,
            distance,
            stiffness,
        }
    }

    /// Active pairs at configuration `x`.
    pub fn pairs(&self, x: &[Vec2]) -> Vec<SelfContactPair> {
        let mut out = Vec::new();
        if self.edges.is_empty() {
            return out;
        }
        let reach = self.distance;
        // bucket edges by their bounding boxes grown by the reach
        let (mut lo, mut hi) = (x[self.edges[0].a], x[self.edges[0].a]);
        let mut longest: f64 = 0.0;
        for e in &self.edges {
            let (a, b) = (x[e.a], x[e.b]);
            lo = lo.inf(&a).inf(&b);
            hi = hi.sup(&a).sup(&b);
            longest = longest.max((b - a).norm());
        }
        let cell = longest + 2.0 * reach;
        lo -= Vec2::repeat(reach);
        let nx = ((hi.x - lo.x + reach) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y + reach) / cell).floor() as usize + 1;
        let index = |p: Vec2| -> (usize, usize) {
            let i = ((p.x - lo.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
            let j = ((p.y - lo.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
            (i, j)
        };
        let mut grid: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
        for (ei, e) in self.edges.iter().enumerate() {
            let (a, b) = (x[e.a], x[e.b]);
            let (i0, j0) = index(a.inf(&b) - Vec2::repeat(reach));
            let (i1, j1) = index(a.sup(&b) + Vec2::repeat(reach));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid[j * nx + i].push(ei);
                }
            }
        }
        for (k, &n) in self.nodes.iter().enumerate() {
            let p = x[n];
            let (i, j) = index(p);
            for &ei in &grid[j * nx + i] {
                let e = &self.edges[ei];
                let (a, b) = (x[e.a], x[e.b]);
                if self.excluded[k].binary_search(&ei).is_ok() {
                    continue;
                }
                let d = b - a;
                let len2 = d.norm_squared();
                if len2 == 0.0 {
                    continue;
                }
                let t = (p - a).dot(&d) / len2;
                if !(0.0..=1.0).contains(&t) {
                    continue;
                }
                // solid lies left of a boundary edge
                let normal = Vec2::new(d.y, -d.x) / len2.sqrt();
                let gap = (p - a).dot(&normal);
                if gap >= self.distance || gap <= -self.distance {
                    continue;
                }
                out.push(SelfContactPair {
                    nodes: [n, e.a, e.b],
                    weights: [1.0, -(1.0 - t), -t],
                    normal,
                    gap,
                    force: self.stiffness * (self.distance - gap),
                });
            }
        }
        out
    }

    /// Active pairs found by checking every node against every edge.
    #[cfg(test)]
    fn pairs_brute(&self, x: &[Vec2]) -> Vec<SelfContactPair> {
        let mut out = Vec::new();
        for (k, &n) in self.nodes.iter().enumerate() {
            let p = x[n];
            for (ei, e) in self.edges.iter().enumerate() {
                if self.excluded[k].binary_search(&ei).is_ok() {
                    continue;
                }
                let (a, b) = (x[e.a], x[e.b]);
                let d = b - a;
                let t = (p - a).dot(&d) / d.norm_squared();
                let normal = Vec2::new(d.y, -d.x) / d.norm();
                let gap = (p - a).dot(&normal);
                if (0.0..=1.0).contains(&t) && gap.abs() < self.distance {
                    out.push(SelfContactPair {
                        nodes: [n, e.a, e.b],
                        weights: [1.0, -(1.0 - t), -t],
                        normal,
                        gap,
                        force: self.stiffness * (self.distance - gap),
                    });
                }
            }
        }
        out
    }
}

/// Adds the repulsion forces of `pairs` to `f`.
pub fn add_self_contact_forces(pairs: &[SelfContactPair], f: &mut [f64]) {
    for q in pairs {
        for k in 0..3 {
            let g = q.normal * (q.force * q.weights[k]);
            f[2 * q.nodes[k]] += g.x;
            f[2 * q.nodes[k] + 1] += g.y;
        }
    }
}

/// `y += scale * K_sc x` for the penalty stiffness of `pairs`, on full DOF vectors.
pub fn apply_self_contact(pairs: &[SelfContactPair], stiffness: f64, scale: f64, x: &[f64], y: &mut [f64]) {
    for q in pairs {
        let mut s = 0.0;
        for k in 0..3 {
            let n = q.nodes[k];
            s += q.weights[k] * (q.normal.x * x[2 * n] + q.normal.y * x[2 * n + 1]);
        }
        let s = s * stiffness * scale;
        for k in 0..3 {
            let n = q.nodes[k];
            y[2 * n] += s * q.weights[k] * q.normal.x;
            y[2 * n + 1] += s * q.weights[k] * q.normal.y;
        }
    }
}
