//! Corotational linear triangles under plane strain.
//!
//! Per element, with F = [[a, b], [c, d]] and polar factor S, the strain
//! energy splits into a deviatoric part, mu/2 ((a-d)^2 + (b+c)^2), which is
//! quadratic in the nodal positions, and a volumetric part driven by
//! tr S - 2 = |(a+d, c-b)| - 2. The volumetric strain is averaged over the
//! elements around each node before it enters the energy, which removes the
//! volumetric locking of constant-strain triangles near nu = 0.5.

use super::mesh::{signed_area, TriMesh2D};
use super::outline::Vec2;
use super::sparse::{Block, BlockCsr};
use super::{FemError, MaterialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentMode {
    /// Exact second derivative of the energy.
    Consistent,
    /// Drops the curvature of the volumetric strain; always positive semidefinite.
    GaussNewton,
    /// Keeps the curvature term only where it stiffens (elements in volumetric
    /// tension). Positive semidefinite and never softer than the exact tangent,
    /// which keeps linearly implicit steps stable.
    Stabilized,
}

#[derive(Debug, Clone)]
struct Element {
    nodes: [usize; 3],
    area: f64,
    /// Gradients of the barycentric shape functions in the rest state.
    grads: [Vec2; 3],
}

#[derive(Debug, Clone)]
struct NodeElem {
    elem: usize,
    /// Element share of the node's volume.
    weight: f64,
    /// Positions of the element's nodes inside the node's patch.
    local: [usize; 3],
}

/// Per-element kinematics at a configuration.
#[derive(Debug, Clone, Copy)]
struct Kinematics {
    /// tr S
    s: f64,
    cos: f64,
    sin: f64,
    q_dev: [f64; 2],
}

/// Mesh plus material with precomputed rest-state data and matrix pattern.
#[derive(Debug, Clone)]
pub struct ElasticBody {
    pub mesh: TriMesh2D,
    pub material: MaterialModel,
    elems: Vec<Element>,
    node_volume: Vec<f64>,
    node_elems: Vec<Vec<NodeElem>>,
    patches: Vec<Vec<usize>>,
    pattern: BlockCsr,
    elem_blocks: Vec<[usize; 9]>,
    patch_blocks: Vec<Vec<usize>>,
    dev_stiffness: BlockCsr,
    /// Lumped nodal masses, tonne.
    pub mass: Vec<f64>,
    mu: f64,
    kappa: f64,
}

/// Internal forces, tangent stiffness and strain energy at a configuration.
#[derive(Debug, Clone)]
pub struct Assembly {
    /// Internal force, -dE/dx, length 2n.
    pub forces: Vec<f64>,
    pub stiffness: BlockCsr,
    /// N*mm
    pub energy: f64,
}

impl ElasticBody {
    pub fn new(mesh: TriMesh2D, material: MaterialModel) -> Result<Self, FemError> {
        material.validate()?;
        let n = mesh.vertices.len();
        let (lambda, mu) = material.lame();
        let kappa = lambda + mu;
        let mut elems = Vec::with_capacity(mesh.triangles.len());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = mesh.triangle_points(t);
            let area = signed_area(p);
            if !(area > 0.0) {
                return Err(FemError::ElementInversion { element: t });
            }
            let mut grads = [Vec2::zeros(); 3];
            for i in 0..3 {
                let pj = p[(i + 1) % 3];
                let pk = p[(i + 2) % 3];
                grads[i] = Vec2::new(pj.y - pk.y, pk.x - pj.x) / (2.0 * area);
            }
            elems.push(Element {
                nodes: *tri,
                area,
                grads,
            });
        }

        let mut node_volume = vec![0.0; n];
        let mut around: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, el) in elems.iter().enumerate() {
            for &v in &el.nodes {
                node_volume[v] += el.area / 3.0;
                around[v].push(e);
            }
        }
        let mut patches = Vec::with_capacity(n);
        let mut node_elems = Vec::with_capacity(n);
        for v in 0..n {
            let mut patch: Vec<usize> = around[v].iter().flat_map(|&e| elems[e].nodes).collect();
            patch.sort_unstable();
            patch.dedup();
            let list = around[v]
                .iter()
                .map(|&e| NodeElem {
                    elem: e,
                    weight: elems[e].area / 3.0 / node_volume[v],
                    local: elems[e].nodes.map(|u| patch.binary_search(&u).unwrap()),
                })
                .collect();
            patches.push(patch);
            node_elems.push(list);
        }

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for patch in &patches {
            for &a in patch {
                rows[a].extend_from_slice(patch);
            }
        }
        let pattern = BlockCsr::from_pattern(&rows);
        let elem_blocks = elems
            .iter()
            .map(|el| {
                let mut idx = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        idx[3 * a + b] = pattern.index(el.nodes[a], el.nodes[b]);
                    }
                }
                idx
            })
            .collect::<Vec<_>>();
        let patch_blocks = patches
            .iter()
            .map(|p| {
                let mut idx = Vec::with_capacity(p.len() * p.len());
                for &a in p {
                    for &b in p {
                        idx.push(pattern.index(a, b));
                    }
                }
                idx
            })
            .collect();

        let w = material.thickness;
        let mut dev_stiffness = pattern.clone();
        for (e, el) in elems.iter().enumerate() {
            let j = dev_jacobians(&el.grads);
            let c = mu * el.area * w;
            for a in 0..3 {
                for b in 0..3 {
                    let mut blk = [0.0; 4];
                    for r in 0..2 {
                        for s in 0..2 {
                            blk[2 * r + s] = c
                                * (j[0][2 * a + r] * j[0][2 * b + s] + j[1][2 * a + r] * j[1][2 * b + s]);
                        }
                    }
                    dev_stiffness.add(elem_blocks[e][3 * a + b], blk);
                }
            }
        }

        let rho = material.density_model_units();
        let mass = node_volume.iter().map(|v| rho * w * v).collect();

        Ok(ElasticBody {
            mesh,
            material,
            elems,
            node_volume,
            node_elems,
            patches,
            pattern,
            elem_blocks,
            patch_blocks,
            dev_stiffness,
            mass,
            mu,
            kappa,
        })
    }

    pub fn nodes(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn rest_positions(&self) -> &[Vec2] {
        &self.mesh.vertices
    }

    /// Empty matrix with the body's sparsity pattern.
    pub fn pattern(&self) -> &BlockCsr {
        &self.pattern
    }

    /// Node adjacency of the stiffness pattern (excluding the diagonal).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.nodes())
            .map(|i| self.pattern.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn kinematics(&self, x: &[Vec2]) -> Result<Vec<Kinematics>, FemError> {
        self.elems
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..3 {
                    let p = x[el.nodes[i]];
                    let g = el.grads[i];
                    a += p.x * g.x;
                    b += p.x * g.y;
                    c += p.y * g.x;
                    d += p.y * g.y;
                }
                let det = a * d - b * c;
                if !(det > 0.0) {
                    return Err(FemError::ElementInversion { element: e });
                }
                let (u, v) = (a + d, c - b);
                let s = u.hypot(v);
                Ok(Kinematics {
                    s,
                    cos: u / s,
                    sin: v / s,
                    q_dev: [a - d, b + c],
                })
            })
            .collect()
    }

    /// Nodal volumetric strains for the given element kinematics.
    fn nodal_theta(&self, kin: &[Kinematics]) -> Vec<f64> {
        self.node_elems
            .iter()
            .map(|list| list.iter().map(|ne| ne.weight * (kin[ne.elem].s - 2.0)).sum())
            .collect()
    }

    pub fn energy(&self, x: &[Vec2]) -> Result<f64, FemError> {
        let kin = self.kinematics(x)?;
        Ok(self.energy_from(&kin, &self.nodal_theta(&kin)))
    }

    fn energy_from(&self, kin: &[Kinematics], theta: &[f64]) -> f64 {
        let w = self.material.thickness;
        let dev: f64 = self
            .elems
            .iter()
            .zip(kin)
            .map(|(el, k)| 0.5 * self.mu * el.area * w * (k.q_dev[0].powi(2) + k.q_dev[1].powi(2)))
            .sum();
        let vol: f64 = theta
            .iter()
            .zip(&self.node_volume)
            .map(|(t, v)| 0.5 * self.kappa * w * v * t * t)
            .sum();
        dev + vol
    }

    /// Internal force vector only.
    pub fn internal_forces(&self, x: &[Vec2]) -> Result<Vec<f64>, FemError> {
        let kin = self.kinematics(x)?;
        let theta = self.nodal_theta(&kin);
        Ok(self.forces_from(&kin, &theta))
    }

    fn forces_from(&self, kin: &[Kinematics], theta: &[f64]) -> Vec<f64> {
        let w = self.material.thickness;
        let mut f = vec![0.0; 2 * self.nodes()];
        for (el, k) in self.elems.iter().zip(kin) {
            let cd = self.mu * el.area * w;
            // sum of nodal volumetric strains weighted by the element's share
            let cv = self.kappa * w * el.area / 3.0 * el.nodes.iter().map(|&v| theta[v]).sum::<f64>();
            for i in 0..3 {
                let g = el.grads[i];
                let fx = cd * (k.q_dev[0] * g.x + k.q_dev[1] * g.y)
                    + cv * (k.cos * g.x - k.sin * g.y);
                let fy = cd * (-k.q_dev[0] * g.y + k.q_dev[1] * g.x)
                    + cv * (k.sin * g.x + k.cos * g.y);
                let v = el.nodes[i];
                f[2 * v] -= fx;
                f[2 * v + 1] -= fy;
            }
        }
        f
    }

    /// Forces, tangent stiffness and energy at `x`.
    pub fn assemble(&self, x: &[Vec2], mode: TangentMode) -> Result<Assembly, FemError> {
        let kin = self.kinematics(x)?;
        let theta = self.nodal_theta(&kin);
        let forces = self.forces_from(&kin, &theta);
        let energy = self.energy_from(&kin, &theta);
        let w = self.material.thickness;
        let mut k = self.dev_stiffness.clone();

        // rotated shape gradients, ds/dx_i
        let sgrad: Vec<[Vec2; 3]> = self
            .elems
            .iter()
            .zip(&kin)
            .map(|(el, q)| {
                el.grads.map(|g| Vec2::new(q.cos * g.x - q.sin * g.y, q.sin * g.x + q.cos * g.y))
            })
            .collect();

        let mut local: Vec<Vec2> = Vec::new();
        for v in 0..self.nodes() {
            let p = self.patches[v].len();
            local.clear();
            local.resize(p, Vec2::zeros());
            for ne in &self.node_elems[v] {
                for i in 0..3 {
                    local[ne.local[i]] += sgrad[ne.elem][i] * ne.weight;
                }
            }
            let c = self.kappa * w * self.node_volume[v];
            let idx = &self.patch_blocks[v];
            for a in 0..p {
                let ga = local[a];
                for b in 0..p {
                    let gb = local[b];
                    k.add(
                        idx[a * p + b],
                        [c * ga.x * gb.x, c * ga.x * gb.y, c * ga.y * gb.x, c * ga.y * gb.y],
                    );
                }
            }
        }

        if mode != TangentMode::GaussNewton {
            for (e, (el, q)) in self.elems.iter().zip(&kin).enumerate() {
                let ce = self.kappa * w * el.area / 3.0 * el.nodes.iter().map(|&v| theta[v]).sum::<f64>();
                let coef = match mode {
                    TangentMode::Stabilized => ce.max(0.0) / q.s,
                    _ => ce / q.s,
                };
                if coef == 0.0 {
                    continue;
                }
                let h = el.grads.map(|g| {
                    Vec2::new(-q.sin * g.x - q.cos * g.y, -q.sin * g.y + q.cos * g.x)
                });
                for a in 0..3 {
                    for b in 0..3 {
                        let blk: Block = [
                            coef * h[a].x * h[b].x,
                            coef * h[a].x * h[b].y,
                            coef * h[a].y * h[b].x,
                            coef * h[a].y * h[b].y,
                        ];
                        k.add(self.elem_blocks[e][3 * a + b], blk);
                    }
                }
            }
        }

        Ok(Assembly {
            forces,
            stiffness: k,
            energy,
        })
    }
}

/// d(a-d)/dx and d(b+c)/dx as 6-vectors ordered (x0, y0, x1, y1, x2, y2).
fn dev_jacobians(grads: &[Vec2; 3]) -> [[f64; 6]; 2] {
    let mut j = [[0.0; 6]; 2];
    for i in 0..3 {
        let g = grads[i];
        j[0][2 * i] = g.x;
        j[0][2 * i + 1] = -g.y;
        j[1][2 * i] = g.y;
        j[1][2 * i + 1] = g.x;
    }
    j
}
