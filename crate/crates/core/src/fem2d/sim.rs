//! Linearly implicit Euler time stepping with prescribed nodes.

use super::body::{ElasticBody, TangentMode};
use super::contact::{
    add_self_contact_forces, contact_candidates, contact_forces, ContactForces, ContactParams, SelfContact,
    SelfContactPair, Silhouette,
};
use super::outline::Vec2;
use super::solver::{cg_solve, reverse_cuthill_mckee, CgOptions, EnvelopeCholesky, LinearOperator};
use super::sparse::{Csr, Restriction};
use super::{FemError, SimConfig};

/// Positions and velocities of all nodes at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    /// s
    pub time: f64,
}

impl DynamicState {
    pub fn at_rest(body: &ElasticBody) -> Self {
        DynamicState {
            positions: body.rest_positions().to_vec(),
            velocities: vec![Vec2::zeros(); body.nodes()],
            time: 0.0,
        }
    }

    /// N*mm
    pub fn kinetic_energy(&self, mass: &[f64]) -> f64 {
        self.velocities.iter().zip(mass).map(|(v, m)| 0.5 * m * v.norm_squared()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|p| p.x.is_finite() && p.y.is_finite())
    }
}

/// External influences on the body.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    /// mm/s^2
    pub gravity: Vec2,
    /// Constant point loads, N.
    pub loads: Vec<(usize, Vec2)>,
    pub obstacle: Option<Silhouette>,
    pub contact: Option<ContactParams>,
    pub self_contact: Option<SelfContact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub cg_iterations: usize,
    pub residual: f64,
    pub contact: ContactForces,
    /// Smallest self-contact gap among active pairs, mm.
    pub min_self_gap: Option<f64>,
}

/// Iterations above which the lagged preconditioner is rebuilt.
const REFACTOR_ITERATIONS: usize = 6;

/// Time stepper for one body. Prescribed nodes follow a rigid offset from
/// their rest positions and are removed from the linear solve.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    body: &'a ElasticBody,
    pub scene: Scene,
    dt: f64,
    alpha: f64,
    beta: f64,
    cg: CgOptions,
    pub tangent: TangentMode,
    prescribed: Vec<usize>,
    /// Free index per DOF, `usize::MAX` when prescribed.
    map: Vec<usize>,
    free: usize,
    restriction: Restriction,
    perm: Vec<usize>,
    candidates: Vec<usize>,
    precond: Option<EnvelopeCholesky>,
    warm: Vec<f64>,
}

struct FreeOperator<'s> {
    matrix: &'s Csr,
    pairs: &'s [SelfContactPair],
    map: &'s [usize],
    /// dt^2 times the self-contact stiffness
    coef: f64,
}

impl LinearOperator for FreeOperator<'_> {
    fn dim(&self) -> usize {
        self.matrix.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y);
        for q in self.pairs {
            let dof = |k: usize, c: usize| self.map[2 * q.nodes[k] + c];
            let mut s = 0.0;
            for k in 0..3 {
                for c in 0..2 {
                    let d = dof(k, c);
                    if d != usize::MAX {
                        s += q.weights[k] * q.normal[c] * x[d];
                    }
                }
            }
            s *= self.coef;
            for k in 0..3 {
                for c in 0..2 {
                    let d = dof(k, c);
                    if d != usize::MAX {
                        y[d] += s * q.weights[k] * q.normal[c];
                    }
                }
            }
        }
    }
}

impl<'a> Integrator<'a> {
    pub fn new(body: &'a ElasticBody, prescribed: &[usize], scene: Scene, cfg: &SimConfig) -> Self {
        let n = body.nodes();
        let mut is_fixed = vec![false; n];
        for &p in prescribed {
            is_fixed[p] = true;
        }
        let mut map = vec![usize::MAX; 2 * n];
        let node_order = reverse_cuthill_mckee(&body.adjacency());
        let mut free = 0;
        for v in 0..n {
            if !is_fixed[v] {
                map[2 * v] = free;
                map[2 * v + 1] = free + 1;
                free += 2;
            }
        }
        let perm = node_order
            .iter()
            .filter(|&&v| !is_fixed[v])
            .flat_map(|&v| [map[2 * v], map[2 * v + 1]])
            .collect();
        let restriction = Restriction::new(body.pattern(), &map, free);
        Integrator {
            body,
            scene,
            dt: cfg.dt,
            alpha: cfg.rayleigh_alpha,
            beta: cfg.rayleigh_beta,
            cg: CgOptions {
                tol: cfg.cg_tol,
                max_iter: cfg.cg_maxiter,
            },
            tangent: TangentMode::Stabilized,
            prescribed: prescribed.to_vec(),
            map,
            free,
            restriction,
            perm,
            candidates: contact_candidates(&body.mesh),
            precond: None,
            warm: vec![0.0; free],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Contact response at a state without stepping.
    pub fn contact_at(&self, state: &DynamicState) -> ContactForces {
        match (&self.scene.obstacle, &self.scene.contact) {
            (Some(obs), Some(p)) => contact_forces(&self.candidates, &state.positions, &state.velocities, obs, p),
            _ => ContactForces::default(),
        }
    }

    /// Advances by one step; prescribed nodes end at rest position + `offset`.
    pub fn step(&mut self, state: &DynamicState, offset: Vec2) -> Result<(DynamicState, StepReport), FemError> {
        let body = self.body;
        let n = body.nodes();
        let dt = self.dt;
        let x = &state.positions;
        let v = &state.velocities;
        let vflat: Vec<f64> = v.iter().flat_map(|p| [p.x, p.y]).collect();

        let asm = body.assemble(x, self.tangent)?;
        let mut f = asm.forces;
        let mut kv = vec![0.0; 2 * n];
        asm.stiffness.matvec(&vflat, &mut kv);
        for i in 0..n {
            let m = body.mass[i];
            for c in 0..2 {
                f[2 * i + c] += m * (self.scene.gravity[c] - self.alpha * v[i][c]) - self.beta * kv[2 * i + c];
            }
        }
        for &(i, load) in &self.scene.loads {
            f[2 * i] += load.x;
            f[2 * i + 1] += load.y;
        }
        let contact = self.contact_at(state);
        contact.add_to(&mut f);
        let pairs = match &self.scene.self_contact {
            Some(sc) => sc.pairs(x),
            None => Vec::new(),
        };
        add_self_contact_forces(&pairs, &mut f);
        let k_sc = self.scene.self_contact.as_ref().map_or(0.0, |s| s.stiffness);

        // S = M(1 + dt alpha) + (dt beta + dt^2) K + dt C_f + dt^2 (K_c + K_sc)
        let mut s = asm.stiffness.clone();
        s.axpby(dt * self.beta + dt * dt, 0.0, &asm.stiffness);
        for i in 0..n {
            let m = body.mass[i] * (1.0 + dt * self.alpha);
            s.add_diagonal(i, [m, 0.0, 0.0, m]);
        }
        // (K + K_c + K_sc) v for the right-hand side
        let mut kfull = kv;
        for c in &contact.nodes {
            let nn = c.normal;
            let t = Vec2::new(-nn.y, nn.x);
            let (kc, cf) = (c.stiffness, c.damping);
            let blk = [
                dt * dt * kc * nn.x * nn.x + dt * cf * t.x * t.x,
                dt * dt * kc * nn.x * nn.y + dt * cf * t.x * t.y,
                dt * dt * kc * nn.y * nn.x + dt * cf * t.y * t.x,
                dt * dt * kc * nn.y * nn.y + dt * cf * t.y * t.y,
            ];
            s.add_diagonal(c.node, blk);
            let vn = kc * nn.dot(&v[c.node]);
            kfull[2 * c.node] += vn * nn.x;
            kfull[2 * c.node + 1] += vn * nn.y;
        }
        super::contact::apply_self_contact(&pairs, k_sc, 1.0, &vflat, &mut kfull);
        let mut rhs: Vec<f64> = (0..2 * n).map(|d| dt * (f[d] - dt * kfull[d])).collect();

        // prescribed velocity change moves to the right-hand side
        let rest = body.rest_positions();
        let mut dv_p = vec![0.0; 2 * n];
        for &p in &self.prescribed {
            let target = rest[p] + offset;
            let vnew = (target - x[p]) / dt;
            dv_p[2 * p] = vnew.x - v[p].x;
            dv_p[2 * p + 1] = vnew.y - v[p].y;
        }
        if !self.prescribed.is_empty() {
            let mut sd = vec![0.0; 2 * n];
            s.matvec(&dv_p, &mut sd);
            super::contact::apply_self_contact(&pairs, k_sc, dt * dt, &dv_p, &mut sd);
            for d in 0..2 * n {
                rhs[d] -= sd[d];
            }
        }

        let matrix = self.restriction.apply(&s);
        // the lagged factor sees only the diagonal blocks of the pair terms
        let factor_matrix = if pairs.is_empty() {
            None
        } else {
            let mut sp = s;
            for q in &pairs {
                for k in 0..3 {
                    let w = q.weights[k] * q.weights[k] * k_sc * dt * dt;
                    let nn = q.normal;
                    sp.add_diagonal(q.nodes[k], [w * nn.x * nn.x, w * nn.x * nn.y, w * nn.y * nn.x, w * nn.y * nn.y]);
                }
            }
            Some(self.restriction.apply(&sp))
        };
        let factor_matrix = factor_matrix.as_ref().unwrap_or(&matrix);
        let op = FreeOperator {
            matrix: &matrix,
            pairs: &pairs,
            map: &self.map,
            coef: k_sc * dt * dt,
        };
        let b: Vec<f64> = {
            let mut b = vec![0.0; self.free];
            for d in 0..2 * n {
                if self.map[d] != usize::MAX {
                    b[self.map[d]] = rhs[d];
                }
            }
            b
        };

        let mut dv = self.warm.clone();
        if self.precond.is_none() {
            self.precond = EnvelopeCholesky::factor(factor_matrix, self.perm.clone());
        }
        let mut report = match &self.precond {
            Some(pc) => cg_solve(&op, &b, &mut dv, pc, self.cg),
            None => cg_solve(&op, &b, &mut dv, &super::solver::IdentityPreconditioner, self.cg),
        };
        if !report.converged || report.iterations > REFACTOR_ITERATIONS {
            self.precond = EnvelopeCholesky::factor(factor_matrix, self.perm.clone());
            if !report.converged {
                if let Some(pc) = &self.precond {
                    let again = cg_solve(&op, &b, &mut dv, pc, self.cg);
                    report = super::solver::CgReport {
                        iterations: report.iterations + again.iterations,
                        ..again
                    };
                }
            }
        }
        if !report.converged {
            return Err(FemError::StepNotConverged {
                residual: report.residual,
                iterations: report.iterations,
            });
        }
        self.warm.copy_from_slice(&dv);

        let mut next = DynamicState {
            positions: x.clone(),
            velocities: v.clone(),
            time: state.time + dt,
        };
        for i in 0..n {
            for c in 0..2 {
                let d = self.map[2 * i + c];
                if d != usize::MAX {
                    next.velocities[i][c] += dv[d];
                }
            }
        }
        for &p in &self.prescribed {
            next.velocities[p] += Vec2::new(dv_p[2 * p], dv_p[2 * p + 1]);
        }
        for i in 0..n {
            next.positions[i] += next.velocities[i] * dt;
        }
        for &p in &self.prescribed {
            next.positions[p] = rest[p] + offset;
        }
        if !next.is_finite() {
            return Err(FemError::NonFinite);
        }
        let min_self_gap = pairs.iter().map(|q| q.gap).reduce(f64::min);
        Ok((
            next,
            StepReport {
                cg_iterations: report.iterations,
                residual: report.residual,
                contact,
                min_self_gap,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::mesh::{structured_rectangle, triangulate};
    use crate::fem2d::outline::Outline;
    use crate::fem2d::MaterialModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn material(w: f64) -> MaterialModel {
        MaterialModel::new(11.6, 0.49, 1150.0, w).unwrap()
    }

    fn strip(h: f64) -> ElasticBody {
        ElasticBody::new(triangulate(&Outline::rectangle(4.0, 100.0), h, h).unwrap(), material(20.0)).unwrap()
    }

    fn mechanical_energy(body: &ElasticBody, s: &DynamicState) -> f64 {
        s.kinetic_energy(&body.mass) + body.energy(&s.positions).unwrap()
    }

    #[test]
    fn rest_is_fixed_point() {
        let body = strip(4.0);
        let cfg = SimConfig::default();
        let mut it = Integrator::new(&body, &body.mesh.mount_nodes, Scene::default(), &cfg);
        let s0 = DynamicState::at_rest(&body);
        let (s1, rep) = it.step(&s0, Vec2::zeros()).unwrap();
        assert_eq!(s1.positions, s0.positions);
        assert_eq!(s1.velocities, s0.velocities);
        assert_eq!(rep.cg_iterations, 0);
    }

    #[test]
    fn free_fall_velocity() {
        let body = strip(4.0);
        let cfg = SimConfig {
            rayleigh_alpha: 0.0,
            ..SimConfig::default()
        };
        let g = Vec2::new(0.0, -9810.0);
        let scene = Scene {
            gravity: g,
            ..Scene::default()
        };
        let mut it = Integrator::new(&body, &[], scene, &cfg);
        let mut s = DynamicState::at_rest(&body);
        for k in 1..=20 {
            s = it.step(&s, Vec2::zeros()).unwrap().0;
            let expect = g * (k as f64 * cfg.dt);
            for v in &s.velocities {
                assert!((v - expect).norm() <= 1e-9 * expect.norm(), "{v} vs {expect}");
            }
        }
    }

    #[test]
    fn damped_energy_never_grows() {
        let body = ElasticBody::new(structured_rectangle(10.0, 30.0, 4, 10), material(20.0)).unwrap();
        let cfg = SimConfig::default();
        let mut it = Integrator::new(&body, &body.mesh.mount_nodes, Scene::default(), &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = DynamicState::at_rest(&body);
        let fixed: std::collections::HashSet<usize> = body.mesh.mount_nodes.iter().copied().collect();
        for (i, p) in s.positions.iter_mut().enumerate() {
            if !fixed.contains(&i) {
                *p += Vec2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            }
        }
        for v in s.velocities.iter_mut() {
            *v = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        }
        for &i in &body.mesh.mount_nodes {
            s.velocities[i] = Vec2::zeros();
        }
        let mut e = mechanical_energy(&body, &s);
        for _ in 0..500 {
            s = it.step(&s, Vec2::zeros()).unwrap().0;
            let e1 = mechanical_energy(&body, &s);
            assert!(e1 <= e + 1e-9, "{e1} > {e}");
            e = e1;
        }
    }

    /// Runs until the fastest node is slower than `vtol` mm/s.
    fn settle(it: &mut Integrator, mut s: DynamicState, vtol: f64, max_steps: usize) -> DynamicState {
        for _ in 0..max_steps {
            s = it.step(&s, Vec2::zeros()).unwrap().0;
            if s.velocities.iter().all(|v| v.norm() < vtol) {
                break;
            }
        }
        s
    }

    fn cantilever_deflection(h: f64) -> f64 {
        let body = strip(h);
        let tip: Vec<usize> = (0..body.nodes()).filter(|&i| (body.rest_positions()[i].y - 100.0).abs() < 1e-9).collect();
        let load = Vec2::new(0.01 / tip.len() as f64, 0.0);
        let scene = Scene {
            loads: tip.iter().map(|&i| (i, load)).collect(),
            ..Scene::default()
        };
        let mut it = Integrator::new(&body, &body.mesh.mount_nodes, scene, &SimConfig::default());
        let s = settle(&mut it, DynamicState::at_rest(&body), 1e-6, 20_000);
        tip.iter().map(|&i| s.positions[i].x - body.rest_positions()[i].x).sum::<f64>() / tip.len() as f64
    }

    #[test]
    fn cantilever_matches_beam_theory() {
        let (e, nu, w, t, l, f): (f64, f64, f64, f64, f64, f64) = (11.6, 0.49, 20.0, 4.0, 100.0, 0.01);
        let ep = e / (1.0 - nu * nu);
        let i = w * t * t * t / 12.0;
        let analytic = f * l * l * l / (3.0 * ep * i);
        assert!((analytic - 2.05).abs() < 0.01);
        let errs: Vec<f64> = [4.0, 2.0, 1.0]
            .iter()
            .map(|&h| (cantilever_deflection(h) - analytic).abs() / analytic)
            .collect();
        assert!(errs[2] <= 0.10, "{errs:?}");
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn deterministic() {
        let run = || {
            let body = strip(2.0);
            let tip: Vec<usize> = (0..body.nodes()).filter(|&i| body.rest_positions()[i].y > 99.0).collect();
            let scene = Scene {
                loads: tip.iter().map(|&i| (i, Vec2::new(0.003, 0.0))).collect(),
                ..Scene::default()
            };
            let mut it = Integrator::new(&body, &body.mesh.mount_nodes, scene, &SimConfig::default());
            let mut s = DynamicState::at_rest(&body);
            for k in 0..50 {
                s = it.step(&s, Vec2::new(-0.02 * k as f64, 0.0)).unwrap().0;
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn prescribed_nodes_follow_offset() {
        let body = strip(4.0);
        let mut it = Integrator::new(&body, &body.mesh.mount_nodes, Scene::default(), &SimConfig::default());
        let s0 = DynamicState::at_rest(&body);
        let off = Vec2::new(-0.3, 0.1);
        let (s1, _) = it.step(&s0, off).unwrap();
        for &i in &body.mesh.mount_nodes {
            assert_eq!(s1.positions[i], body.rest_positions()[i] + off);
        }
    }
}
