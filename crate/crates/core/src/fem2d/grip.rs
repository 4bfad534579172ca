//! Scripted closing of one finger against a fixed object.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::contact::{ContactParams, ContactSummary, SelfContact, Silhouette};
use super::mesh::{triangulate, TriMesh2D};
use super::outline::{finger_outline, FingerOutline, Vec2};
use super::sim::{DynamicState, Integrator, Scene};
use super::{ElasticBody, FemError, SimConfig};
use crate::design::FingerDesign;

/// Meshed finger ready for repeated grip runs.
#[derive(Debug, Clone)]
pub struct FingerModel {
    pub finger: FingerDesign,
    pub outline: FingerOutline,
    pub body: ElasticBody,
    self_contact: SelfContact,
    tip_node: usize,
}

/// One row of a grip trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub tip_x: f64,
    pub tip_y: f64,
    pub total_normal_force: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GripResult {
    pub summary: ContactSummary,
    pub trace: Vec<TraceRow>,
    /// Smallest self-contact gap seen during the run, mm.
    pub min_self_gap: Option<f64>,
    pub final_state: DynamicState,
    /// Set when a step failed.
    pub failure: Option<String>,
}

impl FingerModel {
    pub fn new(finger: &FingerDesign, cfg: &SimConfig) -> Result<Self, FemError> {
        let outline = finger_outline(finger)?;
        let mesh = triangulate(&outline.outline, cfg.h_min, cfg.h_max)?;
        Self::from_mesh(finger, outline, mesh, cfg)
    }

    fn from_mesh(finger: &FingerDesign, outline: FingerOutline, mesh: TriMesh2D, cfg: &SimConfig) -> Result<Self, FemError> {
        let material = cfg.material(finger.depth)?;
        let self_contact = SelfContact::new(&mesh, cfg.self_contact_distance, cfg.self_contact_stiffness);
        let top = Vec2::new(0.0, outline.geometry.y_cap);
        let tip_node = (0..mesh.vertices.len())
            .min_by(|&a, &b| {
                let da = (mesh.vertices[a] - top).norm();
                let db = (mesh.vertices[b] - top).norm();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .ok_or(FemError::NonFinite)?;
        Ok(FingerModel {
            finger: *finger,
            outline,
            body: ElasticBody::new(mesh, material)?,
            self_contact,
            tip_node,
        })
    }

    pub fn mesh(&self) -> &TriMesh2D {
        &self.body.mesh
    }

    /// Closes the mount toward -x by `stroke` over the ramp, then holds until
    /// the finger settles. Step failures end the run with `converged = false`.
    pub fn grip(&self, obstacle: &Silhouette, stroke: f64, cfg: &SimConfig) -> GripResult {
        let scene = Scene {
            obstacle: Some(obstacle.clone()),
            contact: Some(ContactParams {
                stiffness: cfg.penalty_stiffness,
                mu: cfg.friction_mu,
                friction_velocity: cfg.friction_velocity,
            }),
            self_contact: Some(self.self_contact.clone()),
            ..Scene::default()
        };
        let mut it = Integrator::new(&self.body, &self.body.mesh.mount_nodes, scene, cfg);
        let mut state = DynamicState::at_rest(&self.body);
        let ramp_steps = (cfg.t_grip / cfg.dt).ceil() as usize;
        let hold_steps = (cfg.settle_time_max / cfg.dt).ceil() as usize;
        let settle = cfg.settle_energy_model_units();
        let mut trace = Vec::with_capacity(ramp_steps + hold_steps);
        let mut min_gap: Option<f64> = None;
        let mut failure = None;
        let mut settled = false;
        for k in 0..ramp_steps + hold_steps {
            let t = (k + 1) as f64 * cfg.dt;
            let offset = Vec2::new(-stroke * (t / cfg.t_grip).min(1.0), 0.0);
            match it.step(&state, offset) {
                Ok((next, rep)) => {
                    state = next;
                    if let Some(g) = rep.min_self_gap {
                        min_gap = Some(min_gap.map_or(g, |m| m.min(g)));
                    }
                    let tip = state.positions[self.tip_node];
                    trace.push(TraceRow {
                        time: state.time,
                        tip_x: tip.x,
                        tip_y: tip.y,
                        total_normal_force: rep.contact.nodes.iter().map(|c| c.normal_force).sum(),
                        cg_iterations: rep.cg_iterations,
                    });
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
            if k + 1 >= ramp_steps && state.kinetic_energy(&self.body.mass) < settle {
                settled = true;
                break;
            }
        }
        let summary = it.contact_at(&state).summary(settled && failure.is_none());
        GripResult {
            summary,
            trace,
            min_self_gap: min_gap,
            final_state: state,
            failure,
        }
    }
}

/// Meshes `finger` and runs one grip. Geometry and mesh errors propagate.
pub fn grip_simulation(
    finger: &FingerDesign,
    obstacle: &Silhouette,
    stroke: f64,
    cfg: &SimConfig,
) -> Result<ContactSummary, FemError> {
    Ok(FingerModel::new(finger, cfg)?.grip(obstacle, stroke, cfg).summary)
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "time,tip_x,tip_y,total_normal_force,cg_iterations")?;
    for r in trace {
        writeln!(w, "{},{},{},{},{}", r.time, r.tip_x, r.tip_y, r.total_normal_force, r.cg_iterations)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::benchmark_design;

    fn sphere_at_contact(model: &FingerModel, radius: f64) -> Silhouette {
        let y = 2.0 * model.finger.length / 3.0;
        Silhouette::Circle {
            center: Vec2::new(-radius, y),
            radius,
        }
    }

    #[test]
    fn out_of_reach_is_zero() {
        let cfg = SimConfig::default();
        let f = benchmark_design().fingers[0];
        let far = Silhouette::Circle {
            center: Vec2::new(-30.0, 60.0),
            radius: 15.0,
        };
        let s = grip_simulation(&f, &far, 0.0, &cfg).unwrap();
        assert_eq!(s.total_normal_force, 0.0);
        assert!(s.contact_nodes.is_empty());
        assert!(s.converged);
    }

    #[test]
    fn force_grows_with_stroke() {
        let cfg = SimConfig::default();
        let model = FingerModel::new(&benchmark_design().fingers[0], &cfg).unwrap();
        let obj = sphere_at_contact(&model, 15.0);
        let forces: Vec<f64> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&s| {
                let r = model.grip(&obj, s, &cfg);
                assert!(r.summary.converged, "{:?}", r.failure);
                assert!(r.summary.contact_nodes.iter().all(|c| c.normal_force >= 0.0));
                r.summary.total_normal_force
            })
            .collect();
        assert!(forces[0] > 0.0);
        assert!(forces[0] <= forces[1] && forces[1] <= forces[2], "{forces:?}");
    }

    #[test]
    fn squeezed_pockets_stay_open() {
        let cfg = SimConfig::default();
        let f = crate::design::DesignBounds::default().upper_design().fingers[0];
        let model = FingerModel::new(&f, &cfg).unwrap();
        // flat wall along most of the contact face
        let wall = Silhouette::Polygon(vec![
            Vec2::new(-40.0, 20.0),
            Vec2::new(0.0, 20.0),
            Vec2::new(0.0, 95.0),
            Vec2::new(-40.0, 95.0),
        ]);
        let r = model.grip(&wall, 15.0, &cfg);
        assert!(r.failure.is_none(), "{:?}", r.failure);
        let gap = r.min_self_gap.expect("pockets come into contact");
        assert!(gap > 0.0, "walls interpenetrated: {gap}");
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let rows = [TraceRow {
            time: 0.005,
            tip_x: 0.0,
            tip_y: 90.0,
            total_normal_force: 0.0,
            cg_iterations: 3,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("time,tip_x"));
        assert_eq!(s.lines().count(), 2);
    }
}
