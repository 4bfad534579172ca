//! Grasp scenes, the elapsed-time hold test and the success-rate objective.

pub mod objects;

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::design::{FeatureDescriptor, GripperDesign};
use crate::fem2d::{FingerModel, SimConfig};
pub use objects::{default_object_set, place_in_finger_frame, silhouette, ObjectSet, RigidObjectSpec, Shape};

/// Standard gravity, m/s^2.
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraspError {
    #[error("object set is empty")]
    EmptyObjectSet,
    #[error("unknown shape `{0}`")]
    UnknownShape(String),
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("invalid object {0}")]
    InvalidObject(String),
    #[error("object set parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

/// Scene and hold-test settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    /// Object center height as a fraction of finger length from the mount.
    pub grasp_height: f64,
    /// mm
    pub clearance: f64,
    /// mm
    pub stroke_max: f64,
    /// s
    pub hold_time: f64,
    /// mm
    pub hold_threshold: f64,
    /// Friction coefficient between fingers and object during the hold.
    pub hold_mu: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig {
            grasp_height: 2.0 / 3.0,
            clearance: 1.0,
            stroke_max: 15.0,
            hold_time: 1.0,
            hold_threshold: 5.0,
            hold_mu: 0.8,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.grasp_height > 0.0 && self.grasp_height < 1.0, "grasp_height must be in (0, 1)"),
            (self.clearance >= 0.0, "clearance must be non-negative"),
            (self.stroke_max >= 0.0, "stroke_max must be non-negative"),
            (self.hold_time > 0.0, "hold_time must be positive"),
            (self.hold_threshold >= 0.0, "hold_threshold must be non-negative"),
            (self.hold_mu >= 0.0, "hold_mu must be non-negative"),
        ];
        match checks.iter().find(|c| !c.0) {
            Some((_, m)) => Err(m.to_string()),
            None => Ok(()),
        }
    }
}

/// Mount travel for one object: the gap left between reach envelope and
/// object, capped. The same for all three fingers.
pub fn closing_stroke(d_mount: f64, max_radius: f64, cfg: &GraspConfig) -> f64 {
    (d_mount - max_radius - cfg.clearance).max(0.0).min(cfg.stroke_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldResult {
    pub held: bool,
    /// Slide of the object after the hold time, mm.
    pub displacement: f64,
}

/// Vertical slide of an object squeezed by three normal forces (N) with
/// friction `mu`, mass in kg, after `cfg.hold_time`.
pub fn hold_test(forces: [f64; 3], mu: f64, mass: f64, cfg: &GraspConfig) -> HoldResult {
    let capacity = mu * forces.iter().sum::<f64>();
    let weight = mass * GRAVITY;
    let displacement = if capacity >= weight {
        0.0
    } else {
        let a = (weight - capacity) / mass;
        0.5 * a * cfg.hold_time * cfg.hold_time * 1e3
    };
    HoldResult {
        held: displacement <= cfg.hold_threshold,
        displacement,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoContact,
    Slipped,
    SimNotConverged,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::NoContact => "no_contact",
            FailureReason::Slipped => "slipped",
            FailureReason::SimNotConverged => "sim_not_converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub object: String,
    /// Settled normal force of each finger, N.
    pub normal_forces: [f64; 3],
    pub stroke: f64,
    pub held: bool,
    pub displacement: f64,
    pub failure: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub design: GripperDesign,
    pub outcomes: Vec<GraspOutcome>,
    pub success_rate: f64,
    /// Absent when the design has no valid geometry.
    pub features: Option<FeatureDescriptor>,
    /// Finger-object grip runs actually simulated.
    pub simulations: usize,
    pub wall_time: f64,
}

/// Simulation and scene settings for design evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    pub sim: SimConfig,
    pub grasp: GraspConfig,
}

/// Grips every object with the design's three fingers and runs the hold test.
/// Identical fingers share one simulation per object. Per-object failures
/// count as unsuccessful grasps; only an empty object set is an error.
pub fn evaluate_design(d: &GripperDesign, objs: &ObjectSet, cfg: &EvalConfig) -> Result<EvaluationResult, GraspError> {
    if objs.is_empty() {
        return Err(GraspError::EmptyObjectSet);
    }
    let start = Instant::now();
    let features = d.features().ok();

    // one model per distinct finger
    let mut slot_of = [0usize; 3];
    let mut distinct: Vec<usize> = Vec::new();
    let mut keys: HashMap<_, usize> = HashMap::new();
    for (k, f) in d.fingers.iter().enumerate() {
        slot_of[k] = *keys.entry(f.key()).or_insert_with(|| {
            distinct.push(k);
            distinct.len() - 1
        });
    }
    let models: Vec<Option<FingerModel>> = distinct
        .iter()
        .map(|&k| FingerModel::new(&d.fingers[k], &cfg.sim).ok())
        .collect();

    let mut simulations = 0;
    let mut outcomes = Vec::with_capacity(objs.len());
    for obj in &objs.objects {
        let r = obj.shape.max_radius();
        let stroke = closing_stroke(d.d_mount, r, &cfg.grasp);
        let profile = silhouette(obj);
        // force and convergence per distinct finger
        let runs: Vec<(f64, bool)> = models
            .iter()
            .map(|m| match m {
                None => (0.0, false),
                Some(_) if stroke == 0.0 => (0.0, true),
                Some(m) => {
                    simulations += 1;
                    let y = cfg.grasp.grasp_height * m.finger.length;
                    let scene = place_in_finger_frame(&profile, r, y);
                    let s = m.grip(&scene, stroke, &cfg.sim).summary;
                    (s.total_normal_force, s.converged)
                }
            })
            .collect();
        let normal_forces = slot_of.map(|s| runs[s].0);
        let converged = runs.iter().all(|r| r.1);
        let hold = hold_test(normal_forces, cfg.grasp.hold_mu, obj.mass, &cfg.grasp);
        let held = converged && hold.held;
        let failure = if !converged {
            Some(FailureReason::SimNotConverged)
        } else if normal_forces.iter().sum::<f64>() == 0.0 {
            Some(FailureReason::NoContact)
        } else if !hold.held {
            Some(FailureReason::Slipped)
        } else {
            None
        };
        outcomes.push(GraspOutcome {
            object: obj.id.clone(),
            normal_forces,
            stroke,
            held: held && failure.is_none(),
            displacement: hold.displacement,
            failure,
        });
    }
    let successes = outcomes.iter().filter(|o| o.held).count();
    Ok(EvaluationResult {
        design: d.clone(),
        success_rate: successes as f64 / outcomes.len() as f64,
        outcomes,
        features,
        simulations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Success matrix: one row per design, one 0/1 column per object, then the rate.
pub fn write_success_matrix<W: Write>(rows: &[(String, &EvaluationResult)], objs: &ObjectSet, mut w: W) -> std::io::Result<()> {
    write!(w, "design")?;
    for o in &objs.objects {
        write!(w, ",{}", o.id)?;
    }
    writeln!(w, ",success_rate")?;
    for (label, r) in rows {
        write!(w, "{label}")?;
        for o in &objs.objects {
            let held = r.outcomes.iter().find(|x| x.object == o.id).is_some_and(|x| x.held);
            write!(w, ",{}", u8::from(held))?;
        }
        writeln!(w, ",{}", r.success_rate)?;
    }
    Ok(())
}
