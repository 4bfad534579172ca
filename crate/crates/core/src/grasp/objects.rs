//! Axisymmetric rigid objects and their profiles in a finger's radial plane.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GraspError;
use crate::fem2d::{Silhouette, Vec2};

/// Largest allowed distance between a curved profile and its polygon, mm.
pub const CHORD_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    /// Standing cylinder; `corner_radius` rounds the rim.
    Cylinder {
        radius: f64,
        height: f64,
        #[serde(default)]
        corner_radius: f64,
    },
    /// Standing cone, base down.
    Cone { radius: f64, height: f64 },
    /// Standing capsule; `height` includes both caps.
    Capsule { radius: f64, height: f64 },
    /// Spheroid with equatorial `radius` and polar extent `height`.
    Ellipsoid { radius: f64, height: f64 },
}

impl Shape {
    /// Largest distance of the surface from the axis, mm.
    pub fn max_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius }
            | Shape::Cylinder { radius, .. }
            | Shape::Cone { radius, .. }
            | Shape::Capsule { radius, .. }
            | Shape::Ellipsoid { radius, .. } => radius,
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => 2.0 * radius,
            Shape::Cylinder { height, .. }
            | Shape::Cone { height, .. }
            | Shape::Capsule { height, .. }
            | Shape::Ellipsoid { height, .. } => height,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Shape::Sphere { radius } if ok(radius) => Ok(()),
            Shape::Cylinder {
                radius,
                height,
                corner_radius,
            } if ok(radius) && ok(height) => {
                if corner_radius >= 0.0 && corner_radius <= radius.min(height / 2.0) {
                    Ok(())
                } else {
                    Err(format!("corner_radius {corner_radius} out of range"))
                }
            }
            Shape::Cone { radius, height } | Shape::Ellipsoid { radius, height } if ok(radius) && ok(height) => Ok(()),
            Shape::Capsule { radius, height } if ok(radius) && height >= 2.0 * radius && height.is_finite() => Ok(()),
            _ => Err(format!("non-positive or inconsistent dimensions in {self:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidObjectSpec {
    pub id: String,
    #[serde(flatten)]
    pub shape: Shape,
    /// kg
    pub mass: f64,
}

impl RigidObjectSpec {
    pub fn new(id: &str, shape: Shape, mass: f64) -> Self {
        RigidObjectSpec {
            id: id.to_string(),
            shape,
            mass,
        }
    }

    pub fn validate(&self) -> Result<(), GraspError> {
        self.shape
            .validate()
            .map_err(|m| GraspError::InvalidObject(format!("{}: {m}", self.id)))?;
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(GraspError::InvalidObject(format!("{}: mass must be positive", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSet {
    pub objects: Vec<RigidObjectSpec>,
}

impl ObjectSet {
    pub fn new(objects: Vec<RigidObjectSpec>) -> Result<Self, GraspError> {
        let set = ObjectSet { objects };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), GraspError> {
        if self.objects.is_empty() {
            return Err(GraspError::EmptyObjectSet);
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            o.validate()?;
            if !seen.insert(o.id.as_str()) {
                return Err(GraspError::DuplicateId(o.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn from_toml(text: &str) -> Result<Self, GraspError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| GraspError::Parse(e.to_string()))?;
        // report unknown shapes by name before serde's generic message
        if let Some(toml::Value::Array(items)) = raw.get("objects") {
            for item in items {
                if let Some(toml::Value::String(s)) = item.get("shape") {
                    if !["sphere", "cylinder", "cone", "capsule", "ellipsoid"].contains(&s.as_str()) {
                        return Err(GraspError::UnknownShape(s.clone()));
                    }
                }
            }
        }
        let set: ObjectSet = toml::from_str(text).map_err(|e| GraspError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, GraspError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraspError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("object set serializes")
    }
}

/// Eight household-scale primitives: radii 10 to 30 mm, masses 0.05 to 0.3 kg.
pub fn default_object_set() -> ObjectSet {
    use Shape::*;
    ObjectSet::new(vec![
        RigidObjectSpec::new("ball_small", Sphere { radius: 10.0 }, 0.05),
        RigidObjectSpec::new("ball_large", Sphere { radius: 25.0 }, 0.15),
        RigidObjectSpec::new(
            "can",
            Cylinder {
                radius: 15.0,
                height: 50.0,
                corner_radius: 2.0,
            },
            0.10,
        ),
        RigidObjectSpec::new(
            "jar",
            Cylinder {
                radius: 30.0,
                height: 40.0,
                corner_radius: 3.0,
            },
            0.30,
        ),
        RigidObjectSpec::new(
            "cone",
            Cone {
                radius: 20.0,
                height: 40.0,
            },
            0.08,
        ),
        RigidObjectSpec::new(
            "capsule",
            Capsule {
                radius: 12.0,
                height: 60.0,
            },
            0.12,
        ),
        RigidObjectSpec::new(
            "egg",
            Ellipsoid {
                radius: 18.0,
                height: 50.0,
            },
            0.07,
        ),
        RigidObjectSpec::new(
            "bottle",
            Cylinder {
                radius: 22.0,
                height: 70.0,
                corner_radius: 4.0,
            },
            0.20,
        ),
    ])
    .expect("default set is valid")
}

/// Number of segments that keep a circular arc of `radius` and `angle`
/// within `tol` of its chords.
fn arc_segments(radius: f64, angle: f64, tol: f64) -> usize {
    if radius <= tol {
        return 1;
    }
    let step = 2.0 * (1.0 - tol / radius).acos();
    ((angle / step).ceil() as usize).max(1)
}

fn arc(center: Vec2, radius: f64, from: f64, to: f64, tol: f64, out: &mut Vec<Vec2>) {
    let n = arc_segments(radius, (to - from).abs(), tol);
    for k in 0..=n {
        let a = from + (to - from) * k as f64 / n as f64;
        out.push(center + Vec2::new(a.cos(), a.sin()) * radius);
    }
}

fn dedup(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() < 1e-12 {
        pts.pop();
    }
    pts
}

/// Profile of the object in a radial plane through its axis: horizontal
/// coordinate is the signed distance from the axis, vertical is height, and
/// the profile is centered on the origin.
pub fn silhouette(obj: &RigidObjectSpec) -> Silhouette {
    silhouette_with_tolerance(&obj.shape, CHORD_TOLERANCE)
}

pub fn silhouette_with_tolerance(shape: &Shape, tol: f64) -> Silhouette {
    let o = Vec2::zeros();
    match *shape {
        Shape::Sphere { radius } => Silhouette::Circle { center: o, radius },
        Shape::Cylinder {
            radius,
            height,
            corner_radius,
        } => {
            let (w, h, c) = (radius, height / 2.0, corner_radius);
            if c <= 0.0 {
                return Silhouette::Polygon(vec![
                    Vec2::new(-w, -h),
                    Vec2::new(w, -h),
                    Vec2::new(w, h),
                    Vec2::new(-w, h),
                ]);
            }
            let mut p = Vec::new();
            arc(Vec2::new(w - c, -h + c), c, -PI / 2.0, 0.0, tol, &mut p);
            arc(Vec2::new(w - c, h - c), c, 0.0, PI / 2.0, tol, &mut p);
            arc(Vec2::new(-w + c, h - c), c, PI / 2.0, PI, tol, &mut p);
            arc(Vec2::new(-w + c, -h + c), c, PI, 1.5 * PI, tol, &mut p);
            Silhouette::Polygon(dedup(p))
        }
        Shape::Cone { radius, height } => Silhouette::Polygon(vec![
            Vec2::new(-radius, -height / 2.0),
            Vec2::new(radius, -height / 2.0),
            Vec2::new(0.0, height / 2.0),
        ]),
        Shape::Capsule { radius, height } => {
            let half = height / 2.0 - radius;
            let mut p = Vec::new();
            arc(Vec2::new(0.0, -half), radius, PI, 2.0 * PI, tol, &mut p);
            arc(Vec2::new(0.0, half), radius, 0.0, PI, tol, &mut p);
            Silhouette::Polygon(dedup(p))
        }
        Shape::Ellipsoid { radius, height } => {
            let (a, b) = (radius, height / 2.0);
            // the flattest point bounds the chord error of equal parameter steps
            let r = (a * a / b).max(b * b / a);
            let n = arc_segments(r, 2.0 * PI, tol).max(8);
            let p = (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    Vec2::new(a * t.cos(), b * t.sin())
                })
                .collect();
            Silhouette::Polygon(p)
        }
    }
}

/// Places a radial-plane profile in the finger frame: the finger's contact
/// edge is the line x = 0 with the mount at y = 0 and the tip toward +y, so
/// heights flip. The profile's outermost point touches x = 0 and its center
/// sits at `grasp_y`.
pub fn place_in_finger_frame(profile: &Silhouette, max_radius: f64, grasp_y: f64) -> Silhouette {
    let map = |p: &Vec2| Vec2::new(p.x - max_radius, grasp_y - p.y);
    match profile {
        Silhouette::Circle { center, radius } => Silhouette::Circle {
            center: map(center),
            radius: *radius,
        },
        Silhouette::Polygon(p) => Silhouette::Polygon(p.iter().rev().map(map).collect()),
    }
}
