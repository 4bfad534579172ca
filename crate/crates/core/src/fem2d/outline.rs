//! Fin-ray cross-section construction.
//!
//! Finger-local frame: the contact edge runs along x = 0 from the mount
//! (y = 0) to the tip (y = H); the base spans x in [0, L] at y = 0 and the
//! outer back edge joins (L, 0) to (0, H).

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::FingerDesign;

pub type Vec2 = Vector2<f64>;

/// Walls thinner than this are widened so the outline stays meshable.
pub const MIN_WALL: f64 = 0.5;
/// Width of the flat that truncates the sharp outer tip, mm.
pub const TIP_FLAT: f64 = 1.0;
/// Narrowest allowed flat at the top of the hollow, mm.
pub const TOP_FLAT: f64 = 1.0;
/// Smallest allowed clearance inside a pocket, mm.
pub const MIN_POCKET_GAP: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("front and back walls overlap")]
    WallsOverlap,
    #[error("rib {rib} does not fit between base and tip")]
    RibDoesNotFit { rib: usize },
    #[error("rib {rib} leaves no pocket clearance")]
    RibsOverlap { rib: usize },
    #[error("rib {rib} has non-positive span")]
    RibSpan { rib: usize },
    #[error("invalid parameter {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Mount,
    ContactSurface,
    BackSurface,
    Tip,
    RibInterior,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Mount => "mount",
            BoundaryTag::ContactSurface => "contact_surface",
            BoundaryTag::BackSurface => "back_surface",
            BoundaryTag::Tip => "tip",
            BoundaryTag::RibInterior => "rib_interior",
        }
    }
}

/// Closed polygon; `tags[i]` labels the edge from `points[i]` to `points[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedLoop {
    pub points: Vec<Vec2>,
    pub tags: Vec<BoundaryTag>,
}

impl TaggedLoop {
    pub fn new(points: Vec<Vec2>, tags: Vec<BoundaryTag>) -> Self {
        assert_eq!(points.len(), tags.len());
        TaggedLoop { points, tags }
    }

    pub fn uniform(points: Vec<Vec2>, tag: BoundaryTag) -> Self {
        let tags = vec![tag; points.len()];
        TaggedLoop { points, tags }
    }

    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        (self.points[i], self.points[(i + 1) % self.points.len()])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.points)
    }
}

/// Planar region: a counter-clockwise outer loop and clockwise holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Outline {
    pub outer: TaggedLoop,
    pub holes: Vec<TaggedLoop>,
    /// Thinnest feature, used to pick the element size. `None` for generic shapes.
    pub min_feature: Option<f64>,
}

impl Outline {
    pub fn loops(&self) -> impl Iterator<Item = &TaggedLoop> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    pub fn area(&self) -> f64 {
        self.loops().map(|l| l.signed_area()).sum()
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        self.loops().filter(|l| crossing_parity(&l.points, p)).count() % 2 == 1
    }

    /// Distance from `p` to the nearest outline edge.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for l in self.loops() {
            for i in 0..l.len() {
                let (a, b) = l.edge(i);
                best = best.min(segment_distance(p, a, b));
            }
        }
        best
    }

    /// Axis-aligned unit square, all edges tagged `Mount` except the top.
    pub fn rectangle(width: f64, height: f64) -> Outline {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(width, 0.0),
            Vec2::new(width, height),
            Vec2::new(0.0, height),
        ];
        let tags = vec![
            BoundaryTag::Mount,
            BoundaryTag::BackSurface,
            BoundaryTag::Tip,
            BoundaryTag::ContactSurface,
        ];
        Outline {
            outer: TaggedLoop::new(pts, tags),
            holes: Vec::new(),
            min_feature: None,
        }
    }
}

pub fn shoelace(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

fn crossing_parity(pts: &[Vec2], p: Vec2) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - p).norm()
}

/// Dimensions derived from a finger record, shared by the volume feature and
/// the outline builder.
#[derive(Debug, Clone, PartialEq)]
pub struct FinGeometry {
    pub length: f64,
    pub width: f64,
    pub depth: f64,
    pub front: f64,
    pub back: f64,
    pub rib_thickness: f64,
    /// Rib tilt in radians.
    pub angle: f64,
    /// Inner back face: x/L + y/H = c.
    pub c: f64,
    /// Start of the solid tip.
    pub y_tip: f64,
    /// Where the inner front and back faces would meet.
    pub y_apex: f64,
    /// Top of the hollow region, which always ends in a flat.
    pub y_top: f64,
    /// Height of the tip flat.
    pub y_cap: f64,
    /// Rib centerline heights on the inner front face.
    pub stations: Vec<f64>,
    /// Rib centerline lengths between the inner faces.
    pub spans: Vec<f64>,
}

impl FinGeometry {
    pub fn new(f: &FingerDesign) -> Result<Self, GeometryError> {
        let (h, l) = (f.length, f.width);
        let checks: [(bool, &'static str); 7] = [
            (h.is_finite() && h > 0.0, "H"),
            (l.is_finite() && l > 0.0, "L"),
            (f.depth.is_finite() && f.depth > 0.0, "W"),
            (f.tip_length.is_finite() && f.tip_length >= 0.0 && f.tip_length < h, "L_tip"),
            (f.back_thickness.is_finite() && f.back_thickness > 0.0, "t_back"),
            (f.rib_thickness.is_finite() && f.rib_thickness > 0.0 && f.rib_count >= 1, "t_rib"),
            (f.rib_angle.is_finite() && f.rib_angle.abs() < 80.0, "D_angle"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(GeometryError::InvalidParameter(name));
            }
        }
        if !f.flex_thickness.is_finite() {
            return Err(GeometryError::InvalidParameter("t_flex"));
        }
        let front = f.flex_thickness.max(MIN_WALL);
        let back = f.back_thickness;
        let c = 1.0 - back * (1.0 / (l * l) + 1.0 / (h * h)).sqrt();
        let y_tip = h - f.tip_length;
        let y_apex = h * (c - front / l);
        let y_top = y_tip.min(y_apex - TOP_FLAT * h / l);
        if l * c <= front || y_top <= 0.0 {
            return Err(GeometryError::WallsOverlap);
        }
        let y_cap = h * (1.0 - TIP_FLAT / l);
        if y_cap <= y_tip {
            return Err(GeometryError::InvalidParameter("L_tip"));
        }
        let angle = f.rib_angle.to_radians();
        let mut g = FinGeometry {
            length: h,
            width: l,
            depth: f.depth,
            front,
            back,
            rib_thickness: f.rib_thickness,
            angle,
            c,
            y_tip,
            y_apex,
            y_top,
            y_cap,
            stations: Vec::new(),
            spans: Vec::new(),
        };
        if g.span_denominator() <= 0.0 {
            return Err(GeometryError::RibSpan { rib: 1 });
        }
        let (a, b) = g.station_range();
        let n = f.rib_count as usize;
        let step = (b - a) / (n as f64 + 1.0);
        for k in 1..=n {
            let y = a + k as f64 * step;
            let s = g.span_at(y);
            if !(s > 0.0) {
                return Err(GeometryError::RibSpan { rib: k });
            }
            g.stations.push(y);
            g.spans.push(s);
        }
        Ok(g)
    }

    fn span_denominator(&self) -> f64 {
        self.angle.cos() / self.width + self.angle.sin() / self.length
    }

    pub fn rib_dir(&self) -> Vec2 {
        Vec2::new(self.angle.cos(), self.angle.sin())
    }

    pub fn rib_normal(&self) -> Vec2 {
        Vec2::new(-self.angle.sin(), self.angle.cos())
    }

    /// Distance along the rib axis from the inner front face (at height `y`)
    /// to the inner back face.
    pub fn span_at(&self, y: f64) -> f64 {
        (self.c - self.front / self.width - y / self.length) / self.span_denominator()
    }

    /// Point where the line through `p` along the rib axis meets the inner back face.
    fn hit_back(&self, p: Vec2) -> Vec2 {
        let s = (self.c - p.x / self.width - p.y / self.length) / self.span_denominator();
        p + self.rib_dir() * s
    }

    /// Corners of rib edge `side` (-1 lower, +1 upper) for centerline height `y`:
    /// (front corner, back corner).
    pub fn rib_edge(&self, y: f64, side: f64) -> (Vec2, Vec2) {
        let off = self.rib_normal() * (0.5 * side * self.rib_thickness);
        let p = Vec2::new(self.front, y) + off;
        // slide along the edge back onto the front face
        let t = (self.front - p.x) / self.angle.cos();
        let front = p + self.rib_dir() * t;
        (front, self.hit_back(front))
    }

    /// Range of centerline heights over which a rib stays inside the hollow
    /// region; the N stations split it evenly.
    fn station_range(&self) -> (f64, f64) {
        // corner heights are affine in the station height
        let corner_y = |y: f64, side: f64, which: usize| {
            let (f, b) = self.rib_edge(y, side);
            if which == 0 {
                f.y
            } else {
                b.y
            }
        };
        let solve = |side: f64, which: usize, target: f64| {
            let y0 = corner_y(0.0, side, which);
            let slope = corner_y(1.0, side, which) - y0;
            (target - y0) / slope
        };
        let a = solve(-1.0, 0, 0.0).max(solve(-1.0, 1, 0.0));
        let b = solve(1.0, 0, self.y_top).min(solve(1.0, 1, self.y_top));
        (a, b)
    }

    /// Area of the hollow region before ribs are added.
    pub fn hollow_area(&self) -> f64 {
        let (l, h) = (self.width, self.length);
        let w0 = l * self.c - self.front;
        self.y_top * w0 - l * self.y_top * self.y_top / (2.0 * h)
    }

    /// Walls and solid tip, times the depth.
    pub fn side_volume(&self) -> f64 {
        let flat = 0.5 * TIP_FLAT * (self.length - self.y_cap);
        self.depth * (0.5 * self.width * self.length - flat - self.hollow_area())
    }

    pub fn rib_volume(&self) -> f64 {
        self.depth * self.rib_thickness * self.spans.iter().sum::<f64>()
    }

    /// Point on the inner back face at height `y`.
    fn back_inner(&self, y: f64) -> Vec2 {
        Vec2::new(self.width * (self.c - y / self.length), y)
    }
}

/// Tagged outline of a finger plus the rib rectangles that cross its hollow.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerOutline {
    pub outline: Outline,
    pub geometry: FinGeometry,
    /// Rib quadrilaterals, counter-clockwise: lower-front, lower-back, upper-back, upper-front.
    pub ribs: Vec<[Vec2; 4]>,
    /// Start and end of the contact edge.
    pub contact_edge: (Vec2, Vec2),
}

pub fn finger_outline(f: &FingerDesign) -> Result<FingerOutline, GeometryError> {
    let g = FinGeometry::new(f)?;
    let n = g.stations.len();
    let (l, h) = (g.width, g.length);

    let ribs: Vec<[Vec2; 4]> = g
        .stations
        .iter()
        .map(|&y| {
            let (lf, lb) = g.rib_edge(y, -1.0);
            let (uf, ub) = g.rib_edge(y, 1.0);
            [lf, lb, ub, uf]
        })
        .collect();

    let eps = 1e-9;
    for (k, r) in ribs.iter().enumerate() {
        let lowest = r[0].y.min(r[1].y);
        let highest = r[2].y.max(r[3].y);
        if lowest < MIN_POCKET_GAP - eps || highest > g.y_top - MIN_POCKET_GAP + eps {
            return Err(GeometryError::RibDoesNotFit { rib: k + 1 });
        }
    }
    if n > 1 {
        let spacing = g.stations[1] - g.stations[0];
        let gap = spacing * g.angle.cos() - g.rib_thickness;
        if gap < MIN_POCKET_GAP {
            return Err(GeometryError::RibsOverlap { rib: 2 });
        }
    }

    let base_back = Vec2::new(l * g.c, 0.0);
    let tip_back = Vec2::new(l * (1.0 - g.y_tip / h), g.y_tip);
    use BoundaryTag::*;

    // outer loop, including the notch under the first rib
    let first = &ribs[0];
    let outer_pts = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(g.front, 0.0),
        first[0],
        first[1],
        base_back,
        Vec2::new(l, 0.0),
        tip_back,
        Vec2::new(TIP_FLAT, g.y_cap),
        Vec2::new(0.0, g.y_cap),
    ];
    let outer_tags = vec![
        Mount,
        RibInterior,
        RibInterior,
        RibInterior,
        Mount,
        BackSurface,
        Tip,
        Tip,
        ContactSurface,
    ];
    let outer = TaggedLoop::new(outer_pts, outer_tags);

    let mut holes = Vec::with_capacity(n);
    for k in 0..n {
        let r = &ribs[k];
        let pts = if k + 1 < n {
            let s = &ribs[k + 1];
            vec![r[3], s[0], s[1], r[2]]
        } else {
            vec![
                r[3],
                Vec2::new(g.front, g.y_top),
                g.back_inner(g.y_top),
                r[2],
            ]
        };
        holes.push(TaggedLoop::uniform(pts, RibInterior));
    }

    let spacing_gap = if n > 1 {
        (g.stations[1] - g.stations[0]) * g.angle.cos() - g.rib_thickness
    } else {
        f64::INFINITY
    };
    let min_feature = g
        .front
        .min(g.back)
        .min(g.rib_thickness)
        .min(spacing_gap);

    Ok(FingerOutline {
        outline: Outline {
            outer,
            holes,
            min_feature: Some(min_feature),
        },
        ribs,
        contact_edge: (Vec2::new(0.0, 0.0), Vec2::new(0.0, g.y_cap)),
        geometry: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{benchmark_design, DesignBounds};

    fn lower() -> FingerDesign {
        DesignBounds::default().lower_design().fingers[0]
    }

    #[test]
    fn single_rib_pockets() {
        let o = finger_outline(&lower()).unwrap();
        let g = &o.geometry;
        let center = Vec2::new(g.front, g.stations[0]);
        let side = |p: &Vec2| (p - center).dot(&g.rib_normal());
        // the notch below the rib is part of the outer loop, the pocket above is a hole
        assert_eq!(o.outline.holes.len(), 1);
        assert!(o.outline.holes[0].points.iter().all(|p| side(p) > 0.0));
        let notch: Vec<_> = o.outline.outer.points[1..5].to_vec();
        assert!(notch.iter().all(|p| side(p) < 0.0));
        assert!(shoelace(&notch).abs() > 1.0);
    }

    #[test]
    fn orientation() {
        let o = finger_outline(&benchmark_design().fingers[0]).unwrap();
        assert!(o.outline.outer.signed_area() > 0.0);
        for hole in &o.outline.holes {
            assert!(hole.signed_area() < 0.0);
        }
    }

    #[test]
    fn flat_ribs_perpendicular() {
        let mut f = lower();
        f.rib_angle = 0.0;
        f.rib_count = 4;
        let o = finger_outline(&f).unwrap();
        for r in &o.ribs {
            for (a, b) in [(r[0], r[1]), (r[3], r[2])] {
                let d = b - a;
                // contact edge is vertical, so a perpendicular rib is horizontal
                assert!(d.y.atan2(d.x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn positive_angle_tilts_toward_tip() {
        let mut f = lower();
        f.rib_angle = 20.0;
        let o = finger_outline(&f).unwrap();
        let r = o.ribs[0];
        assert!(r[1].y > r[0].y);
    }

    #[test]
    fn zero_flex_uses_min_wall() {
        let o = finger_outline(&benchmark_design().fingers[0]).unwrap();
        assert_eq!(o.geometry.front, MIN_WALL);
        assert_eq!(o.outline.outer.points[1].x, MIN_WALL);
    }

    #[test]
    fn closed_form_matches_polygon() {
        for f in [lower(), benchmark_design().fingers[0], DesignBounds::default().upper_design().fingers[0]] {
            let o = finger_outline(&f).unwrap();
            let g = &o.geometry;
            let closed = g.side_volume() + g.rib_volume();
            let poly = o.outline.area() * f.depth;
            assert!((closed - poly).abs() < 1e-9 * poly, "{closed} vs {poly}");
        }
    }

    #[test]
    fn overlapping_walls_rejected() {
        let mut f = lower();
        f.back_thickness = 27.0;
        assert!(matches!(FinGeometry::new(&f), Err(GeometryError::WallsOverlap)));
    }

    #[test]
    fn crowded_ribs_report_index() {
        let mut f = DesignBounds::default().upper_design().fingers[0];
        f.rib_thickness = 8.0;
        let err = finger_outline(&f).unwrap_err();
        assert!(matches!(err, GeometryError::RibsOverlap { .. } | GeometryError::RibDoesNotFit { .. }));
    }

    #[test]
    fn contains_and_distance() {
        let o = Outline::rectangle(2.0, 1.0);
        assert!(o.contains(Vec2::new(1.0, 0.5)));
        assert!(!o.contains(Vec2::new(3.0, 0.5)));
        assert!((o.boundary_distance(Vec2::new(1.0, 0.25)) - 0.25).abs() < 1e-15);
    }
}
