//! Gripper parameterization: finger records, bounds, genotype codec and
//! the two closed-form archive features.

mod bounds;
mod codec;
mod features;

pub use bounds::{validate, DesignBounds, Severity, Violation};
pub use codec::{decode, encode, GENOTYPE_LEN};
pub use features::{
    mount_volume, volume_feature, workspace_feature, FeatureDescriptor, MOUNT_PLATE_THICKNESS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem2d::GeometryError;

/// Number of parameters describing one finger.
pub const FINGER_PARAMS: usize = 9;

/// Parameter names in genotype order, as used in design files.
pub const PARAM_NAMES: [&str; FINGER_PARAMS] =
    ["H", "L", "W", "L_tip", "t_flex", "t_back", "N", "t_rib", "D_angle"];

/// Index of the rib count inside a finger block.
pub const RIB_COUNT_INDEX: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("genotype has {got} entries, expected {expected}")]
    InvalidGenotype { expected: usize, got: usize },
    #[error("genotype entry {index} = {value} lies outside [0, 1]")]
    OutOfUnitBox { index: usize, value: f64 },
    #[error("design violates bounds on dimensions {dims:?}")]
    BoundsViolation { dims: Vec<usize> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One fin-ray finger. Lengths in mm, angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerDesign {
    /// Length along the contact edge.
    #[serde(rename = "H")]
    pub length: f64,
    /// Base width.
    #[serde(rename = "L")]
    pub width: f64,
    /// Out-of-plane thickness.
    #[serde(rename = "W")]
    pub depth: f64,
    /// Length of the solid tip region.
    #[serde(rename = "L_tip")]
    pub tip_length: f64,
    /// Contact-side wall thickness.
    #[serde(rename = "t_flex")]
    pub flex_thickness: f64,
    /// Back wall thickness.
    #[serde(rename = "t_back")]
    pub back_thickness: f64,
    #[serde(rename = "N")]
    pub rib_count: u32,
    #[serde(rename = "t_rib")]
    pub rib_thickness: f64,
    /// Rib tilt; positive tilts rib ends toward the tip.
    #[serde(rename = "D_angle")]
    pub rib_angle: f64,
}

impl FingerDesign {
    /// Builds a finger from values in genotype order. The rib count is rounded.
    pub fn from_params(p: [f64; FINGER_PARAMS]) -> Self {
        FingerDesign {
            length: p[0],
            width: p[1],
            depth: p[2],
            tip_length: p[3],
            flex_thickness: p[4],
            back_thickness: p[5],
            rib_count: p[6].round().max(0.0) as u32,
            rib_thickness: p[7],
            rib_angle: p[8],
        }
    }

    pub fn params(&self) -> [f64; FINGER_PARAMS] {
        [
            self.length,
            self.width,
            self.depth,
            self.tip_length,
            self.flex_thickness,
            self.back_thickness,
            self.rib_count as f64,
            self.rib_thickness,
            self.rib_angle,
        ]
    }

    /// Bit pattern of all fields, used to deduplicate identical fingers.
    pub fn key(&self) -> [u64; FINGER_PARAMS] {
        self.params().map(f64::to_bits)
    }
}

/// Three fingers on an equilateral mount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperDesign {
    pub fingers: [FingerDesign; 3],
    /// Distance from the gripper axis to each finger, mm.
    pub d_mount: f64,
}

/// Default mount distance for the benchmark gripper, mm.
pub const BENCHMARK_D_MOUNT: f64 = 35.0;

/// Benchmark finger values in genotype order.
pub const BENCHMARK_FINGER: [f64; FINGER_PARAMS] = [94.5, 37.5, 21.3, 15.0, 0.0, 8.0, 2.0, 2.0, 2.0];

/// The reference gripper: three identical fingers.
pub fn benchmark_design() -> GripperDesign {
    benchmark_design_with(BENCHMARK_D_MOUNT)
}

pub fn benchmark_design_with(d_mount: f64) -> GripperDesign {
    let f = FingerDesign::from_params(BENCHMARK_FINGER);
    GripperDesign {
        fingers: [f; 3],
        d_mount,
    }
}

impl GripperDesign {
    /// Flat physical parameter vector in genotype order.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(GENOTYPE_LEN);
        for f in &self.fingers {
            v.extend_from_slice(&f.params());
        }
        v.push(self.d_mount);
        v
    }

    /// Inverse of [`GripperDesign::params`].
    pub fn from_params(p: &[f64]) -> Result<Self, DesignError> {
        if p.len() != GENOTYPE_LEN {
            return Err(DesignError::InvalidGenotype {
                expected: GENOTYPE_LEN,
                got: p.len(),
            });
        }
        let finger = |k: usize| {
            let mut a = [0.0; FINGER_PARAMS];
            a.copy_from_slice(&p[k * FINGER_PARAMS..(k + 1) * FINGER_PARAMS]);
            FingerDesign::from_params(a)
        };
        Ok(GripperDesign {
            fingers: [finger(0), finger(1), finger(2)],
            d_mount: p[GENOTYPE_LEN - 1],
        })
    }

    pub fn features(&self) -> Result<FeatureDescriptor, GeometryError> {
        Ok(FeatureDescriptor {
            workspace: workspace_feature(self),
            volume: volume_feature(self)?,
        })
    }
}
