use serde::{Deserialize, Serialize};

use super::GripperDesign;
use crate::fem2d::{FinGeometry, GeometryError};

/// Thickness of the triangular mount plate, mm.
pub const MOUNT_PLATE_THICKNESS: f64 = 10.0;

/// Archive coordinates of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    /// mm^2
    pub workspace: f64,
    /// mm^3
    pub volume: f64,
}

/// Area of the equilateral triangle with circumradius `d_mount`.
pub fn workspace_feature(d: &GripperDesign) -> f64 {
    0.75 * 3f64.sqrt() * d.d_mount * d.d_mount
}

pub fn mount_volume(d_mount: f64) -> f64 {
    0.25 * 3f64.sqrt() * d_mount * d_mount * MOUNT_PLATE_THICKNESS
}

/// Material volume of the three fingers plus the mount plate.
pub fn volume_feature(d: &GripperDesign) -> Result<f64, GeometryError> {
    let mut v = mount_volume(d.d_mount);
    for f in &d.fingers {
        let g = FinGeometry::new(f)?;
        v += g.side_volume() + g.rib_volume();
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{decode, DesignBounds};
    use proptest::prelude::*;

    #[test]
    fn workspace_homogeneous() {
        let b = DesignBounds::default();
        let mut d = b.lower_design();
        d.d_mount = 15.0;
        let a = workspace_feature(&d);
        d.d_mount = 30.0;
        assert!((workspace_feature(&d) - 4.0 * a).abs() < 1e-9 * a);
    }

    #[test]
    fn volume_linear_in_depth() {
        let b = DesignBounds::default();
        let d = b.lower_design();
        let mut d2 = d.clone();
        for f in &mut d2.fingers {
            f.depth *= 2.0;
        }
        let vm = mount_volume(d.d_mount);
        let v1 = volume_feature(&d).unwrap() - vm;
        let v2 = volume_feature(&d2).unwrap() - vm;
        assert!((v2 - 2.0 * v1).abs() < 1e-9 * v2);
    }

    #[test]
    fn extra_rib_adds_volume() {
        let b = DesignBounds::default();
        let mut d = b.lower_design();
        let v1 = volume_feature(&d).unwrap();
        d.fingers[0].rib_count = 2;
        assert!(volume_feature(&d).unwrap() > v1);
    }

    fn bump(g: &mut [f64], i: usize, delta: f64) -> bool {
        let v = g[i] + delta;
        if v > 1.0 {
            return false;
        }
        g[i] = v;
        true
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn workspace_in_range(g in proptest::collection::vec(0.0f64..=1.0, 28)) {
            let d = decode(&g, &DesignBounds::default()).unwrap();
            let w = workspace_feature(&d);
            let s3 = 3f64.sqrt();
            prop_assert!(w >= 675.0 * s3 * (1.0 - 1e-12) && w <= 1200.0 * s3 * (1.0 + 1e-12));
        }

        #[test]
        fn volume_monotone(
            g in proptest::collection::vec(0.0f64..=1.0, 28),
            finger in 0usize..3,
            which in 0usize..5,
            step in 0.01f64..0.5,
        ) {
            let b = DesignBounds::default();
            // W, t_flex, t_back, N, t_rib
            let offset = [2usize, 4, 5, 6, 7][which];
            let i = finger * 9 + offset;
            let mut g2 = g.clone();
            let step = if offset == 6 { 0.1 } else { step };
            prop_assume!(bump(&mut g2, i, step));
            let d1 = decode(&g, &b).unwrap();
            let d2 = decode(&g2, &b).unwrap();
            prop_assume!(d1 != d2);
            let v1 = volume_feature(&d1).unwrap();
            let v2 = volume_feature(&d2).unwrap();
            prop_assert!(v2 > v1, "dim {} : {} -> {}", i, v1, v2);
        }

        #[test]
        fn features_pure(g in proptest::collection::vec(0.0f64..=1.0, 28)) {
            let d = decode(&g, &DesignBounds::default()).unwrap();
            let a = d.features().unwrap();
            let b = d.features().unwrap();
            prop_assert_eq!(a.workspace.to_bits(), b.workspace.to_bits());
            prop_assert_eq!(a.volume.to_bits(), b.volume.to_bits());
            prop_assert!(a.workspace > 0.0 && a.volume > 0.0);
        }
    }
}
