use super::{DesignBounds, DesignError, GripperDesign, Severity};

pub const GENOTYPE_LEN: usize = 28;

const RIB_BINS: f64 = 10.0;

/// Maps a unit-box genotype to physical parameters.
pub fn decode(g: &[f64], b: &DesignBounds) -> Result<GripperDesign, DesignError> {
    if g.len() != GENOTYPE_LEN {
        return Err(DesignError::InvalidGenotype {
            expected: GENOTYPE_LEN,
            got: g.len(),
        });
    }
    if let Some((index, &value)) = g
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && **v <= 1.0))
    {
        return Err(DesignError::OutOfUnitBox { index, value });
    }
    let p: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if DesignBounds::is_integer(i) {
                ((x * RIB_BINS).floor() + 1.0).clamp(1.0, RIB_BINS)
            } else {
                b.low(i) + x * (b.high(i) - b.low(i))
            }
        })
        .collect();
    GripperDesign::from_params(&p)
}

/// Maps a design back to the unit box; rib counts land on bin centers.
/// In strict mode any out-of-bounds field is an error; otherwise entries are
/// computed as-is and may fall outside [0, 1].
pub fn encode(d: &GripperDesign, b: &DesignBounds, strict: bool) -> Result<Vec<f64>, DesignError> {
    if strict {
        let dims: Vec<usize> = super::validate(d, b, true)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .filter_map(|v| v.dim)
            .collect();
        if !dims.is_empty() {
            return Err(DesignError::BoundsViolation { dims });
        }
    }
    Ok(d.params()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if DesignBounds::is_integer(i) {
                (v - 0.5) / RIB_BINS
            } else {
                (v - b.low(i)) / (b.high(i) - b.low(i))
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::benchmark_design;
    use proptest::prelude::*;

    #[test]
    fn corners() {
        let b = DesignBounds::default();
        let lo = decode(&[0.0; 28], &b).unwrap();
        assert_eq!(lo, b.lower_design());
        assert_eq!(lo.fingers[0].rib_count, 1);
        assert_eq!(lo.d_mount, 30.0);
        let hi = decode(&[1.0; 28], &b).unwrap();
        assert_eq!(hi, b.upper_design());
        assert_eq!(hi.fingers[2].rib_count, 10);
        assert_eq!(hi.fingers[0].length, 120.0);
    }

    #[test]
    fn shape_errors() {
        let b = DesignBounds::default();
        assert!(matches!(
            decode(&[0.5; 27], &b),
            Err(DesignError::InvalidGenotype { got: 27, .. })
        ));
        let mut g = [0.5; 28];
        g[4] = 1.5;
        assert!(matches!(
            decode(&g, &b),
            Err(DesignError::OutOfUnitBox { index: 4, .. })
        ));
    }

    #[test]
    fn length_entries() {
        let b = DesignBounds::default();
        let mut d = b.lower_design();
        assert_eq!(encode(&d, &b, true).unwrap()[0], 0.0);
        d.fingers[0].length = 105.0;
        assert_eq!(encode(&d, &b, true).unwrap()[0], 0.5);
    }

    #[test]
    fn benchmark_round_trip_loose() {
        let b = DesignBounds::default();
        let d = benchmark_design();
        assert!(matches!(
            encode(&d, &b, true),
            Err(DesignError::BoundsViolation { .. })
        ));
        let g = encode(&d, &b, false).unwrap();
        let back = GripperDesign::from_params(
            &g.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if DesignBounds::is_integer(i) {
                        (x * 10.0).floor() + 1.0
                    } else {
                        b.low(i) + x * (b.high(i) - b.low(i))
                    }
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for (x, y) in back.params().iter().zip(d.params()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn every_rib_count_survives() {
        let b = DesignBounds::default();
        for n in 1..=10 {
            let mut d = b.lower_design();
            d.fingers[1].rib_count = n;
            let g = encode(&d, &b, true).unwrap();
            assert_eq!(decode(&g, &b).unwrap().fingers[1].rib_count, n);
        }
    }

    proptest! {
        #[test]
        fn decode_encode_identity(g in proptest::collection::vec(0.0f64..=1.0, 28)) {
            let b = DesignBounds::default();
            let d = decode(&g, &b).unwrap();
            let e = encode(&d, &b, true).unwrap();
            for i in 0..28 {
                if DesignBounds::is_integer(i) {
                    // bin center of the same bin
                    let bin = ((g[i] * 10.0).floor()).min(9.0);
                    prop_assert!((e[i] - (bin + 0.5) / 10.0).abs() < 1e-12);
                } else {
                    prop_assert!((e[i] - g[i]).abs() <= 1e-12 * g[i].abs().max(1.0));
                }
            }
        }

        #[test]
        fn decoded_design_in_bounds(g in proptest::collection::vec(0.0f64..=1.0, 28)) {
            let b = DesignBounds::default();
            let d = decode(&g, &b).unwrap();
            prop_assert!(crate::design::validate(&d, &b, true).is_empty());
        }
    }
}
