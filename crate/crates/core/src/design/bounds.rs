use serde::{Deserialize, Serialize};

use super::{GripperDesign, FINGER_PARAMS, GENOTYPE_LEN, PARAM_NAMES, RIB_COUNT_INDEX};

/// Per-dimension box for the 28 genotype entries, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

const FINGER_LOW: [f64; FINGER_PARAMS] = [90.0, 28.0, 20.0, 20.0, 1.0, 1.0, 1.0, 1.0, -40.0];
const FINGER_HIGH: [f64; FINGER_PARAMS] = [120.0, 40.0, 35.0, 30.0, 3.0, 3.0, 10.0, 3.0, 40.0];
const MOUNT_RANGE: (f64, f64) = (30.0, 40.0);

impl Default for DesignBounds {
    fn default() -> Self {
        let mut low = Vec::with_capacity(GENOTYPE_LEN);
        let mut high = Vec::with_capacity(GENOTYPE_LEN);
        for _ in 0..3 {
            low.extend_from_slice(&FINGER_LOW);
            high.extend_from_slice(&FINGER_HIGH);
        }
        low.push(MOUNT_RANGE.0);
        high.push(MOUNT_RANGE.1);
        DesignBounds { low, high }
    }
}

impl DesignBounds {
    /// Custom bounds. Panics unless there are 28 pairs with `low < high`.
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), GENOTYPE_LEN);
        assert_eq!(high.len(), GENOTYPE_LEN);
        assert!(low.iter().zip(&high).all(|(l, h)| l < h));
        DesignBounds { low, high }
    }

    pub fn low(&self, i: usize) -> f64 {
        self.low[i]
    }

    pub fn high(&self, i: usize) -> f64 {
        self.high[i]
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    /// True for the three rib-count dimensions.
    pub fn is_integer(i: usize) -> bool {
        i < 3 * FINGER_PARAMS && i % FINGER_PARAMS == RIB_COUNT_INDEX
    }

    pub fn lower_design(&self) -> GripperDesign {
        GripperDesign::from_params(&self.low).expect("28 dims")
    }

    pub fn upper_design(&self) -> GripperDesign {
        GripperDesign::from_params(&self.high).expect("28 dims")
    }
}

/// Human name of a genotype dimension, e.g. `finger2.t_rib`.
pub fn dim_name(i: usize) -> String {
    if i == GENOTYPE_LEN - 1 {
        "d_mount".to_string()
    } else {
        format!("finger{}.{}", i / FINGER_PARAMS + 1, PARAM_NAMES[i % FINGER_PARAMS])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Genotype dimension, when the violation concerns a single one.
    pub dim: Option<usize>,
    pub severity: Severity,
    pub message: String,
}

/// Lists bound and feasibility violations. Without `strict`, bound
/// violations are reported as warnings; feasibility failures are always errors.
pub fn validate(d: &GripperDesign, b: &DesignBounds, strict: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let bound_severity = if strict { Severity::Error } else { Severity::Warning };
    for (i, v) in d.params().into_iter().enumerate() {
        let (lo, hi) = (b.low(i), b.high(i));
        if !(v >= lo && v <= hi) {
            out.push(Violation {
                dim: Some(i),
                severity: bound_severity,
                message: format!("{} = {v} outside [{lo}, {hi}]", dim_name(i)),
            });
        }
    }
    for (k, f) in d.fingers.iter().enumerate() {
        let base = k * FINGER_PARAMS;
        let finite = f.params().iter().all(|v| v.is_finite());
        let positive = f.length > 0.0
            && f.width > 0.0
            && f.depth > 0.0
            && f.tip_length >= 0.0
            && f.flex_thickness >= 0.0
            && f.back_thickness > 0.0
            && f.rib_thickness > 0.0
            && f.rib_count >= 1
            && f.rib_angle.abs() < 90.0;
        if !finite || !positive {
            out.push(Violation {
                dim: None,
                severity: Severity::Error,
                message: format!("finger{}: non-physical parameter values", k + 1),
            });
        }
        if f.flex_thickness + f.back_thickness >= f.width {
            out.push(Violation {
                dim: Some(base + 4),
                severity: Severity::Error,
                message: format!("finger{}: t_flex + t_back must be below L", k + 1),
            });
        }
        if f.tip_length >= f.length {
            out.push(Violation {
                dim: Some(base + 3),
                severity: Severity::Error,
                message: format!("finger{}: L_tip must be below H", k + 1),
            });
        }
    }
    if !(d.d_mount > 0.0) {
        out.push(Violation {
            dim: Some(GENOTYPE_LEN - 1),
            severity: Severity::Error,
            message: "d_mount must be positive".to_string(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::benchmark_design;

    #[test]
    fn in_bounds_design_is_clean() {
        let b = DesignBounds::default();
        assert!(validate(&b.lower_design(), &b, true).is_empty());
        assert!(validate(&b.upper_design(), &b, true).is_empty());
    }

    #[test]
    fn short_finger_names_dimension_zero() {
        let b = DesignBounds::default();
        let mut d = b.lower_design();
        d.fingers[0].length = 89.0;
        let v = validate(&d, &b, true);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].dim, Some(0));
        assert_eq!(v[0].severity, Severity::Error);
    }

    #[test]
    fn benchmark_violations() {
        let b = DesignBounds::default();
        let d = benchmark_design();
        let strict = validate(&d, &b, true);
        let mut dims: Vec<usize> = strict.iter().filter_map(|v| v.dim).map(|i| i % 9).collect();
        dims.sort();
        dims.dedup();
        assert_eq!(dims, vec![3, 4, 5]);
        assert!(strict.iter().all(|v| v.severity == Severity::Error));
        let loose = validate(&d, &b, false);
        assert_eq!(loose.len(), strict.len());
        assert!(loose.iter().all(|v| v.severity == Severity::Warning));
    }

    #[test]
    fn integer_dims() {
        let ints: Vec<usize> = (0..GENOTYPE_LEN).filter(|&i| DesignBounds::is_integer(i)).collect();
        assert_eq!(ints, vec![6, 15, 24]);
    }
}
