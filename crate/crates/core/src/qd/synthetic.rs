//! Cheap stand-in objective for exercising the QD loop.

use super::{ArchiveGrid, Evaluation, Evaluator};
use crate::design::FeatureDescriptor;

/// Sphere objective around `center`, scaled to [0, 1]. Features are the means
/// of the first and second halves of the genotype, stored in the workspace
/// and volume slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereBenchmark {
    pub center: Vec<f64>,
}

impl SphereBenchmark {
    pub fn new(dim: usize) -> Self {
        SphereBenchmark {
            center: vec![0.4; dim],
        }
    }

    pub fn objective(&self, g: &[f64]) -> f64 {
        let worst: f64 = self.center.iter().map(|c| c.max(1.0 - c).powi(2)).sum();
        let d: f64 = g.iter().zip(&self.center).map(|(x, c)| (x - c).powi(2)).sum();
        (1.0 - d / worst).clamp(0.0, 1.0)
    }

    pub fn projection(&self, g: &[f64]) -> FeatureDescriptor {
        let h = g.len() / 2;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        FeatureDescriptor {
            workspace: mean(&g[..h]),
            volume: mean(&g[h..]),
        }
    }

    pub fn archive(&self, rows: usize, cols: usize) -> ArchiveGrid {
        ArchiveGrid::new(rows, cols, (0.0, 1.0), (0.0, 1.0))
    }
}

impl Evaluator for SphereBenchmark {
    fn evaluate(&self, g: &[f64]) -> Result<Evaluation, String> {
        Ok(Evaluation {
            objective: self.objective(g),
            features: Some(self.projection(g)),
            detail: None,
        })
    }

    fn features(&self, g: &[f64]) -> Option<FeatureDescriptor> {
        Some(self.projection(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_range() {
        let b = SphereBenchmark::new(28);
        assert_eq!(b.objective(&[0.4; 28]), 1.0);
        assert!(b.objective(&[1.0; 28]).abs() < 1e-12);
        let f = b.projection(&[[0.0; 14], [1.0; 14]].concat());
        assert_eq!((f.workspace, f.volume), (0.0, 1.0));
    }
}
