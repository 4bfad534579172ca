//! CMA-ME over a MAP-Elites grid.

pub mod archive;
pub mod cmaes;
pub mod synthetic;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{read_archive_csv, AddStatus, ArchiveGrid, ArchiveMetrics, ArchiveRow, Elite};
pub use cmaes::{improvement_rank, restart_point, EmitterState};
pub use synthetic::SphereBenchmark;

use crate::design::{decode, DesignBounds, FeatureDescriptor, GripperDesign};
use crate::grasp::{evaluate_design, EvalConfig, EvaluationResult, ObjectSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QdError {
    #[error("emitter degenerate: {0}")]
    EmitterDegenerate(String),
}

/// Score and archive coordinates of one genotype.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    /// `None` when the genotype has no valid geometry; such samples are not archived.
    pub features: Option<FeatureDescriptor>,
    pub detail: Option<Box<EvaluationResult>>,
}

pub trait Evaluator: Sync {
    fn evaluate(&self, genotype: &[f64]) -> Result<Evaluation, String>;

    /// Geometry-only features, used when `evaluate` fails or panics.
    fn features(&self, genotype: &[f64]) -> Option<FeatureDescriptor>;
}

/// Decodes a genotype and scores the design against an object set.
#[derive(Debug, Clone)]
pub struct GripperEvaluator {
    pub bounds: DesignBounds,
    pub objects: ObjectSet,
    pub config: EvalConfig,
}

impl GripperEvaluator {
    pub fn design(&self, genotype: &[f64]) -> Result<GripperDesign, String> {
        decode(genotype, &self.bounds).map_err(|e| e.to_string())
    }
}

impl Evaluator for GripperEvaluator {
    fn evaluate(&self, genotype: &[f64]) -> Result<Evaluation, String> {
        let d = self.design(genotype)?;
        let r = evaluate_design(&d, &self.objects, &self.config).map_err(|e| e.to_string())?;
        Ok(Evaluation {
            objective: r.success_rate,
            features: r.features,
            detail: Some(Box::new(r)),
        })
    }

    fn features(&self, genotype: &[f64]) -> Option<FeatureDescriptor> {
        self.design(genotype).ok()?.features().ok()
    }
}

/// Archive with the default workspace range and a volume range spanning the
/// all-low and all-high designs.
pub fn default_archive(rows: usize, cols: usize, bounds: &DesignBounds) -> Result<ArchiveGrid, String> {
    let lo = bounds.lower_design().features().map_err(|e| format!("lower-bound design: {e}"))?;
    let hi = bounds.upper_design().features().map_err(|e| format!("upper-bound design: {e}"))?;
    Ok(ArchiveGrid::new(rows, cols, (lo.volume, hi.volume), (lo.workspace, hi.workspace)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdConfig {
    pub archive_rows: usize,
    pub archive_cols: usize,
    /// Samples per emitter per generation.
    pub batch: usize,
    pub emitters: usize,
    pub sigma0: f64,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            archive_rows: 20,
            archive_cols: 20,
            batch: 15,
            emitters: 1,
            sigma0: 0.2,
        }
    }
}

impl QdConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.archive_rows == 0 || self.archive_cols == 0 {
            return Err("archive dimensions must be positive".into());
        }
        if self.batch < 2 {
            return Err("batch must be at least 2".into());
        }
        if self.emitters == 0 {
            return Err("need at least one emitter".into());
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err("sigma0 must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdMetrics {
    pub generation: usize,
    pub evaluations: usize,
    pub coverage: f64,
    pub qd_score: f64,
    pub best: f64,
}

pub fn write_metrics_header<W: Write>(mut w: W) -> std::io::Result<()> {
    writeln!(w, "generation,evaluations,coverage,qd_score,best")
}

pub fn write_metrics_row<W: Write>(m: &QdMetrics, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{},{},{},{},{}", m.generation, m.evaluations, m.coverage, m.qd_score, m.best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub id: usize,
    pub generation: usize,
    pub genotype: Vec<f64>,
    pub objective: f64,
    pub features: Option<FeatureDescriptor>,
    pub status: AddStatus,
    pub wall_time: f64,
    /// Set when evaluation failed or panicked.
    pub error: Option<String>,
    pub detail: Option<Box<EvaluationResult>>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

struct Scored {
    objective: f64,
    features: Option<FeatureDescriptor>,
    wall_time: f64,
    error: Option<String>,
    detail: Option<Box<EvaluationResult>>,
}

/// Evaluates a batch in parallel. Failures and panics score 0.
fn evaluate_batch<E: Evaluator>(evaluator: &E, batch: &[Vec<f64>]) -> Vec<Scored> {
    batch
        .par_iter()
        .map(|g| {
            let start = Instant::now();
            let r = catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(g)))
                .unwrap_or_else(|p| Err(format!("evaluation panicked: {}", panic_message(p))));
            let mut s = match r {
                Ok(e) if e.objective.is_finite() => Scored {
                    objective: e.objective.clamp(0.0, 1.0),
                    features: e.features,
                    wall_time: 0.0,
                    error: None,
                    detail: e.detail,
                },
                Ok(e) => Scored {
                    objective: 0.0,
                    features: e.features,
                    wall_time: 0.0,
                    error: Some("non-finite objective".into()),
                    detail: None,
                },
                Err(msg) => Scored {
                    objective: 0.0,
                    features: catch_unwind(AssertUnwindSafe(|| evaluator.features(g))).ok().flatten(),
                    wall_time: 0.0,
                    error: Some(msg),
                    detail: None,
                },
            };
            s.wall_time = start.elapsed().as_secs_f64();
            s
        })
        .collect()
}

/// Emitters, archive and RNG of one run.
#[derive(Debug, Clone)]
pub struct QdRunner {
    pub archive: ArchiveGrid,
    pub emitters: Vec<EmitterState>,
    pub generation: usize,
    pub evaluations: usize,
    rng: ChaCha8Rng,
}

impl QdRunner {
    /// Emitters start at uniform random points of the unit box.
    pub fn new(cfg: &QdConfig, archive: ArchiveGrid, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emitters = (0..cfg.emitters)
            .map(|_| {
                let mean = (0..dim).map(|_| rng.random::<f64>()).collect();
                EmitterState::new(mean, cfg.sigma0, cfg.batch)
            })
            .collect();
        QdRunner {
            archive,
            emitters,
            generation: 0,
            evaluations: 0,
            rng,
        }
    }

    pub fn metrics(&self) -> QdMetrics {
        let m = self.archive.metrics();
        QdMetrics {
            generation: self.generation,
            evaluations: self.evaluations,
            coverage: m.coverage,
            qd_score: m.qd_score,
            best: m.best,
        }
    }

    /// One ask, evaluate, add, rank, tell and restart cycle per emitter.
    pub fn run_generation<E: Evaluator>(&mut self, evaluator: &E) -> (QdMetrics, Vec<EvalRecord>) {
        self.generation += 1;
        let mut records = Vec::new();
        for k in 0..self.emitters.len() {
            let samples = match self.emitters[k].ask(&mut self.rng) {
                Ok(s) => s,
                Err(_) => {
                    let mean = restart_point(&self.archive, self.emitters[k].dim(), &mut self.rng);
                    self.emitters[k].restart(mean);
                    self.emitters[k].ask(&mut self.rng).expect("fresh emitter samples")
                }
            };
            let scored = evaluate_batch(evaluator, &samples);
            let mut batch = Vec::with_capacity(samples.len());
            for (g, s) in samples.iter().zip(scored) {
                let status = match s.features {
                    Some(features) => self.archive.add(Elite {
                        genotype: g.clone(),
                        objective: s.objective,
                        features,
                        evaluation_id: self.evaluations,
                    }),
                    None => AddStatus::Rejected,
                };
                batch.push((s.objective, status));
                records.push(EvalRecord {
                    id: self.evaluations,
                    generation: self.generation,
                    genotype: g.clone(),
                    objective: s.objective,
                    features: s.features,
                    status,
                    wall_time: s.wall_time,
                    error: s.error,
                    detail: s.detail,
                });
                self.evaluations += 1;
            }
            let ranked: Vec<Vec<f64>> = improvement_rank(&batch).into_iter().map(|i| samples[i].clone()).collect();
            let em = &mut self.emitters[k];
            let told = em.tell(&ranked);
            let statuses: Vec<AddStatus> = batch.iter().map(|b| b.1).collect();
            if told.is_err() {
                let mean = restart_point(&self.archive, em.dim(), &mut self.rng);
                em.restart(mean);
            } else {
                em.restart_if_needed(&self.archive, &statuses, &mut self.rng);
            }
        }
        (self.metrics(), records)
    }
}

/// Uniform sampling of the unit box into `archive`, batched like the emitter.
pub fn random_search<E: Evaluator>(
    evaluator: &E,
    archive: &mut ArchiveGrid,
    dim: usize,
    budget: usize,
    batch: usize,
    seed: u64,
) -> QdMetrics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut generation = 0;
    while done < budget {
        let n = batch.min(budget - done);
        let samples: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        for (g, s) in samples.iter().zip(evaluate_batch(evaluator, &samples)) {
            if let Some(features) = s.features {
                archive.add(Elite {
                    genotype: g.clone(),
                    objective: s.objective,
                    features,
                    evaluation_id: done,
                });
            }
            done += 1;
        }
        generation += 1;
    }
    let m = archive.metrics();
    QdMetrics {
        generation,
        evaluations: done,
        coverage: m.coverage,
        qd_score: m.qd_score,
        best: m.best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky;

    impl Evaluator for Flaky {
        fn evaluate(&self, g: &[f64]) -> Result<Evaluation, String> {
            if g[0] < 0.3 {
                panic!("boom");
            }
            if g[0] < 0.5 {
                return Err("bad".into());
            }
            Ok(Evaluation {
                objective: g[1],
                features: self.features(g),
                detail: None,
            })
        }

        fn features(&self, g: &[f64]) -> Option<FeatureDescriptor> {
            Some(FeatureDescriptor {
                workspace: g[0],
                volume: g[2],
            })
        }
    }

    fn grid() -> ArchiveGrid {
        ArchiveGrid::new(20, 20, (0.0, 1.0), (0.0, 1.0))
    }

    #[test]
    fn generation_bookkeeping_and_failures() {
        let cfg = QdConfig::default();
        let mut r = QdRunner::new(&cfg, grid(), 28, 11);
        let mut last = r.metrics();
        let hook = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let mut errors = 0;
        for g in 1..=5 {
            let (m, recs) = r.run_generation(&Flaky);
            assert_eq!(recs.len(), 15);
            assert_eq!(m.evaluations, 15 * g);
            assert_eq!(m.generation, g);
            assert!(m.coverage >= last.coverage && m.qd_score >= last.qd_score);
            for rec in &recs {
                if rec.error.is_some() {
                    errors += 1;
                    assert_eq!(rec.objective, 0.0);
                    assert!(rec.features.is_some());
                }
            }
            last = m;
        }
        std::panic::set_hook(hook);
        assert!(errors > 0);
        for (key, e) in r.archive.iter() {
            assert_eq!(r.archive.cell_index(&e.features), *key);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let bench = SphereBenchmark::new(28);
        let run = |seed| {
            let mut r = QdRunner::new(&QdConfig::default(), bench.archive(20, 20), 28, seed);
            let ms: Vec<QdMetrics> = (0..10).map(|_| r.run_generation(&bench).0).collect();
            (r.archive, ms)
        };
        let (a1, m1) = run(3);
        let (a2, m2) = run(3);
        assert_eq!(a1, a2);
        assert_eq!(m1, m2);
        let (a3, _) = run(4);
        assert_ne!(a1, a3);
    }

    #[test]
    fn random_search_spends_budget() {
        let bench = SphereBenchmark::new(28);
        let mut a = bench.archive(20, 20);
        let m = random_search(&bench, &mut a, 28, 100, 15, 1);
        assert_eq!(m.evaluations, 100);
        assert_eq!(m.generation, 7);
        assert!(m.coverage > 0.0);
    }

    #[test]
    fn default_archive_spans_bounds() {
        let b = DesignBounds::default();
        let a = default_archive(20, 20, &b).unwrap();
        let s3 = 3f64.sqrt();
        assert!((a.workspace_range.0 - 675.0 * s3).abs() < 1e-9);
        assert!((a.workspace_range.1 - 1200.0 * s3).abs() < 1e-9);
        assert!(a.volume_range.0 < a.volume_range.1);
    }

    #[test]
    fn metrics_csv_rows() {
        let mut buf = Vec::new();
        write_metrics_header(&mut buf).unwrap();
        let m = QdMetrics {
            generation: 1,
            evaluations: 15,
            coverage: 0.0075,
            qd_score: 2.2,
            best: 1.0,
        };
        write_metrics_row(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "generation,evaluations,coverage,qd_score,best\n1,15,0.0075,2.2,1\n");
    }
}
