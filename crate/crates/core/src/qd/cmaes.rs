//! CMA-ES distribution state with the improvement-ranking emitter rules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::archive::{AddStatus, ArchiveGrid};
use super::QdError;

const SIGMA_FLOOR: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct EmitterState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    /// Recombination weights of the `mu` parents, summing to 1.
    pub weights: Vec<f64>,
    pub generation: usize,
    pub restarts: usize,
    pub lambda: usize,
    pub sigma0: f64,
    mu_eff: f64,
    cs: f64,
    ds: f64,
    cc: f64,
    c1: f64,
    cmu: f64,
    chi_n: f64,
}

impl EmitterState {
    pub fn new(mean: Vec<f64>, sigma0: f64, lambda: usize) -> Self {
        assert!(lambda >= 2, "need at least two samples per generation");
        assert!(sigma0 > 0.0);
        let n = mean.len() as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let ds = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let dim = mean.len();
        EmitterState {
            mean: DVector::from_vec(mean),
            sigma: sigma0,
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            weights,
            generation: 0,
            restarts: 0,
            lambda,
            sigma0,
            mu_eff,
            cs,
            ds,
            cc,
            c1,
            cmu,
            chi_n,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mu(&self) -> usize {
        self.weights.len()
    }

    fn eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, QdError> {
        if !self.cov.iter().all(|v| v.is_finite()) {
            return Err(QdError::EmitterDegenerate("non-finite covariance".into()));
        }
        let e = SymmetricEigen::new(self.cov.clone());
        let lo = e.eigenvalues.min();
        if !(lo > 0.0) {
            return Err(QdError::EmitterDegenerate(format!("covariance eigenvalue {lo:e}")));
        }
        Ok(e)
    }

    pub fn condition_number(&self) -> f64 {
        match self.eigen() {
            Ok(e) => e.eigenvalues.max() / e.eigenvalues.min(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Draws `lambda` samples, each clamped to the unit box.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>, QdError> {
        let e = self.eigen()?;
        let n = self.dim();
        let bd = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
        let samples = (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &self.mean + self.sigma * (&bd * z);
                x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
            })
            .collect();
        Ok(samples)
    }

    /// Updates the distribution from the samples ordered best first.
    pub fn tell(&mut self, ranked: &[Vec<f64>]) -> Result<(), QdError> {
        assert_eq!(ranked.len(), self.lambda, "tell expects the full ranked batch");
        let n = self.dim();
        let e = self.eigen()?;
        let old = self.mean.clone();
        let ys: Vec<DVector<f64>> = ranked[..self.mu()]
            .iter()
            .map(|x| (DVector::from_column_slice(x) - &old) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w += *w * y;
        }
        self.mean = &old + self.sigma * &y_w;

        let inv_sqrt = &e.eigenvectors
            * DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * e.eigenvectors.transpose();
        self.p_sigma = (1.0 - self.cs) * &self.p_sigma
            + (self.cs * (2.0 - self.cs) * self.mu_eff).sqrt() * (inv_sqrt * &y_w);
        let g = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - self.cs).powf(2.0 * g)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = (1.0 - self.cc) * &self.p_c + h * (self.cc * (2.0 - self.cc) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += *w * y * y.transpose();
        }
        let decay = 1.0 - self.c1 - self.cmu + (1.0 - h) * self.c1 * self.cc * (2.0 - self.cc);
        let c = decay * &self.cov + self.c1 * &self.p_c * self.p_c.transpose() + self.cmu * rank_mu;
        self.cov = (&c + c.transpose()) * 0.5;
        self.sigma *= ((self.cs / self.ds) * (ps_norm / self.chi_n - 1.0)).exp();
        self.generation += 1;

        let finite = self.sigma.is_finite()
            && self.mean.iter().chain(self.cov.iter()).chain(self.p_sigma.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(QdError::EmitterDegenerate("non-finite update".into()));
        }
        Ok(())
    }

    /// Resets the distribution around `mean`.
    pub fn restart(&mut self, mean: Vec<f64>) {
        let n = self.dim();
        assert_eq!(mean.len(), n);
        self.mean = DVector::from_vec(mean);
        self.sigma = self.sigma0;
        self.cov = DMatrix::identity(n, n);
        self.p_sigma = DVector::zeros(n);
        self.p_c = DVector::zeros(n);
        self.generation = 0;
        self.restarts += 1;
    }

    /// Restarts when the batch improved nothing, the step size collapsed or
    /// the covariance became ill-conditioned. Returns whether it restarted.
    pub fn restart_if_needed<R: Rng + ?Sized>(&mut self, archive: &ArchiveGrid, batch: &[AddStatus], rng: &mut R) -> bool {
        let stalled = !batch.iter().any(AddStatus::is_improvement);
        if stalled || self.sigma < SIGMA_FLOOR || self.condition_number() > MAX_CONDITION {
            let mean = restart_point(archive, self.dim(), rng);
            self.restart(mean);
            true
        } else {
            false
        }
    }
}

/// Genotype of a uniformly chosen elite, or a uniform point for an empty archive.
pub fn restart_point<R: Rng + ?Sized>(archive: &ArchiveGrid, dim: usize, rng: &mut R) -> Vec<f64> {
    if archive.is_empty() {
        (0..dim).map(|_| rng.random::<f64>()).collect()
    } else {
        let k = rng.random_range(0..archive.len());
        archive.iter().nth(k).map(|(_, e)| e.genotype.clone()).expect("index in range")
    }
}

/// Sample indices ordered new cells first, then improvements, each by gain,
/// then rejected samples by objective. Ties go to the lower index.
pub fn improvement_rank(batch: &[(f64, AddStatus)]) -> Vec<usize> {
    let key = |k: usize| -> (u8, f64) {
        match batch[k].1 {
            AddStatus::NewCell(d) => (0, d),
            AddStatus::Improved(d) => (1, d),
            AddStatus::Rejected => (2, batch[k].0),
        }
    };
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, va) = key(a);
        let (sb, vb) = key(b);
        sa.cmp(&sb).then(vb.total_cmp(&va)).then(a.cmp(&b))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::FeatureDescriptor;
    use crate::qd::archive::Elite;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.7).powi(2)).sum()
    }

    fn ranked_by_objective(mut xs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        xs.sort_by(|a, b| sphere(a).total_cmp(&sphere(b)));
        xs
    }

    #[test]
    fn default_hyperparameters() {
        let s = EmitterState::new(vec![0.5; 28], 0.2, 15);
        assert_eq!(s.mu(), 7);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(s.weights.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn zero_sigma_samples_equal_mean() {
        let mut s = EmitterState::new(vec![0.3; 28], 0.2, 15);
        s.mean[0] = 1.4;
        s.sigma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in s.ask(&mut rng).unwrap() {
            assert_eq!(x[0], 1.0);
            assert!(x[1..].iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn samples_stay_in_unit_box() {
        let s = EmitterState::new(vec![0.05; 28], 2.0, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            for x in s.ask(&mut rng).unwrap() {
                assert_eq!(x.len(), 28);
                assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn monte_carlo_sample_mean() {
        let s = EmitterState::new(vec![0.5; 28], 0.05, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = vec![0.0; 28];
        let draws = 100_000;
        for _ in 0..draws / 100 {
            for x in s.ask(&mut rng).unwrap() {
                for (a, v) in acc.iter_mut().zip(&x) {
                    *a += v;
                }
            }
        }
        for a in acc {
            assert!((a / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn non_spd_covariance_is_degenerate() {
        let mut s = EmitterState::new(vec![0.5; 4], 0.2, 6);
        s.cov[(2, 2)] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(s.ask(&mut rng), Err(QdError::EmitterDegenerate(_))));
        s.cov[(2, 2)] = f64::NAN;
        assert!(matches!(s.ask(&mut rng), Err(QdError::EmitterDegenerate(_))));
    }

    /// Textbook update written with explicit loops.
    struct Reference {
        m: Vec<f64>,
        sigma: f64,
        c: Vec<Vec<f64>>,
        ps: Vec<f64>,
        pc: Vec<f64>,
        g: usize,
    }

    impl Reference {
        fn tell(&mut self, ranked: &[Vec<f64>], lambda: usize) {
            let n = self.m.len();
            let nf = n as f64;
            let mu = lambda / 2;
            let mut w: Vec<f64> = (0..mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln()).collect();
            let sw: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sw);
            let mueff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
            let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
            let cs = (mueff + 2.0) / (nf + mueff + 5.0);
            let c1 = 2.0 / ((nf + 1.3) * (nf + 1.3) + mueff);
            let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0) * (nf + 2.0) + mueff));
            let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
            let chin = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

            let cm = DMatrix::from_fn(n, n, |i, j| self.c[i][j]);
            let eig = SymmetricEigen::new(cm);
            let mut invsqrt = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        invsqrt[i][j] +=
                            eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / eig.eigenvalues[k].sqrt();
                    }
                }
            }
            let old = self.m.clone();
            for i in 0..n {
                self.m[i] = (0..mu).map(|k| w[k] * ranked[k][i]).sum();
            }
            let step: Vec<f64> = (0..n).map(|i| (self.m[i] - old[i]) / self.sigma).collect();
            for i in 0..n {
                let z: f64 = (0..n).map(|j| invsqrt[i][j] * step[j]).sum();
                self.ps[i] = (1.0 - cs) * self.ps[i] + (cs * (2.0 - cs) * mueff).sqrt() * z;
            }
            self.g += 1;
            let psn = self.ps.iter().map(|v| v * v).sum::<f64>().sqrt();
            let hsig = psn / (1.0 - (1.0 - cs).powi(2 * self.g as i32)).sqrt() / chin < 1.4 + 2.0 / (nf + 1.0);
            let hs = hsig as i32 as f64;
            for i in 0..n {
                self.pc[i] = (1.0 - cc) * self.pc[i] + hs * (cc * (2.0 - cc) * mueff).sqrt() * step[i];
            }
            for i in 0..n {
                for j in 0..n {
                    let mut r = 0.0;
                    for k in 0..mu {
                        r += w[k] * (ranked[k][i] - old[i]) * (ranked[k][j] - old[j]) / (self.sigma * self.sigma);
                    }
                    self.c[i][j] = (1.0 - c1 - cmu) * self.c[i][j]
                        + c1 * (self.pc[i] * self.pc[j] + (1.0 - hs) * cc * (2.0 - cc) * self.c[i][j])
                        + cmu * r;
                }
            }
            self.sigma *= ((cs / damps) * (psn / chin - 1.0)).exp();
        }
    }

    #[test]
    fn tell_matches_reference_update() {
        let n = 6;
        let lambda = 15;
        let mut s = EmitterState::new(vec![0.4; n], 0.2, lambda);
        let mut r = Reference {
            m: vec![0.4; n],
            sigma: 0.2,
            c: (0..n).map(|i| (0..n).map(|j| (i == j) as i32 as f64).collect()).collect(),
            ps: vec![0.0; n],
            pc: vec![0.0; n],
            g: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let ranked = ranked_by_objective(s.ask(&mut rng).unwrap());
            s.tell(&ranked).unwrap();
            r.tell(&ranked, lambda);
            assert!((s.sigma - r.sigma).abs() <= 1e-10 * r.sigma);
            for i in 0..n {
                assert!((s.mean[i] - r.m[i]).abs() < 1e-10);
                for j in 0..n {
                    assert!((s.cov[(i, j)] - r.c[i][j]).abs() < 1e-9 * (1.0 + r.c[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn converges_on_shifted_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = EmitterState::new(vec![0.5; 10], 0.2, 15);
        let mut done = None;
        for g in 0..200 {
            let ranked = ranked_by_objective(s.ask(&mut rng).unwrap());
            s.tell(&ranked).unwrap();
            assert!((&s.cov - s.cov.transpose()).amax() <= 1e-12);
            if s.mean.iter().all(|m| (m - 0.7).abs() < 1e-3) {
                done = Some(g + 1);
                break;
            }
        }
        assert!(done.is_some(), "mean {:?}", s.mean);
    }

    #[test]
    fn identical_parents_shrink_sigma() {
        let mut s = EmitterState::new(vec![0.5; 28], 0.2, 15);
        let batch = vec![vec![0.5; 28]; 15];
        let mut last = s.sigma;
        for _ in 0..50 {
            s.tell(&batch).unwrap();
            assert!(s.sigma < last);
            last = s.sigma;
        }
        assert!(last < 0.2 * 0.5);
    }

    #[test]
    fn covariance_stays_spd_for_1000_generations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = EmitterState::new(vec![0.2; 28], 0.2, 15);
        let target: Vec<f64> = (0..28).map(|i| i as f64 / 27.0).collect();
        let f = |x: &[f64]| -> f64 { x.iter().zip(&target).map(|(a, b)| (a - b).powi(2) * 1.5f64.powi(1 + (a * 3.0) as i32)).sum() };
        for _ in 0..1000 {
            let mut xs = s.ask(&mut rng).unwrap();
            xs.sort_by(|a, b| f(a).total_cmp(&f(b)));
            s.tell(&xs).unwrap();
            assert!((&s.cov - s.cov.transpose()).amax() <= 1e-12);
            let e = SymmetricEigen::new(s.cov.clone());
            assert!(e.eigenvalues.min() > 1e-30);
            if s.sigma < SIGMA_FLOOR || s.condition_number() > MAX_CONDITION {
                s.restart(vec![0.5; 28]);
            }
        }
    }

    #[test]
    fn rank_strata_and_ties() {
        let b = [(0.3, AddStatus::NewCell(0.3)), (0.9, AddStatus::Improved(0.6))];
        assert_eq!(improvement_rank(&b), vec![0, 1]);
        let b = [(0.2, AddStatus::Rejected), (0.8, AddStatus::Rejected), (0.5, AddStatus::Rejected)];
        assert_eq!(improvement_rank(&b), vec![1, 2, 0]);
        let b = [
            (0.1, AddStatus::Rejected),
            (0.5, AddStatus::NewCell(0.5)),
            (0.5, AddStatus::NewCell(0.5)),
            (0.7, AddStatus::Improved(0.2)),
            (0.9, AddStatus::NewCell(0.9)),
        ];
        assert_eq!(improvement_rank(&b), vec![4, 1, 2, 3, 0]);
    }

    fn archive_with(genotype: Vec<f64>) -> ArchiveGrid {
        let mut a = ArchiveGrid::new(20, 20, (0.0, 1.0), (0.0, 1.0));
        a.add(Elite {
            genotype,
            objective: 0.5,
            features: FeatureDescriptor {
                workspace: 0.5,
                volume: 0.5,
            },
            evaluation_id: 0,
        });
        a
    }

    #[test]
    fn restart_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = archive_with(vec![0.25; 28]);
        let mut s = EmitterState::new(vec![0.5; 28], 0.2, 15);
        let ranked = s.ask(&mut rng).unwrap();
        s.tell(&ranked).unwrap();
        let mut batch = vec![AddStatus::Rejected; 15];
        batch[3] = AddStatus::NewCell(0.1);
        assert!(!s.restart_if_needed(&a, &batch, &mut rng));
        assert_eq!(s.restarts, 0);

        let batch = vec![AddStatus::Rejected; 15];
        assert!(s.restart_if_needed(&a, &batch, &mut rng));
        assert_eq!(s.restarts, 1);
        assert_eq!(s.cov, DMatrix::identity(28, 28));
        assert_eq!(s.sigma, 0.2);
        assert!(s.p_sigma.iter().chain(s.p_c.iter()).all(|&v| v == 0.0));
        assert!(s.mean.iter().all(|&v| v == 0.25));

        s.sigma = 1e-13;
        assert!(s.restart_if_needed(&a, &[AddStatus::NewCell(1.0)], &mut rng));
        s.cov[(0, 0)] = 1e15;
        assert!(s.restart_if_needed(&a, &[AddStatus::NewCell(1.0)], &mut rng));
        assert_eq!(s.restarts, 3);
    }

    #[test]
    fn empty_archive_restart_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = ArchiveGrid::new(20, 20, (0.0, 1.0), (0.0, 1.0));
        let mut s = EmitterState::new(vec![0.5; 28], 0.2, 15);
        let mut acc = 0.0;
        for _ in 0..200 {
            assert!(s.restart_if_needed(&a, &[AddStatus::Rejected], &mut rng));
            assert!(s.mean.iter().all(|v| (0.0..1.0).contains(v)));
            acc += s.mean.sum();
        }
        // mean of 5600 uniforms
        assert!((acc / 5600.0 - 0.5).abs() < 0.02);
    }
}
