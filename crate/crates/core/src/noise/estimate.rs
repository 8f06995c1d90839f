//! Empirical second moments of noise ensembles.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::NoiseRealization;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::CorrelationKernel;
use crate::linalg::{c, CMat};

/// Streaming sums of z*_p z_q and z_p z_q over realizations, p = i·n + α.
/// Merging is exact addition, so results do not depend on how an ensemble is split.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    grid: Arc<TimeGrid>,
    n: usize,
    count: usize,
    chi: Vec<Complex64>,
    chi_sq: Vec<f64>,
    eta: Vec<Complex64>,
    eta_sq: Vec<f64>,
    z: Vec<Complex64>,
    z_sq: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(grid: Arc<TimeGrid>, n: usize) -> Self {
        let size = n * grid.len();
        Self {
            grid,
            n,
            count: 0,
            chi: vec![c(0.0, 0.0); size * size],
            chi_sq: vec![0.0; size * size],
            eta: vec![c(0.0, 0.0); size * size],
            eta_sq: vec![0.0; size * size],
            z: vec![c(0.0, 0.0); size],
            z_sq: vec![0.0; size],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, nr: &NoiseRealization) -> Result<()> {
        if nr.grid() != &*self.grid || nr.n_channels() != self.n {
            return Err(Error::GridMismatch("realization grid or channel count differs from the ensemble".into()));
        }
        let v = nr.values();
        let size = v.len();
        for p in 0..size {
            let zp = v[p];
            let zp_conj = zp.conj();
            self.z[p] += zp;
            self.z_sq[p] += zp.norm_sqr();
            let row = p * size;
            for q in 0..size {
                let x = zp_conj * v[q];
                let y = zp * v[q];
                self.chi[row + q] += x;
                self.chi_sq[row + q] += x.norm_sqr();
                self.eta[row + q] += y;
                self.eta_sq[row + q] += y.norm_sqr();
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        if *other.grid != *self.grid || other.n != self.n {
            return Err(Error::GridMismatch("cannot merge accumulators on different grids".into()));
        }
        self.count += other.count;
        let add_c = |a: &mut [Complex64], b: &[Complex64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        let add_r = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add_c(&mut self.chi, &other.chi);
        add_r(&mut self.chi_sq, &other.chi_sq);
        add_c(&mut self.eta, &other.eta);
        add_r(&mut self.eta_sq, &other.eta_sq);
        add_c(&mut self.z, &other.z);
        add_r(&mut self.z_sq, &other.z_sq);
        Ok(())
    }

    pub fn finish(&self) -> Result<EmpiricalCorrelations> {
        if self.count < 2 {
            return Err(Error::InvalidParameter("correlation estimates need at least 2 realizations".into()));
        }
        let m = self.count as f64;
        // standard error of a complex mean: sqrt(E|x - mean|^2 / (M (M-1)))
        let se = |sum: Complex64, sq: f64| -> (Complex64, f64) {
            let mean = sum / m;
            let var = ((sq - m * mean.norm_sqr()) / (m - 1.0)).max(0.0);
            (mean, (var / m).sqrt())
        };
        let n = self.n;
        let nt = self.grid.len();
        let size = n * nt;
        let mut chi_hat = Vec::with_capacity(nt * nt);
        let mut eta_hat = Vec::with_capacity(nt * nt);
        let mut chi_se = Vec::with_capacity(nt * nt);
        let mut eta_se = Vec::with_capacity(nt * nt);
        for i in 0..nt {
            for j in 0..nt {
                let mut ch = CMat::zeros(n, n);
                let mut eh = CMat::zeros(n, n);
                let mut cs = DMatrix::<f64>::zeros(n, n);
                let mut es = DMatrix::<f64>::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let idx = (i * n + a) * size + j * n + b;
                        let (mc, sc) = se(self.chi[idx], self.chi_sq[idx]);
                        let (me, s_e) = se(self.eta[idx], self.eta_sq[idx]);
                        ch[(a, b)] = mc;
                        cs[(a, b)] = sc;
                        eh[(a, b)] = me;
                        es[(a, b)] = s_e;
                    }
                }
                chi_hat.push(ch);
                eta_hat.push(eh);
                chi_se.push(cs);
                eta_se.push(es);
            }
        }
        let (mean_z, mean_z_se): (Vec<_>, Vec<_>) = self.z.iter().zip(&self.z_sq).map(|(&s, &q)| se(s, q)).unzip();
        Ok(EmpiricalCorrelations {
            grid: self.grid.clone(),
            n,
            sample_count: self.count,
            chi_hat,
            eta_hat,
            chi_se,
            eta_se,
            mean_z,
            mean_z_se,
        })
    }
}

/// Sample means of z*_α(t_i) z_β(t_j) and z_α(t_i) z_β(t_j) with standard errors.
/// The delete-one jackknife error of a sample mean equals s/√M, which is what is stored.
#[derive(Debug, Clone)]
pub struct EmpiricalCorrelations {
    pub grid: Arc<TimeGrid>,
    pub n: usize,
    pub sample_count: usize,
    /// Indexed by i·N + j.
    pub chi_hat: Vec<CMat>,
    pub eta_hat: Vec<CMat>,
    pub chi_se: Vec<DMatrix<f64>>,
    pub eta_se: Vec<DMatrix<f64>>,
    /// Indexed by i·n + α.
    pub mean_z: Vec<Complex64>,
    pub mean_z_se: Vec<f64>,
}

/// Outcome of comparing empirical moments with a reference.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FidelitySummary {
    pub entries: usize,
    pub within: usize,
    pub fraction_within: f64,
    pub max_z: f64,
}

fn z_score(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev / se
    } else if dev <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl EmpiricalCorrelations {
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.grid.len() + j
    }

    pub fn chi(&self, i: usize, j: usize) -> &CMat {
        &self.chi_hat[self.index(i, j)]
    }

    pub fn eta(&self, i: usize, j: usize) -> &CMat {
        &self.eta_hat[self.index(i, j)]
    }

    pub fn chi_stderr(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.chi_se[self.index(i, j)]
    }

    pub fn eta_stderr(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.eta_se[self.index(i, j)]
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.mean_z.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |mean z| / stderr over all components.
    pub fn max_mean_z_score(&self) -> f64 {
        self.mean_z.iter().zip(&self.mean_z_se).map(|(m, &s)| z_score(m.norm(), s)).fold(0.0, f64::max)
    }

    /// Fraction of (i, j, α, β) entries of χ̂ and η̂ within `nsigma` standard errors
    /// of the kernel.
    pub fn compare_kernel(&self, k: &CorrelationKernel, nsigma: f64) -> FidelitySummary {
        let times = self.grid.times();
        let mut scores = Vec::with_capacity(2 * self.chi_hat.len() * self.n * self.n);
        for (i, &t) in times.iter().enumerate() {
            for (j, &s) in times.iter().enumerate() {
                let v = k.eval(t, s);
                let idx = self.index(i, j);
                for a in 0..self.n {
                    for b in 0..self.n {
                        scores.push(z_score(
                            (self.chi_hat[idx][(a, b)] - v.chi[(a, b)]).norm(),
                            self.chi_se[idx][(a, b)],
                        ));
                        scores.push(z_score(
                            (self.eta_hat[idx][(a, b)] - v.eta[(a, b)]).norm(),
                            self.eta_se[idx][(a, b)],
                        ));
                    }
                }
            }
        }
        summarize(&scores, nsigma)
    }

    /// Two-sample comparison: |a - b| / sqrt(se_a² + se_b²) over all entries.
    pub fn compare_samples(&self, other: &EmpiricalCorrelations, nsigma: f64) -> Result<FidelitySummary> {
        if *self.grid != *other.grid || self.n != other.n {
            return Err(Error::GridMismatch("empirical correlations on different grids".into()));
        }
        let mut scores = Vec::with_capacity(2 * self.chi_hat.len() * self.n * self.n);
        for idx in 0..self.chi_hat.len() {
            for a in 0..self.n {
                for b in 0..self.n {
                    let se = self.chi_se[idx][(a, b)].hypot(other.chi_se[idx][(a, b)]);
                    scores.push(z_score((self.chi_hat[idx][(a, b)] - other.chi_hat[idx][(a, b)]).norm(), se));
                    let se = self.eta_se[idx][(a, b)].hypot(other.eta_se[idx][(a, b)]);
                    scores.push(z_score((self.eta_hat[idx][(a, b)] - other.eta_hat[idx][(a, b)]).norm(), se));
                }
            }
        }
        Ok(summarize(&scores, nsigma))
    }
}

fn summarize(scores: &[f64], nsigma: f64) -> FidelitySummary {
    let within = scores.iter().filter(|&&z| z <= nsigma).count();
    FidelitySummary {
        entries: scores.len(),
        within,
        fraction_within: if scores.is_empty() { 1.0 } else { within as f64 / scores.len() as f64 },
        max_z: scores.iter().copied().fold(0.0, f64::max),
    }
}

/// Estimates correlations from a stored ensemble.
pub fn estimate_correlations(ensemble: &[NoiseRealization]) -> Result<EmpiricalCorrelations> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InvalidParameter("correlation estimates need at least 2 realizations".into()))?;
    let mut acc = CorrelationAccumulator::new(first.shared_grid().clone(), first.n_channels());
    for nr in ensemble {
        acc.push(nr)?;
    }
    acc.finish()
}
