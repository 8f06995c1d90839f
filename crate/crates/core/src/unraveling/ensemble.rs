//! Ensemble averages of |ψ⟩⟨ψ| over independent noise realizations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{Simulation, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{CMat, ZERO};
use crate::noise::{NoiseSampler, RngStreamSpec};

/// Running sums of ρ_st = |ψ⟩⟨ψ|, its trace and the recorded observables on
/// the output grid. Merging is plain addition.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    dim: usize,
    names: Vec<String>,
    count: usize,
    blow_ups: usize,
    first_blow_up: Option<u64>,
    rho_sum: Vec<CMat>,
    rho_sq: Vec<DMatrix<f64>>,
    trace_sum: Vec<f64>,
    trace_sq: Vec<f64>,
    obs_sum: Vec<Vec<Complex64>>,
    obs_sq: Vec<Vec<f64>>,
}

/// Mean and standard error of a sample mean from Σx and Σ|x|².
fn mean_se(sum: Complex64, sq: f64, m: usize) -> (Complex64, f64) {
    let mf = m as f64;
    let mean = sum / mf;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sq - mf * mean.norm_sqr()) / (mf - 1.0)).max(0.0);
    (mean, (var / mf).sqrt())
}

impl EnsembleAccumulator {
    pub fn new(times: Vec<f64>, dim: usize, names: Vec<String>) -> Self {
        let nt = times.len();
        let k = names.len();
        Self {
            dim,
            count: 0,
            blow_ups: 0,
            first_blow_up: None,
            rho_sum: vec![CMat::zeros(dim, dim); nt],
            rho_sq: vec![DMatrix::zeros(dim, dim); nt],
            trace_sum: vec![0.0; nt],
            trace_sq: vec![0.0; nt],
            obs_sum: vec![vec![ZERO; nt]; k],
            obs_sq: vec![vec![0.0; nt]; k],
            times,
            names,
        }
    }

    pub fn push(&mut self, tr: &Trajectory) -> Result<()> {
        if tr.states.len() != self.times.len() || tr.observables.len() != self.names.len() {
            return Err(Error::GridMismatch("trajectory does not match the accumulator layout".into()));
        }
        for (i, psi) in tr.states.iter().enumerate() {
            if psi.len() != self.dim {
                return Err(Error::DimensionMismatch("trajectory state dimension differs".into()));
            }
            let rho = &mut self.rho_sum[i];
            let sq = &mut self.rho_sq[i];
            for a in 0..self.dim {
                for b in 0..self.dim {
                    let x = psi[a] * psi[b].conj();
                    rho[(a, b)] += x;
                    sq[(a, b)] += x.norm_sqr();
                }
            }
            let norm = tr.norms[i];
            self.trace_sum[i] += norm;
            self.trace_sq[i] += norm * norm;
        }
        for (k, series) in tr.observables.iter().enumerate() {
            for (i, &x) in series.iter().enumerate() {
                self.obs_sum[k][i] += x;
                self.obs_sq[k][i] += x.norm_sqr();
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn record_blow_up(&mut self, trajectory: u64) {
        self.blow_ups += 1;
        self.first_blow_up = Some(self.first_blow_up.map_or(trajectory, |f| f.min(trajectory)));
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.times != self.times || other.dim != self.dim || other.names != self.names {
            return Err(Error::GridMismatch("cannot merge accumulators with different layouts".into()));
        }
        self.count += other.count;
        self.blow_ups += other.blow_ups;
        self.first_blow_up = match (self.first_blow_up, other.first_blow_up) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        for i in 0..self.times.len() {
            self.rho_sum[i] += &other.rho_sum[i];
            self.rho_sq[i] += &other.rho_sq[i];
            self.trace_sum[i] += other.trace_sum[i];
            self.trace_sq[i] += other.trace_sq[i];
        }
        for k in 0..self.names.len() {
            for i in 0..self.times.len() {
                self.obs_sum[k][i] += other.obs_sum[k][i];
                self.obs_sq[k][i] += other.obs_sq[k][i];
            }
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn blow_ups(&self) -> usize {
        self.blow_ups
    }

    pub fn first_blow_up(&self) -> Option<u64> {
        self.first_blow_up
    }

    pub fn observable_names(&self) -> &[String] {
        &self.names
    }

    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn mean_rho(&self, i: usize) -> CMat {
        self.rho_sum[i].unscale(self.count as f64)
    }

    /// Entrywise standard error of mean_rho.
    pub fn rho_stderr(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| {
            mean_se(self.rho_sum[i][(a, b)], self.rho_sq[i][(a, b)], self.count).1
        })
    }

    pub fn trace_mean(&self, i: usize) -> f64 {
        self.trace_sum[i] / self.count as f64
    }

    pub fn trace_stderr(&self, i: usize) -> f64 {
        mean_se(Complex64::new(self.trace_sum[i], 0.0), self.trace_sq[i], self.count).1
    }

    pub fn observable_mean(&self, k: usize, i: usize) -> Complex64 {
        self.obs_sum[k][i] / self.count as f64
    }

    pub fn observable_stderr(&self, k: usize, i: usize) -> f64 {
        mean_se(self.obs_sum[k][i], self.obs_sq[k][i], self.count).1
    }

    /// Sample variance of the per-trajectory values E|x - mean|².
    pub fn observable_variance(&self, k: usize, i: usize) -> f64 {
        let se = self.observable_stderr(k, i);
        se * se * self.count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Trajectories per task. Batches are reduced in index order, so results
    /// do not depend on the number of workers.
    pub batch_size: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { threads: None, batch_size: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub accumulator: EnsembleAccumulator,
    pub sampler: &'static str,
}

/// Averages `m` trajectories; trajectory i uses RNG stream (master_seed, i).
/// Blown-up trajectories are excluded from the averages; more than 0.1% of
/// them fails the whole run.
pub fn run_ensemble(sim: &Simulation, m: usize, master_seed: u64, opts: EnsembleOptions) -> Result<EnsembleRun> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("an ensemble needs at least 2 trajectories, got {m}")));
    }
    let plan = sim.plan()?;
    let sampler = NoiseSampler::new(&sim.kernel, &sim.integrator.noise_grid(&sim.kernel))?;
    let names: Vec<String> = sim.observables.iter().map(|o| o.name.clone()).collect();
    let times = sim.integrator.output_times();
    let batch = opts.batch_size.max(1);
    let batches: Vec<(usize, usize)> = (0..m).step_by(batch).map(|s| (s, (s + batch).min(m))).collect();
    let work = || -> Vec<Result<EnsembleAccumulator>> {
        batches
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = EnsembleAccumulator::new(times.clone(), plan.dim(), names.clone());
                for i in lo..hi {
                    let nr = sampler.sample(RngStreamSpec::new(master_seed, i as u64))?;
                    match plan.run(&nr, i as u64) {
                        Ok(tr) => acc.push(&tr)?,
                        Err(Error::BlowUp { trajectory, .. }) => acc.record_blow_up(trajectory),
                        Err(e) => return Err(e),
                    }
                }
                Ok(acc)
            })
            .collect()
    };
    let parts = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut total = EnsembleAccumulator::new(times, plan.dim(), names);
    for p in parts {
        total.merge(&p?)?;
    }
    if total.blow_ups * 1000 > m {
        return Err(Error::TooManyBlowUps {
            failed: total.blow_ups,
            total: m,
            first: total.first_blow_up.unwrap_or(0),
        });
    }
    if total.count < 2 {
        return Err(Error::InvalidParameter("fewer than 2 trajectories survived".into()));
    }
    Ok(EnsembleRun { accumulator: total, sampler: sampler.method() })
}
