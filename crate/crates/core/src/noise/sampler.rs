//! Gaussian samplers: a dense factorization of the real (x, y) covariance on a
//! grid, and an exact first-order recursion for single-exponential kernels.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Interpolation, NoiseRealization, RngStreamSpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{CorrelationKernel, MarkovForm};
use crate::linalg::{c, CMat};

const JITTER_LEVELS: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];
const ZERO_VARIANCE: f64 = 1e-13;

/// Draws z = x + iy with E[z_p* z_q] = χ_pq and E[z_p z_q] = η_pq from the
/// real embedding
///   <x x′> = ½Re(χ+η), <y y′> = ½Re(χ−η), <x y′> = ½Im(χ+η), <y x′> = ½Im(η−χ).
/// Components with zero variance are dropped and sampled as exact zeros.
#[derive(Debug, Clone)]
pub struct ComplexGaussianFactor {
    m: usize,
    /// Positions in the stacked (x, y) vector that carry variance.
    active: Vec<usize>,
    /// Transposed Cholesky factor, so each factor row is a contiguous column.
    factor_t: DMatrix<f64>,
    jitter: f64,
}

impl ComplexGaussianFactor {
    pub fn new(chi: &CMat, eta: &CMat) -> Result<Self> {
        let m = chi.nrows();
        if chi.shape() != (m, m) || eta.shape() != (m, m) {
            return Err(Error::DimensionMismatch("covariance blocks must be square and equal-sized".into()));
        }
        let mut r = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for p in 0..m {
            for q in 0..m {
                let (x, e) = (chi[(p, q)], eta[(p, q)]);
                r[(p, q)] = 0.5 * (x + e).re;
                r[(m + p, m + q)] = 0.5 * (x - e).re;
                r[(p, m + q)] = 0.5 * (x + e).im;
                r[(m + p, q)] = 0.5 * (e - x).im;
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise covariance".into()));
        }
        let r = (&r + r.transpose()) * 0.5;
        let max_diag = (0..2 * m).map(|k| r[(k, k)]).fold(0.0, f64::max);
        let active: Vec<usize> = (0..2 * m).filter(|&k| r[(k, k)] > ZERO_VARIANCE * max_diag).collect();
        // a variance-free component must also be uncorrelated with everything else
        let leak = (0..2 * m)
            .filter(|k| !active.contains(k))
            .flat_map(|k| (0..2 * m).map(move |j| (k, j)))
            .map(|(k, j)| r[(k, j)].abs())
            .fold(0.0, f64::max);
        if leak > 1e-7 * max_diag {
            return Err(Error::FactorizationFailed { max_jitter: 0.0 });
        }
        let size = active.len();
        let sub = DMatrix::from_fn(size, size, |a, b| r[(active[a], active[b])]);
        let trace: f64 = (0..size).map(|k| sub[(k, k)]).sum();
        let scale = if size > 0 { trace / size as f64 } else { 0.0 };
        for &delta in &JITTER_LEVELS {
            let mut jittered = sub.clone();
            for k in 0..size {
                jittered[(k, k)] += delta * scale;
            }
            if let Some(ch) = jittered.cholesky() {
                return Ok(Self { m, active, factor_t: ch.unpack().transpose(), jitter: delta * scale });
            }
        }
        Err(Error::FactorizationFailed { max_jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1] })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        let size = self.active.len();
        out.iter_mut().for_each(|z| *z = c(0.0, 0.0));
        let mut stack = [0.0f64; 16];
        let mut heap = Vec::new();
        let xi: &mut [f64] = if size <= stack.len() {
            &mut stack[..size]
        } else {
            heap.resize(size, 0.0);
            &mut heap
        };
        for x in xi.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        for (row, &pos) in self.active.iter().enumerate() {
            // lower-triangular factor
            let col = self.factor_t.column(row);
            let v: f64 = col.iter().zip(xi.iter()).take(row + 1).map(|(l, x)| l * x).sum();
            if pos < self.m {
                out[pos].re = v;
            } else {
                out[pos - self.m].im = v;
            }
        }
    }
}

/// Dense sampler for any admissible kernel on a fixed grid; the factor is built
/// once and shared read-only across trajectories.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    grid: Arc<TimeGrid>,
    n: usize,
    factor: Arc<ComplexGaussianFactor>,
    interpolation: Interpolation,
}

impl GaussianSampler {
    pub fn new(k: &CorrelationKernel, grid: &TimeGrid) -> Result<Self> {
        let n = k.n_channels();
        let nt = grid.len();
        let size = n * nt;
        let mut chi = CMat::zeros(size, size);
        let mut eta = CMat::zeros(size, size);
        for (i, &t) in grid.times().iter().enumerate() {
            for (j, &s) in grid.times().iter().enumerate() {
                let v = k.eval(t, s);
                for a in 0..n {
                    for b in 0..n {
                        chi[(i * n + a, j * n + b)] = v.chi[(a, b)];
                        eta[(i * n + a, j * n + b)] = v.eta[(a, b)];
                    }
                }
            }
        }
        let factor = ComplexGaussianFactor::new(&chi, &eta)?;
        Ok(Self {
            grid: Arc::new(grid.clone()),
            n,
            factor: Arc::new(factor),
            interpolation: Interpolation::for_kernel(k),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample(&self, stream: RngStreamSpec) -> Result<NoiseRealization> {
        let mut rng = stream.rng();
        let mut values = vec![c(0.0, 0.0); self.n * self.grid.len()];
        self.factor.sample_into(&mut rng, &mut values);
        NoiseRealization::new(self.grid.clone(), self.n, values, self.interpolation)
    }
}

/// Exact stationary recursion z_{i+1} = a z_i + w_i, a = e^{-(γ+iΩ)Δt}, for
/// kernels χ = P e^{-(γ-iΩ)τ}, η = C e^{-(γ+iΩ)τ} (τ >= 0) on a uniform grid.
#[derive(Debug, Clone)]
pub struct MarkovSampler {
    grid: Arc<TimeGrid>,
    n: usize,
    a: Complex64,
    initial: Arc<ComplexGaussianFactor>,
    increment: Arc<ComplexGaussianFactor>,
    interpolation: Interpolation,
}

impl MarkovSampler {
    pub fn new(k: &CorrelationKernel, grid: &TimeGrid) -> Result<Self> {
        let form = k.markov_form().ok_or_else(|| {
            Error::Unsupported("kernel is not of single-exponential form; use the grid sampler".into())
        })?;
        Self::from_form(&form, grid, Interpolation::for_kernel(k))
    }

    pub fn from_form(form: &MarkovForm, grid: &TimeGrid, interpolation: Interpolation) -> Result<Self> {
        let dt = match grid.uniform_step() {
            Some(h) => h,
            None if grid.len() == 1 => 0.0,
            None => return Err(Error::InvalidGrid("the recursive sampler needs a uniform grid".into())),
        };
        let a = (c(-form.gamma, -form.omega) * dt).exp();
        let initial = ComplexGaussianFactor::new(&form.p, &form.c)?;
        let inc_chi = form.p.scale(1.0 - a.norm_sqr());
        let inc_eta = &form.c * (c(1.0, 0.0) - a * a);
        let increment = ComplexGaussianFactor::new(&inc_chi, &inc_eta)?;
        Ok(Self {
            grid: Arc::new(grid.clone()),
            n: form.p.nrows(),
            a,
            initial: Arc::new(initial),
            increment: Arc::new(increment),
            interpolation,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, stream: RngStreamSpec) -> Result<NoiseRealization> {
        let mut rng = stream.rng();
        let n = self.n;
        let nt = self.grid.len();
        let mut values = vec![c(0.0, 0.0); n * nt];
        self.initial.sample_into(&mut rng, &mut values[..n]);
        let mut w = vec![c(0.0, 0.0); n];
        for i in 1..nt {
            self.increment.sample_into(&mut rng, &mut w);
            for a in 0..n {
                values[i * n + a] = values[(i - 1) * n + a] * self.a + w[a];
            }
        }
        NoiseRealization::new(self.grid.clone(), n, values, self.interpolation)
    }
}

/// Picks the recursive sampler when the kernel allows it on a uniform grid.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Markov(MarkovSampler),
    Gaussian(GaussianSampler),
}

impl NoiseSampler {
    pub fn new(k: &CorrelationKernel, grid: &TimeGrid) -> Result<Self> {
        if k.markov_form().is_some() && grid.uniform_step().is_some() {
            Ok(NoiseSampler::Markov(MarkovSampler::new(k, grid)?))
        } else {
            Ok(NoiseSampler::Gaussian(GaussianSampler::new(k, grid)?))
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            NoiseSampler::Markov(s) => s.grid(),
            NoiseSampler::Gaussian(s) => s.grid(),
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            NoiseSampler::Markov(_) => "markov-recursion",
            NoiseSampler::Gaussian(_) => "grid-cholesky",
        }
    }

    pub fn sample(&self, stream: RngStreamSpec) -> Result<NoiseRealization> {
        match self {
            NoiseSampler::Markov(s) => s.sample(stream),
            NoiseSampler::Gaussian(s) => s.sample(stream),
        }
    }
}
