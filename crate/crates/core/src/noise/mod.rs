//! Sampling complex Gaussian noise paths with prescribed (χ, η) and estimating
//! their empirical correlations.

mod estimate;
mod io;
mod sampler;

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{exponential_kernel, CorrelationKernel, OUParams};
use crate::linalg::{self, CMat};

pub use estimate::{estimate_correlations, CorrelationAccumulator, EmpiricalCorrelations, FidelitySummary};
pub use io::{read_realizations, write_correlations_csv, write_realizations};
pub use sampler::{ComplexGaussianFactor, GaussianSampler, MarkovSampler, NoiseSampler};

/// Identifies one reproducible random stream: the ChaCha8 generator seeded with
/// `master_seed` and switched to stream `stream_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngStreamSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStreamSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// How noise values between grid points are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    /// Catmull-Rom cubic on uniform grids; linear otherwise.
    Cubic,
}

impl Interpolation {
    pub fn for_kernel(k: &CorrelationKernel) -> Self {
        if k.is_smooth() {
            Interpolation::Cubic
        } else {
            Interpolation::Linear
        }
    }
}

/// One sampled path z_α(t_i) of every channel on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    grid: Arc<TimeGrid>,
    n: usize,
    /// `values[i * n + α]` = z_α(t_i).
    values: Vec<Complex64>,
    interpolation: Interpolation,
    step: Option<f64>,
}

impl NoiseRealization {
    pub fn new(grid: Arc<TimeGrid>, n: usize, values: Vec<Complex64>, interpolation: Interpolation) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("a realization needs at least one channel".into()));
        }
        if values.len() != n * grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} channels on {} points",
                values.len(),
                n,
                grid.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("noise realization".into()));
        }
        let step = grid.uniform_step();
        Ok(Self { grid, n, values, interpolation, step })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, i: usize, alpha: usize) -> Complex64 {
        self.values[i * self.n + alpha]
    }

    /// All channels at grid index `i`.
    pub fn at_index(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// z(t) for every channel: exact at grid points (to 1e-9 of the spacing),
    /// interpolated in between, clamped outside the grid.
    pub fn at(&self, t: f64, out: &mut [Complex64]) {
        let times = self.grid.times();
        let nt = times.len();
        if nt == 1 || t <= times[0] {
            out.copy_from_slice(self.at_index(0));
            return;
        }
        if t >= times[nt - 1] {
            out.copy_from_slice(self.at_index(nt - 1));
            return;
        }
        let (k, frac) = match self.step {
            Some(h) => {
                let x = (t - times[0]) / h;
                let k = (x.floor() as usize).min(nt - 2);
                (k, x - k as f64)
            }
            None => {
                let k = (times.partition_point(|&p| p <= t) - 1).min(nt - 2);
                (k, (t - times[k]) / (times[k + 1] - times[k]))
            }
        };
        if frac.abs() <= 1e-9 {
            out.copy_from_slice(self.at_index(k));
            return;
        }
        if (1.0 - frac).abs() <= 1e-9 {
            out.copy_from_slice(self.at_index(k + 1));
            return;
        }
        let p1 = self.at_index(k);
        let p2 = self.at_index(k + 1);
        match (self.interpolation, self.step) {
            (Interpolation::Cubic, Some(_)) => {
                let u = frac;
                let u2 = u * u;
                let u3 = u2 * u;
                for a in 0..self.n {
                    let y1 = p1[a];
                    let y2 = p2[a];
                    // endpoints extrapolated linearly
                    let y0 = if k > 0 { self.value(k - 1, a) } else { y1 * 2.0 - y2 };
                    let y3 = if k + 2 < nt { self.value(k + 2, a) } else { y2 * 2.0 - y1 };
                    out[a] = ((y1 * 2.0)
                        + (y2 - y0) * u
                        + (y0 * 2.0 - y1 * 5.0 + y2 * 4.0 - y3) * u2
                        + (y1 * 3.0 - y0 - y2 * 3.0 + y3) * u3)
                        * 0.5;
                }
            }
            _ => {
                for a in 0..self.n {
                    out[a] = p1[a] * (1.0 - frac) + p2[a] * frac;
                }
            }
        }
    }

    /// Largest imaginary part over the path.
    pub fn max_imaginary(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// One path from the grid factorization of `k`.
pub fn sample_gaussian(k: &CorrelationKernel, grid: &TimeGrid, rng: RngStreamSpec) -> Result<NoiseRealization> {
    GaussianSampler::new(k, grid)?.sample(rng)
}

/// One path of the stationary OU process by exact recursion on a uniform grid.
pub fn sample_ou(p: OUParams, grid: &TimeGrid, rng: RngStreamSpec) -> Result<NoiseRealization> {
    let k = exponential_kernel(p)?;
    MarkovSampler::new(&k, grid)?.sample(rng)
}

/// r_μ(t) = Σ_α U†_μα z_α(t) at every grid point.
pub fn transform_noises(nr: &NoiseRealization, u: &CMat) -> Result<NoiseRealization> {
    let n = nr.n_channels();
    if u.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {}x{} but realization has {n} channels",
            u.nrows(),
            u.ncols()
        )));
    }
    linalg::ensure_unitary(u, 1e-12)?;
    let ud = u.adjoint();
    let mut values = Vec::with_capacity(nr.values.len());
    for i in 0..nr.grid.len() {
        let z = nr.at_index(i);
        for mu in 0..n {
            values.push((0..n).map(|a| ud[(mu, a)] * z[a]).sum());
        }
    }
    NoiseRealization::new(nr.grid.clone(), n, values, nr.interpolation)
}
