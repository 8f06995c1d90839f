//! Time grids shared by kernels, noise sampling, and integrators.

use crate::error::{Error, Result};

/// Strictly increasing, finite sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("grid contains non-finite times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `steps + 1` equally spaced points from `t0` to `t1`.
    pub fn uniform(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::InvalidGrid(format!("cannot build a uniform grid on [{t0}, {t1}] with {steps} steps")));
        }
        let h = (t1 - t0) / steps as f64;
        Self::new((0..=steps).map(|k| if k == steps { t1 } else { t0 + h * k as f64 }).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing if the grid is uniform to relative precision 1e-9.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let h = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        let ok = self.times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
        ok.then_some(h)
    }

    /// At most `max_points` points, strided, always including the endpoints.
    pub fn subsample(&self, max_points: usize) -> TimeGrid {
        let n = self.times.len();
        if n <= max_points || max_points < 2 {
            return self.clone();
        }
        let mut picked: Vec<f64> = (0..max_points).map(|k| self.times[(k * (n - 1)) / (max_points - 1)]).collect();
        picked.dedup();
        TimeGrid { times: picked }
    }
}

impl TimeGrid {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of a grid time equal to `t` within 1e-9 of the local spacing.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&p| p < t);
        let tol = 1e-9 * (self.end() - self.start()).abs().max(1.0);
        [k.saturating_sub(1), k]
            .into_iter()
            .filter(|&i| i < self.times.len())
            .find(|&i| (self.times[i] - t).abs() <= tol)
    }
}
