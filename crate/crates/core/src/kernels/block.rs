//! Block covariance of the noise vector on a grid and its positivity test.

use super::CorrelationKernel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::CMat;

/// Default relative eigenvalue tolerance for admissibility.
pub const DEFAULT_POSITIVITY_TOL: f64 = 1e-10;

/// The kernel assembled on a grid as one Hermitian 2nN × 2nN matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub grid: TimeGrid,
    pub n_channels: usize,
    pub block: CMat,
}

/// Assembles [[χ, η*], [η, χ*]] with row index i·n + α in each quadrant
/// (time t_i, channel α), then symmetrizes against rounding.
pub fn build_block_covariance(k: &CorrelationKernel, grid: &TimeGrid) -> Result<KernelGrid> {
    let n = k.n_channels();
    let size = n * grid.len();
    let mut b = CMat::zeros(2 * size, 2 * size);
    for (i, &t) in grid.times().iter().enumerate() {
        for (j, &s) in grid.times().iter().enumerate() {
            let v = k.eval(t, s);
            if v.chi.iter().chain(v.eta.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(format!("kernel value at (t, s) = ({t}, {s})")));
            }
            for a in 0..n {
                for bb in 0..n {
                    let p = i * n + a;
                    let q = j * n + bb;
                    let chi = v.chi[(a, bb)];
                    let eta = v.eta[(a, bb)];
                    b[(p, q)] = chi;
                    b[(p, size + q)] = eta.conj();
                    b[(size + p, q)] = eta;
                    b[(size + p, size + q)] = chi.conj();
                }
            }
        }
    }
    let block = (&b + b.adjoint()).scale(0.5);
    Ok(KernelGrid { grid: grid.clone(), n_channels: n, block })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PositivityReport {
    pub pass: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Absolute threshold: pass iff min_eigenvalue >= -tolerance.
    pub tolerance: f64,
}

impl PositivityReport {
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::Inadmissible { min_eigenvalue: self.min_eigenvalue, tolerance: self.tolerance })
        }
    }
}

/// Passes iff the smallest eigenvalue of the block is >= -tol.
pub fn check_positivity(kg: &KernelGrid, tol: f64) -> Result<PositivityReport> {
    if kg.block.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("block covariance".into()));
    }
    let values = kg.block.symmetric_eigenvalues();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PositivityReport { pass: min >= -tol, min_eigenvalue: min, max_eigenvalue: max, tolerance: tol })
}

/// Assembles the block on `grid` and tests it with tolerance
/// `rel_tol` × (largest eigenvalue magnitude).
pub fn check_kernel_positivity(k: &CorrelationKernel, grid: &TimeGrid, rel_tol: f64) -> Result<PositivityReport> {
    let kg = build_block_covariance(k, grid)?;
    let mut report = check_positivity(&kg, f64::INFINITY)?;
    let scale = report.min_eigenvalue.abs().max(report.max_eigenvalue.abs());
    report.tolerance = rel_tol * scale;
    report.pass = report.min_eigenvalue >= -report.tolerance;
    Ok(report)
}
