//! Kernels induced by a bosonic environment in a (thermal) Gaussian state, and
//! their linear-quadrature images.

use num_complex::Complex64;

use super::{CorrelationKernel, SpectralTerm};
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// One bath mode: coupling g_k, frequency Ω_k (relative to the carrier), thermal
/// occupation n_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub g: Complex64,
    pub omega: f64,
    pub n_thermal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpectrum {
    pub modes: Vec<BathMode>,
    /// Frequency the coupling operators rotate at; mode frequencies are measured from it.
    pub carrier: f64,
}

impl BathSpectrum {
    pub fn new(modes: Vec<BathMode>) -> Self {
        Self { modes, carrier: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter("bath spectrum needs at least one mode".into()));
        }
        for (k, m) in self.modes.iter().enumerate() {
            if !(m.n_thermal >= 0.0) || !m.n_thermal.is_finite() {
                return Err(Error::InvalidParameter(format!("mode {k}: occupation must be >= 0, got {}", m.n_thermal)));
            }
            if !m.omega.is_finite() || !m.g.re.is_finite() || !m.g.im.is_finite() {
                return Err(Error::NonFinite(format!("mode {k} parameters")));
            }
        }
        Ok(())
    }

    /// True when every mode at Ω has a partner at -Ω with conjugate coupling and
    /// equal occupation (a mode at Ω = 0 must then have a real coupling).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let mut used = vec![false; self.modes.len()];
        for i in 0..self.modes.len() {
            if used[i] {
                continue;
            }
            let a = self.modes[i];
            let partner = (0..self.modes.len()).find(|&j| {
                !used[j]
                    && (j != i || a.omega.abs() <= tol)
                    && (self.modes[j].omega + a.omega).abs() <= tol
                    && (self.modes[j].g - a.g.conj()).norm() <= tol
                    && (self.modes[j].n_thermal - a.n_thermal).abs() <= tol
            });
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }
}

/// Per-channel coefficients of Z_α = Σ_k (g_αk a_k† e^{iΩ_k t} + h_αk a_k e^{-iΩ_k t}).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingStructure {
    /// n × K creation-part coefficients.
    pub g: CMat,
    /// n × K annihilation-part coefficients; `None` means zero.
    pub h: Option<CMat>,
}

impl CouplingStructure {
    /// One channel coupled to every mode with the mode's own coupling constant.
    pub fn single_channel(b: &BathSpectrum) -> Self {
        Self { g: CMat::from_fn(1, b.modes.len(), |_, k| b.modes[k].g), h: None }
    }

    pub fn n_channels(&self) -> usize {
        self.g.nrows()
    }

    fn validate(&self, n_modes: usize) -> Result<()> {
        if self.g.ncols() != n_modes || self.g.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "coupling matrix is {}x{} for {} modes",
                self.g.nrows(),
                self.g.ncols(),
                n_modes
            )));
        }
        if let Some(h) = &self.h {
            if h.shape() != self.g.shape() {
                return Err(Error::DimensionMismatch("annihilation coefficients must match creation shape".into()));
            }
        }
        Ok(())
    }

    fn h_or_zero(&self) -> CMat {
        self.h.clone().unwrap_or_else(|| CMat::zeros(self.g.nrows(), self.g.ncols()))
    }
}

/// Linear quadrature 𝒵 = M Z + N Z†. With `real_noise`, the quadrature noise is
/// taken real: the realized kernel is χ = η = Re χ_q.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMap {
    pub m: CMat,
    pub n: Option<CMat>,
    pub real_noise: bool,
}

impl QuadratureMap {
    pub fn linear(m: CMat) -> Self {
        Self { m, n: None, real_noise: false }
    }

    /// 𝒵 = Z + Z† taken as a real noise.
    pub fn hermitian_part(channels: usize) -> Self {
        Self { m: CMat::identity(channels, channels), n: Some(CMat::identity(channels, channels)), real_noise: true }
    }
}

/// χ_αβ(τ) = Σ_k (n_k+1) g_αk* g_βk e^{-iΩ_k τ} + n_k h_αk* h_βk e^{iΩ_k τ}, η = 0.
pub fn bath_kernel(b: &BathSpectrum, coupling: &CouplingStructure) -> Result<CorrelationKernel> {
    b.validate()?;
    coupling.validate(b.modes.len())?;
    let n = coupling.n_channels();
    let h = coupling.h_or_zero();
    let mut terms = Vec::with_capacity(2 * b.modes.len());
    for (k, mode) in b.modes.iter().enumerate() {
        let gk = coupling.g.column(k);
        terms.push(SpectralTerm {
            freq: mode.omega,
            chi: CMat::from_fn(n, n, |a, bb| gk[a].conj() * gk[bb] * (mode.n_thermal + 1.0)),
            eta: CMat::zeros(n, n),
        });
        if mode.n_thermal > 0.0 && h.column(k).iter().any(|z| z.norm() > 0.0) {
            let hk = h.column(k);
            terms.push(SpectralTerm {
                freq: -mode.omega,
                chi: CMat::from_fn(n, n, |a, bb| hk[a].conj() * hk[bb] * mode.n_thermal),
                eta: CMat::zeros(n, n),
            });
        }
    }
    CorrelationKernel::spectral(n, terms)
}

/// Quadrature kernel and the condition residual sup_grid |χ_bath - χ_realized|.
pub fn quadrature_kernel(
    b: &BathSpectrum,
    coupling: &CouplingStructure,
    q: &QuadratureMap,
    grid: &[f64],
) -> Result<(CorrelationKernel, f64)> {
    b.validate()?;
    coupling.validate(b.modes.len())?;
    let n = coupling.n_channels();
    if q.m.shape() != (n, n) || q.n.as_ref().is_some_and(|nm| nm.shape() != (n, n)) {
        return Err(Error::DimensionMismatch(format!("quadrature map must be {n}x{n}")));
    }
    let g = &coupling.g;
    let h = coupling.h_or_zero();
    let nmap = q.n.clone().unwrap_or_else(|| CMat::zeros(n, n));
    // 𝒵 = M Z + N Z† has creation coefficients C and annihilation coefficients A
    let cc = &q.m * g + &nmap * h.map(|z| z.conj());
    let aa = &q.m * &h + &nmap * g.map(|z| z.conj());

    let mut terms = Vec::with_capacity(2 * b.modes.len());
    for (k, mode) in b.modes.iter().enumerate() {
        let (ck, ak) = (cc.column(k), aa.column(k));
        let nk = mode.n_thermal;
        terms.push(SpectralTerm {
            freq: mode.omega,
            chi: CMat::from_fn(n, n, |a, bb| ck[a].conj() * ck[bb] * (nk + 1.0)),
            eta: CMat::from_fn(n, n, |a, bb| ak[a] * ck[bb] * (nk + 1.0)),
        });
        terms.push(SpectralTerm {
            freq: -mode.omega,
            chi: CMat::from_fn(n, n, |a, bb| ak[a].conj() * ak[bb] * nk),
            eta: CMat::from_fn(n, n, |a, bb| ck[a] * ak[bb] * nk),
        });
    }
    terms.retain(|t| t.chi.iter().chain(t.eta.iter()).any(|z| z.norm() > 0.0));

    if q.real_noise {
        // Re[P e^{-iωτ}] = (P e^{-iωτ} + P̄ e^{iωτ}) / 2, entrywise
        let mut real_terms = Vec::with_capacity(2 * terms.len());
        for t in &terms {
            let half = t.chi.scale(0.5);
            let half_conj = t.chi.map(|z| z.conj() * 0.5);
            real_terms.push(SpectralTerm { freq: t.freq, chi: half.clone(), eta: half });
            real_terms.push(SpectralTerm { freq: -t.freq, chi: half_conj.clone(), eta: half_conj });
        }
        terms = real_terms;
    }
    let realized = CorrelationKernel::spectral(n, terms)?;
    let bath = bath_kernel(b, coupling)?;

    let mut residual: f64 = 0.0;
    for &t in grid {
        for &s in grid {
            let d = bath.chi(t, s) - realized.chi(t, s);
            residual = residual.max(crate::linalg::max_abs(&d));
        }
    }
    Ok((realized, residual))
}
