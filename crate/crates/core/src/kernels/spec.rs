//! Declarative kernel descriptions as they appear in scenario configuration files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    bath_kernel, exponential_kernel, quadrature_kernel, read_grid_kernel_csv, white_kernel, BathMode, BathSpectrum,
    CorrelationKernel, CouplingStructure, OUParams, QuadratureMap, WhiteConvention, WhiteNoiseSpec,
};
use crate::config::{ComplexValue, MatrixSpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::CMat;

/// Which η the kernel carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaMode {
    /// η as produced by the kernel family.
    #[default]
    AsGiven,
    /// η replaced by χ.
    EqualChi,
}

impl EtaMode {
    fn is_default(&self) -> bool {
        *self == EtaMode::AsGiven
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathModeSpec {
    pub g: ComplexValue,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub n_thermal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Creation-part coefficients, one row per channel, one column per mode.
    pub g: Vec<Vec<ComplexValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<ComplexValue>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridTimes {
    Uniform { start: f64, end: f64, steps: usize },
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Exponential {
        gamma: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        omega: f64,
        d: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        d_prime: f64,
        #[serde(default, skip_serializing_if = "EtaMode::is_default")]
        eta: EtaMode,
    },
    White {
        epsilon: f64,
        /// η coefficient matrix; zero when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<MatrixSpec>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        channels: usize,
        #[serde(default, skip_serializing_if = "is_symmetric_convention")]
        convention: WhiteConvention,
        #[serde(default, skip_serializing_if = "EtaMode::is_default")]
        eta: EtaMode,
    },
    Bath {
        modes: Vec<BathModeSpec>,
        #[serde(default, skip_serializing_if = "is_zero")]
        carrier: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<CouplingSpec>,
        #[serde(default, skip_serializing_if = "EtaMode::is_default")]
        eta: EtaMode,
    },
    QuadratureBath {
        modes: Vec<BathModeSpec>,
        #[serde(default, skip_serializing_if = "is_zero")]
        carrier: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<CouplingSpec>,
        /// M in 𝒵 = M Z + N Z†; identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "is_false")]
        real_noise: bool,
        /// Permit a real quadrature noise on a spectrum without ±Ω pairing.
        #[serde(default, skip_serializing_if = "is_false")]
        allow_asymmetric: bool,
    },
    Grid {
        /// CSV file, relative paths resolved against the config file's directory.
        path: PathBuf,
        times: GridTimes,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        channels: usize,
    },
    BlockDiagonal {
        parts: Vec<KernelSpec>,
    },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

fn is_symmetric_convention(c: &WhiteConvention) -> bool {
    *c == WhiteConvention::Symmetric
}

impl GridTimes {
    pub fn to_vec(&self) -> Result<Vec<f64>> {
        match self {
            GridTimes::List(v) => Ok(v.clone()),
            GridTimes::Uniform { start, end, steps } => Ok(TimeGrid::uniform(*start, *end, *steps)?.times().to_vec()),
        }
    }
}

fn spectrum(modes: &[BathModeSpec], carrier: f64) -> BathSpectrum {
    BathSpectrum {
        modes: modes.iter().map(|m| BathMode { g: m.g.value(), omega: m.omega, n_thermal: m.n_thermal }).collect(),
        carrier,
    }
}

fn coefficient_matrix(rows: &[Vec<ComplexValue>], what: &str) -> Result<CMat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular array")));
    }
    Ok(CMat::from_fn(nr, nc, |i, j| rows[i][j].value()))
}

fn coupling(spec: Option<&CouplingSpec>, b: &BathSpectrum) -> Result<CouplingStructure> {
    match spec {
        None => Ok(CouplingStructure::single_channel(b)),
        Some(s) => Ok(CouplingStructure {
            g: coefficient_matrix(&s.g, "coupling.g")?,
            h: s.h.as_ref().map(|h| coefficient_matrix(h, "coupling.h")).transpose()?,
        }),
    }
}

fn apply_eta(k: CorrelationKernel, eta: EtaMode) -> CorrelationKernel {
    match eta {
        EtaMode::AsGiven => k,
        EtaMode::EqualChi => k.eta_locked_to_chi(),
    }
}

impl KernelSpec {
    /// Builds the kernel; `base_dir` resolves relative grid-file paths.
    pub fn build(&self, base_dir: &Path) -> Result<CorrelationKernel> {
        match self {
            KernelSpec::Exponential { gamma, omega, d, d_prime, eta } => {
                Ok(apply_eta(exponential_kernel(OUParams::new(*gamma, *omega, *d, *d_prime)?)?, *eta))
            }
            KernelSpec::White { epsilon, c, channels, convention, eta } => {
                let cm = match c {
                    Some(m) => m.to_matrix()?,
                    None => CMat::zeros(*channels, *channels),
                };
                if cm.nrows() != *channels {
                    return Err(Error::DimensionMismatch(format!(
                        "white-noise c is {}x{} but channels = {channels}",
                        cm.nrows(),
                        cm.ncols()
                    )));
                }
                let w = WhiteNoiseSpec::new(cm, *epsilon).with_convention(*convention);
                Ok(apply_eta(white_kernel(&w)?, *eta))
            }
            KernelSpec::Bath { modes, carrier, coupling: cs, eta } => {
                let b = spectrum(modes, *carrier);
                let structure = coupling(cs.as_ref(), &b)?;
                Ok(apply_eta(bath_kernel(&b, &structure)?, *eta))
            }
            KernelSpec::QuadratureBath { .. } => Ok(self.quadrature(&[])?.0),
            KernelSpec::Grid { path, times, channels } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let file = File::open(&full)
                    .map_err(|e| Error::Config(format!("cannot open grid kernel {}: {e}", full.display())))?;
                read_grid_kernel_csv(BufReader::new(file), &times.to_vec()?, *channels)
            }
            KernelSpec::BlockDiagonal { parts } => {
                let built = parts.iter().map(|p| p.build(base_dir)).collect::<Result<Vec<_>>>()?;
                CorrelationKernel::block_diagonal(built)
            }
        }
    }

    /// For quadrature kernels, the kernel and its condition residual over `grid`.
    pub fn quadrature(&self, grid: &[f64]) -> Result<(CorrelationKernel, f64)> {
        let KernelSpec::QuadratureBath { modes, carrier, coupling: cs, m, n, real_noise, allow_asymmetric } = self
        else {
            return Err(Error::Unsupported("condition residual is defined for quadrature-bath kernels only".into()));
        };
        let b = spectrum(modes, *carrier);
        if *real_noise && !*allow_asymmetric && !b.is_symmetric(1e-12) {
            return Err(Error::InvalidParameter(
                "a real quadrature noise needs a symmetric spectrum (modes paired as Ω, -Ω with conjugate couplings)"
                    .into(),
            ));
        }
        let structure = coupling(cs.as_ref(), &b)?;
        let channels = structure.n_channels();
        let q = QuadratureMap {
            m: m.as_ref().map(|x| x.to_matrix()).transpose()?.unwrap_or_else(|| CMat::identity(channels, channels)),
            n: n.as_ref().map(|x| x.to_matrix()).transpose()?,
            real_noise: *real_noise,
        };
        quadrature_kernel(&b, &structure, &q, grid)
    }

    pub fn n_channels(&self) -> usize {
        match self {
            KernelSpec::Exponential { .. } => 1,
            KernelSpec::White { channels, .. } | KernelSpec::Grid { channels, .. } => *channels,
            KernelSpec::Bath { coupling, .. } | KernelSpec::QuadratureBath { coupling, .. } => {
                coupling.as_ref().map_or(1, |c| c.g.len())
            }
            KernelSpec::BlockDiagonal { parts } => parts.iter().map(|p| p.n_channels()).sum(),
        }
    }
}
