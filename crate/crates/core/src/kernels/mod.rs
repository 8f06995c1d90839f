//! Two-time noise correlation kernels χ(t,s) = <z*(t) z(s)> and η(t,s) = <z(t) z(s)>.
//!
//! A [`CorrelationKernel`] is an immutable, cheaply clonable description of both
//! matrices for `n` noise channels. Kernels come from analytic families
//! (exponential/OU, regularized white noise, bosonic mode sums), from a tabulated
//! grid, or from combinators (block-diagonal stacking, unitary change of noise
//! base, forcing η to equal χ).

mod bath;
mod block;
mod grid_file;
mod spec;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};

pub use bath::{bath_kernel, quadrature_kernel, BathMode, BathSpectrum, CouplingStructure, QuadratureMap};
pub use block::{
    build_block_covariance, check_kernel_positivity, check_positivity, KernelGrid, PositivityReport,
    DEFAULT_POSITIVITY_TOL,
};
pub use grid_file::{read_grid_kernel_csv, write_grid_kernel_csv};
pub use spec::{BathModeSpec, CouplingSpec, EtaMode, GridTimes, KernelSpec};

/// Ornstein-Uhlenbeck parameters: dz = -(γ + iΩ) z dt + ξ dt with
/// <ξ*ξ> = D δ and <ξ ξ> = D′ δ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OUParams {
    pub gamma: f64,
    pub omega: f64,
    pub d: f64,
    pub d_prime: f64,
}

impl OUParams {
    pub fn new(gamma: f64, omega: f64, d: f64, d_prime: f64) -> Result<Self> {
        let p = Self { gamma, omega, d, d_prime };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("OU relaxation rate must be > 0, got {}", self.gamma)));
        }
        if !self.omega.is_finite() || !self.d.is_finite() || !self.d_prime.is_finite() {
            return Err(Error::InvalidParameter("OU parameters must be finite".into()));
        }
        if self.d < 0.0 {
            return Err(Error::InvalidParameter(format!("white-noise intensity D must be >= 0, got {}", self.d)));
        }
        if self.d_prime.abs() > self.d {
            return Err(Error::InvalidParameter(format!(
                "|D'| = {} exceeds D = {}: kernel cannot be realized",
                self.d_prime.abs(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.d / (2.0 * self.gamma)
    }

    /// <z*(t) z(s)> at lag tau = t - s >= 0 prefactor, and <z z> at lag 0.
    fn lag_zero(&self) -> (Complex64, Complex64) {
        let rate = c(self.gamma, self.omega);
        (c(self.stationary_variance(), 0.0), c(self.d_prime, 0.0) / (rate * 2.0))
    }
}

/// How the regularized white kernel is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhiteConvention {
    /// (1/2ε) e^{-|t-s|/ε}: unit weight over the whole line, one half on [0, t].
    #[default]
    Symmetric,
    /// (1/ε) e^{-|t-s|/ε}: unit weight on the causal half-line [0, t], as the
    /// delta in the Markov master equation is counted.
    OneSided,
}

/// White correlated noises χ = δ(t-s) δ_αβ, η = δ(t-s) c_αβ, regularized by an
/// exponential of width `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseSpec {
    pub c: CMat,
    pub epsilon: f64,
    pub convention: WhiteConvention,
}

impl WhiteNoiseSpec {
    pub fn new(c: CMat, epsilon: f64) -> Self {
        Self { c, epsilon, convention: WhiteConvention::Symmetric }
    }

    pub fn with_convention(mut self, convention: WhiteConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn amplitude(&self) -> f64 {
        match self.convention {
            WhiteConvention::Symmetric => 0.5 / self.epsilon,
            WhiteConvention::OneSided => 1.0 / self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptor {
    Exponential,
    WhiteApprox,
    BathSpectrum,
    CustomGrid,
    Composite,
}

/// One term of a mode sum: contributes `chi e^{-i freq (t-s)}` to χ and
/// `eta e^{-i freq (t-s)}` to η.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTerm {
    pub freq: f64,
    pub chi: CMat,
    pub eta: CMat,
}

/// Tabulated kernel values on a time grid, bilinearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernelData {
    pub times: Vec<f64>,
    /// Row-major over (i, j): `chi[i * N + j]` is the n×n matrix χ(t_i, t_j).
    pub chi: Vec<CMat>,
    pub eta: Vec<CMat>,
}

/// Exponential-in-lag kernels that an exact first-order recursion can sample:
/// χ(t,s) = P e^{-(γ - iΩ)(t-s)}, η(t,s) = C e^{-(γ + iΩ)(t-s)} for t >= s.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovForm {
    pub gamma: f64,
    pub omega: f64,
    pub p: CMat,
    pub c: CMat,
}

/// One term of a kernel written as a sum of exponentials in the lag: for t >= s,
/// χ(t,s) = Σ_k chi_k e^{-μ_k (t-s)} and η(t,s) = Σ_k eta_k e^{-μ_k (t-s)}.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialTerm {
    pub mu: Complex64,
    pub chi: CMat,
    pub eta: CMat,
}

#[derive(Clone)]
pub struct Envelope(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Envelope {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Envelope(..)")
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Exponential(OUParams),
    White { amplitude: f64, epsilon: f64, c: CMat },
    Spectral(Vec<SpectralTerm>),
    Grid(GridKernelData),
    BlockDiagonal(Vec<CorrelationKernel>),
    Transformed { base: CorrelationKernel, u: CMat },
    EtaLocked(CorrelationKernel),
}

/// χ and η evaluated at one (t, s) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelValue {
    pub chi: CMat,
    pub eta: CMat,
}

#[derive(Debug, Clone)]
pub struct CorrelationKernel {
    n: usize,
    descriptor: Descriptor,
    repr: Arc<Repr>,
    envelope: Option<Envelope>,
}

/// Single-channel exponential correlations generated by an OU process.
pub fn exponential_kernel(p: OUParams) -> Result<CorrelationKernel> {
    p.validate()?;
    Ok(CorrelationKernel::from_repr(1, Descriptor::Exponential, Repr::Exponential(p)))
}

/// Regularized white correlations.
pub fn white_kernel(w: &WhiteNoiseSpec) -> Result<CorrelationKernel> {
    if !(w.epsilon > 0.0) || !w.epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("white-noise regulator epsilon must be > 0, got {}", w.epsilon)));
    }
    if !w.c.is_square() || w.c.nrows() == 0 {
        return Err(Error::DimensionMismatch("white-noise coefficient matrix c must be square and non-empty".into()));
    }
    linalg::ensure_finite(&w.c, "white-noise coefficients")?;
    let asym = linalg::max_abs(&(&w.c - w.c.transpose()));
    if asym > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "c must be symmetric (eta(t,s) = eta(s,t)^T), asymmetry {asym:.3e}"
        )));
    }
    Ok(CorrelationKernel::from_repr(
        w.c.nrows(),
        Descriptor::WhiteApprox,
        Repr::White { amplitude: w.amplitude(), epsilon: w.epsilon, c: w.c.clone() },
    ))
}

/// χ′ = Uᵀ χ U*, η′ = U† η U* (new noises r = U† z).
pub fn kernel_transform(k: &CorrelationKernel, u: &CMat) -> Result<CorrelationKernel> {
    if u.nrows() != k.n_channels() || u.ncols() != k.n_channels() {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {}x{} but kernel has {} channels",
            u.nrows(),
            u.ncols(),
            k.n_channels()
        )));
    }
    linalg::ensure_unitary(u, 1e-12)?;
    Ok(CorrelationKernel::from_repr(k.n, Descriptor::Composite, Repr::Transformed { base: k.clone(), u: u.clone() }))
}

/// Operator norm of Σ_α L_α† χ_αβ(t,s) - L_α η_αβ(t,s), maximized over β.
pub fn hermitian_equality_residual(k: &CorrelationKernel, ops: &[CMat], t: f64, s: f64) -> Result<f64> {
    if ops.len() != k.n_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} coupling operators for a {}-channel kernel",
            ops.len(),
            k.n_channels()
        )));
    }
    let dim = ops[0].nrows();
    if ops.iter().any(|l| l.nrows() != dim || l.ncols() != dim) {
        return Err(Error::DimensionMismatch("coupling operators must share one square dimension".into()));
    }
    let v = k.eval(t, s);
    let mut worst: f64 = 0.0;
    for beta in 0..k.n_channels() {
        let mut acc = CMat::zeros(dim, dim);
        for (alpha, l) in ops.iter().enumerate() {
            acc += l.adjoint() * v.chi[(alpha, beta)] - l * v.eta[(alpha, beta)];
        }
        worst = worst.max(linalg::op_norm(&acc));
    }
    Ok(worst)
}

impl CorrelationKernel {
    fn from_repr(n: usize, descriptor: Descriptor, repr: Repr) -> Self {
        Self { n, descriptor, repr: Arc::new(repr), envelope: None }
    }

    /// A general mode-sum kernel; every term matrix must be n×n.
    pub fn spectral(n: usize, terms: Vec<SpectralTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("kernel needs at least one channel".into()));
        }
        for t in &terms {
            if t.chi.shape() != (n, n) || t.eta.shape() != (n, n) {
                return Err(Error::DimensionMismatch("spectral term matrices must be n x n".into()));
            }
            if !t.freq.is_finite() {
                return Err(Error::NonFinite("spectral term frequency".into()));
            }
        }
        Ok(Self::from_repr(n, Descriptor::BathSpectrum, Repr::Spectral(terms)))
    }

    pub fn from_grid(n: usize, data: GridKernelData) -> Result<Self> {
        let nt = data.times.len();
        if nt == 0 {
            return Err(Error::InvalidGrid("grid kernel needs at least one time point".into()));
        }
        if data.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid kernel times must be strictly increasing".into()));
        }
        if data.chi.len() != nt * nt || data.eta.len() != nt * nt {
            return Err(Error::DimensionMismatch("grid kernel tables must hold N*N entries".into()));
        }
        if data.chi.iter().chain(data.eta.iter()).any(|m| m.shape() != (n, n)) {
            return Err(Error::DimensionMismatch("grid kernel entries must be n x n".into()));
        }
        Ok(Self::from_repr(n, Descriptor::CustomGrid, Repr::Grid(data)))
    }

    /// Independent channel groups stacked block-diagonally.
    pub fn block_diagonal(parts: Vec<CorrelationKernel>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidParameter("block-diagonal kernel needs at least one part".into()));
        }
        let n = parts.iter().map(|p| p.n).sum();
        Ok(Self::from_repr(n, Descriptor::Composite, Repr::BlockDiagonal(parts)))
    }

    /// Replace η by χ, the "η = χ" family whose admissibility the positivity
    /// check decides (it is only admissible for real χ).
    pub fn eta_locked_to_chi(&self) -> Self {
        Self::from_repr(self.n, self.descriptor, Repr::EtaLocked(self.clone()))
    }

    /// Multiplicative envelope χ(t,s) -> φ(t)φ(s)χ(t,s), same for η.
    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn descriptor(&self) -> Descriptor {
        self.descriptor
    }

    pub fn chi(&self, t: f64, s: f64) -> CMat {
        self.eval(t, s).chi
    }

    pub fn eta(&self, t: f64, s: f64) -> CMat {
        self.eval(t, s).eta
    }

    pub fn eval(&self, t: f64, s: f64) -> KernelValue {
        let mut v = self.eval_raw(t, s);
        if let Some(env) = &self.envelope {
            let f = env.at(t) * env.at(s);
            v.chi.scale_mut(f);
            v.eta.scale_mut(f);
        }
        v
    }

    fn eval_raw(&self, t: f64, s: f64) -> KernelValue {
        match &*self.repr {
            Repr::Exponential(p) => {
                let tau = t - s;
                let (chi0, eta0) = p.lag_zero();
                let a = tau.abs();
                let chi_fwd = chi0 * (c(-p.gamma, p.omega) * a).exp();
                let chi = if tau >= 0.0 { chi_fwd } else { chi_fwd.conj() };
                let eta = eta0 * (c(-p.gamma, -p.omega) * a).exp();
                KernelValue { chi: CMat::from_element(1, 1, chi), eta: CMat::from_element(1, 1, eta) }
            }
            Repr::White { amplitude, epsilon, c: coeff } => {
                let w = amplitude * (-(t - s).abs() / epsilon).exp();
                KernelValue { chi: linalg::identity(self.n).scale(w), eta: coeff.scale(w) }
            }
            Repr::Spectral(terms) => {
                let tau = t - s;
                let mut chi = CMat::zeros(self.n, self.n);
                let mut eta = CMat::zeros(self.n, self.n);
                for term in terms {
                    let phase = Complex64::from_polar(1.0, -term.freq * tau);
                    chi += &term.chi * phase;
                    eta += &term.eta * phase;
                }
                KernelValue { chi, eta }
            }
            Repr::Grid(data) => grid_interpolate(self.n, data, t, s),
            Repr::BlockDiagonal(parts) => {
                let mut chi = CMat::zeros(self.n, self.n);
                let mut eta = CMat::zeros(self.n, self.n);
                let mut off = 0;
                for p in parts {
                    let v = p.eval(t, s);
                    chi.view_mut((off, off), (p.n, p.n)).copy_from(&v.chi);
                    eta.view_mut((off, off), (p.n, p.n)).copy_from(&v.eta);
                    off += p.n;
                }
                KernelValue { chi, eta }
            }
            Repr::Transformed { base, u } => {
                let v = base.eval(t, s);
                let u_conj = u.map(|z| z.conj());
                KernelValue { chi: u.transpose() * v.chi * &u_conj, eta: u.adjoint() * v.eta * &u_conj }
            }
            Repr::EtaLocked(base) => {
                let chi = base.chi(t, s);
                KernelValue { eta: chi.clone(), chi }
            }
        }
    }

    /// True when χ and η depend on t - s only.
    pub fn is_stationary(&self) -> bool {
        if self.envelope.is_some() {
            return false;
        }
        match &*self.repr {
            Repr::Grid(_) => false,
            Repr::BlockDiagonal(parts) => parts.iter().all(|p| p.is_stationary()),
            Repr::Transformed { base, .. } | Repr::EtaLocked(base) => base.is_stationary(),
            _ => true,
        }
    }

    /// Whether sample paths are mean-square differentiable, which decides the
    /// interpolation used between grid samples.
    pub fn is_smooth(&self) -> bool {
        match &*self.repr {
            Repr::Exponential(_) | Repr::White { .. } => false,
            Repr::Spectral(_) | Repr::Grid(_) => true,
            Repr::BlockDiagonal(parts) => parts.iter().all(|p| p.is_smooth()),
            Repr::Transformed { base, .. } | Repr::EtaLocked(base) => base.is_smooth(),
        }
    }

    /// Whether the kernel is known in closed form everywhere (adaptive quadrature
    /// can be used) rather than only on grid points.
    pub fn is_analytic(&self) -> bool {
        match &*self.repr {
            Repr::Grid(_) => false,
            Repr::BlockDiagonal(parts) => parts.iter().all(|p| p.is_analytic()),
            Repr::Transformed { base, .. } | Repr::EtaLocked(base) => base.is_analytic(),
            _ => true,
        }
    }

    /// Smallest regularization width among white-regularized parts.
    pub fn white_epsilon(&self) -> Option<f64> {
        match &*self.repr {
            Repr::White { epsilon, .. } => Some(*epsilon),
            Repr::BlockDiagonal(parts) => parts.iter().filter_map(|p| p.white_epsilon()).reduce(f64::min),
            Repr::Transformed { base, .. } | Repr::EtaLocked(base) => base.white_epsilon(),
            _ => None,
        }
    }

    /// Single-exponential structure, if any, for exact recursive sampling.
    pub fn markov_form(&self) -> Option<MarkovForm> {
        if self.envelope.is_some() {
            return None;
        }
        match &*self.repr {
            Repr::Exponential(p) => {
                let (chi0, eta0) = p.lag_zero();
                Some(MarkovForm {
                    gamma: p.gamma,
                    omega: p.omega,
                    p: CMat::from_element(1, 1, chi0),
                    c: CMat::from_element(1, 1, eta0),
                })
            }
            Repr::White { amplitude, epsilon, c: coeff } => Some(MarkovForm {
                gamma: 1.0 / epsilon,
                omega: 0.0,
                p: linalg::identity(self.n).scale(*amplitude),
                c: coeff.scale(*amplitude),
            }),
            Repr::BlockDiagonal(parts) => {
                let forms: Vec<MarkovForm> = parts.iter().map(|p| p.markov_form()).collect::<Option<_>>()?;
                let (g0, o0) = (forms[0].gamma, forms[0].omega);
                if forms.iter().any(|f| f.gamma != g0 || f.omega != o0) {
                    return None;
                }
                let mut p = CMat::zeros(self.n, self.n);
                let mut cm = CMat::zeros(self.n, self.n);
                let mut off = 0;
                for f in &forms {
                    let k = f.p.nrows();
                    p.view_mut((off, off), (k, k)).copy_from(&f.p);
                    cm.view_mut((off, off), (k, k)).copy_from(&f.c);
                    off += k;
                }
                Some(MarkovForm { gamma: g0, omega: o0, p, c: cm })
            }
            Repr::Transformed { base, u } => {
                let f = base.markov_form()?;
                let u_conj = u.map(|z| z.conj());
                Some(MarkovForm {
                    gamma: f.gamma,
                    omega: f.omega,
                    p: u.transpose() * f.p * &u_conj,
                    c: u.adjoint() * f.c * &u_conj,
                })
            }
            // eta = chi has a different lag dependence than the recursion produces
            Repr::EtaLocked(base) => {
                let f = base.markov_form()?;
                if f.omega == 0.0 && linalg::max_abs(&f.p.map(|z| c(0.0, z.im))) == 0.0 {
                    Some(MarkovForm { c: f.p.clone(), ..f })
                } else {
                    None
                }
            }
            Repr::Spectral(_) | Repr::Grid(_) => None,
        }
    }

    /// The causal (t >= s) part of the kernel as a finite exponential sum, when it
    /// has one. Memory integrals over such kernels can be carried recursively.
    pub fn exponential_terms(&self) -> Option<Vec<ExponentialTerm>> {
        if self.envelope.is_some() {
            return None;
        }
        let n = self.n;
        match &*self.repr {
            Repr::Exponential(p) => {
                let (chi0, eta0) = p.lag_zero();
                let one = |z: Complex64| CMat::from_element(1, 1, z);
                let zero = CMat::zeros(1, 1);
                Some(vec![
                    ExponentialTerm { mu: c(p.gamma, -p.omega), chi: one(chi0), eta: zero.clone() },
                    ExponentialTerm { mu: c(p.gamma, p.omega), chi: zero, eta: one(eta0) },
                ])
            }
            Repr::White { amplitude, epsilon, c: coeff } => Some(vec![ExponentialTerm {
                mu: c(1.0 / epsilon, 0.0),
                chi: linalg::identity(n).scale(*amplitude),
                eta: coeff.scale(*amplitude),
            }]),
            Repr::Spectral(terms) => Some(
                terms
                    .iter()
                    .map(|t| ExponentialTerm { mu: c(0.0, t.freq), chi: t.chi.clone(), eta: t.eta.clone() })
                    .collect(),
            ),
            Repr::Grid(_) => None,
            Repr::BlockDiagonal(parts) => {
                let mut out = Vec::new();
                let mut off = 0;
                for p in parts {
                    for t in p.exponential_terms()? {
                        let mut chi = CMat::zeros(n, n);
                        let mut eta = CMat::zeros(n, n);
                        chi.view_mut((off, off), (p.n, p.n)).copy_from(&t.chi);
                        eta.view_mut((off, off), (p.n, p.n)).copy_from(&t.eta);
                        out.push(ExponentialTerm { mu: t.mu, chi, eta });
                    }
                    off += p.n;
                }
                Some(out)
            }
            Repr::Transformed { base, u } => {
                let u_conj = u.map(|z| z.conj());
                Some(
                    base.exponential_terms()?
                        .into_iter()
                        .map(|t| ExponentialTerm {
                            mu: t.mu,
                            chi: u.transpose() * t.chi * &u_conj,
                            eta: u.adjoint() * t.eta * &u_conj,
                        })
                        .collect(),
                )
            }
            Repr::EtaLocked(base) => Some(
                base.exponential_terms()?
                    .into_iter()
                    .map(|t| ExponentialTerm { mu: t.mu, eta: t.chi.clone(), chi: t.chi })
                    .collect(),
            ),
        }
    }

    /// Largest deviation from the symmetry invariants χ(s,t) = χ(t,s)† and
    /// η(s,t) = η(t,s)ᵀ over the given time points.
    pub fn symmetry_deviation(&self, times: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &t in times {
            for &s in times {
                let a = self.eval(t, s);
                let b = self.eval(s, t);
                worst = worst.max(linalg::max_abs(&(&a.chi - b.chi.adjoint())));
                worst = worst.max(linalg::max_abs(&(&a.eta - b.eta.transpose())));
            }
        }
        worst
    }
}

fn grid_interpolate(n: usize, data: &GridKernelData, t: f64, s: f64) -> KernelValue {
    let nt = data.times.len();
    let locate = |x: f64| -> (usize, f64) {
        if nt == 1 || x <= data.times[0] {
            return (0, 0.0);
        }
        if x >= data.times[nt - 1] {
            return (nt - 2, 1.0);
        }
        let k = data.times.partition_point(|&p| p <= x) - 1;
        let k = k.min(nt - 2);
        (k, (x - data.times[k]) / (data.times[k + 1] - data.times[k]))
    };
    if nt == 1 {
        return KernelValue { chi: data.chi[0].clone(), eta: data.eta[0].clone() };
    }
    let (i, a) = locate(t);
    let (j, b) = locate(s);
    let mut chi = CMat::zeros(n, n);
    let mut eta = CMat::zeros(n, n);
    for (di, wi) in [(0, 1.0 - a), (1, a)] {
        for (dj, wj) in [(0, 1.0 - b), (1, b)] {
            let w = wi * wj;
            if w == 0.0 {
                continue;
            }
            let idx = (i + di) * nt + (j + dj);
            chi += data.chi[idx].scale(w);
            eta += data.eta[idx].scale(w);
        }
    }
    KernelValue { chi, eta }
}

#[cfg(test)]
mod tests;
