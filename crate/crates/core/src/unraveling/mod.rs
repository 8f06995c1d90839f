//! Per-realization integration of the linear non-Markovian stochastic
//! Schrödinger equation d|ψ⟩/dt = T(t)|ψ⟩ with
//! T(t) = -iH(t) - iλ Σ_α z_α(t) L_α + F_cl(t), and ensemble averaging of |ψ⟩⟨ψ|.
//!
//! The closure F_cl stands in for the functional derivative δ|ψ(t)⟩/δz_β(s):
//! exact for commuting (dephasing) couplings, zero when the fluctuation operator
//! is Hermitian, and replaced by free propagation otherwise.

mod ensemble;
mod plan;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{hermitian_equality_residual, kernel_transform, CorrelationKernel};
use crate::linalg::{self, c, CMat, CVec};
use crate::noise::{transform_noises, NoiseRealization};
use crate::quadrature;

pub use ensemble::{run_ensemble, EnsembleAccumulator, EnsembleOptions, EnsembleRun};
pub use plan::{ClosurePlan, Trajectory, TrajectoryState};

const COMMUTATOR_TOL: f64 = 1e-10;
const PREFACTOR_TOL: f64 = 1e-12;
const BLOW_UP_NORM: f64 = 1e6;

/// System Hamiltonian, constant or with one rotating drive
/// H(t) = h0 + drive e^{iωt} + drive† e^{-iωt}.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Static(CMat),
    Rotating { h0: CMat, drive: CMat, omega: f64 },
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Static(h) => h.nrows(),
            Hamiltonian::Rotating { h0, .. } => h0.nrows(),
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Hamiltonian::Static(_) => true,
            Hamiltonian::Rotating { drive, omega, .. } => *omega == 0.0 && linalg::max_abs(drive) == 0.0,
        }
    }

    pub fn at(&self, t: f64) -> CMat {
        match self {
            Hamiltonian::Static(h) => h.clone(),
            Hamiltonian::Rotating { h0, drive, omega } => {
                let phase = Complex64::from_polar(1.0, omega * t);
                h0 + drive * phase + drive.adjoint() * phase.conj()
            }
        }
    }

    /// Matrices whose commutators with an operator decide commutation with H(t) at all t.
    fn parts(&self) -> Vec<&CMat> {
        match self {
            Hamiltonian::Static(h) => vec![h],
            Hamiltonian::Rotating { h0, drive, .. } => vec![h0, drive],
        }
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let h0 = match self {
            Hamiltonian::Static(h) => h,
            Hamiltonian::Rotating { h0, drive, omega } => {
                if drive.shape() != (dim, dim) {
                    return Err(Error::DimensionMismatch("drive must match the Hamiltonian dimension".into()));
                }
                if !omega.is_finite() {
                    return Err(Error::NonFinite("drive frequency".into()));
                }
                linalg::ensure_finite(drive, "drive")?;
                h0
            }
        };
        if dim == 0 || !h0.is_square() {
            return Err(Error::DimensionMismatch("Hamiltonian must be square and non-empty".into()));
        }
        linalg::ensure_finite(h0, "Hamiltonian")?;
        let dev = linalg::hermiticity_deviation(h0);
        if dev > 1e-12 {
            return Err(Error::InvalidParameter(format!("Hamiltonian is not Hermitian (deviation {dev:.3e})")));
        }
        Ok(())
    }
}

/// H_S, the coupling operators L_α and the coupling strength λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub h: Hamiltonian,
    pub couplings: Vec<CMat>,
    pub lambda: f64,
}

impl SystemModel {
    pub fn new(h: CMat, couplings: Vec<CMat>, lambda: f64) -> Result<Self> {
        Self::with_hamiltonian(Hamiltonian::Static(h), couplings, lambda)
    }

    pub fn with_hamiltonian(h: Hamiltonian, couplings: Vec<CMat>, lambda: f64) -> Result<Self> {
        let m = Self { h, couplings, lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.h.validate()?;
        let dim = self.dim();
        if self.couplings.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one coupling operator".into()));
        }
        for l in &self.couplings {
            if l.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "coupling operator is {}x{} but the Hamiltonian is {dim}x{dim}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            linalg::ensure_finite(l, "coupling operator")?;
        }
        if !self.lambda.is_finite() {
            return Err(Error::NonFinite("coupling strength".into()));
        }
        Ok(())
    }

    fn check_kernel(&self, k: &CorrelationKernel) -> Result<()> {
        if k.n_channels() != self.couplings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coupling operators for a {}-channel kernel",
                self.couplings.len(),
                k.n_channels()
            )));
        }
        Ok(())
    }
}

/// A_μ = Σ_α L_α U_αμ; H and λ unchanged.
pub fn transform_model(model: &SystemModel, u: &CMat) -> Result<SystemModel> {
    let n = model.couplings.len();
    if u.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("unitary is {}x{} for {n} couplings", u.nrows(), u.ncols())));
    }
    linalg::ensure_unitary(u, 1e-12)?;
    let dim = model.dim();
    let couplings = (0..n)
        .map(|mu| {
            let mut a = CMat::zeros(dim, dim);
            for (alpha, l) in model.couplings.iter().enumerate() {
                a += l * u[(alpha, mu)];
            }
            a
        })
        .collect();
    Ok(SystemModel { h: model.h.clone(), couplings, lambda: model.lambda })
}

/// Rule replacing the functional derivative δ|ψ(t)⟩/δz_β(s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// δψ(t)/δz_β(s) = -iλ L_β ψ(t), exact for a commuting normal family commuting with H.
    ExactDephasing,
    /// Free propagation acting on the current state (time-local, second order).
    #[serde(rename = "tcl2")]
    Tcl2,
    /// Free propagation acting on the stored past states (memory integral).
    ConvolutedFreeProp,
    /// No functional term; valid when Σ_α L_α† χ_αβ = Σ_α L_α η_αβ.
    StochasticHamiltonian,
}

impl Closure {
    pub fn name(&self) -> &'static str {
        match self {
            Closure::ExactDephasing => "exact-dephasing",
            Closure::Tcl2 => "tcl2",
            Closure::ConvolutedFreeProp => "convoluted-free-prop",
            Closure::StochasticHamiltonian => "stochastic-hamiltonian",
        }
    }

    /// Checks the closure's validity conditions over `[0, horizon]`; `dt` is the
    /// integration step (white-regularized memory must be resolved).
    pub fn check_preconditions(&self, model: &SystemModel, k: &CorrelationKernel, horizon: f64, dt: f64) -> Result<()> {
        model.validate()?;
        model.check_kernel(k)?;
        match self {
            Closure::ExactDephasing => {
                let ls = &model.couplings;
                for (a, la) in ls.iter().enumerate() {
                    for h in model.h.parts() {
                        let d = linalg::op_norm(&linalg::commutator(h, la));
                        if d > COMMUTATOR_TOL {
                            return Err(Error::ClosurePrecondition(format!(
                                "exact dephasing needs [H, L_{a}] = 0 (norm {d:.3e})"
                            )));
                        }
                    }
                    for (b, lb) in ls.iter().enumerate() {
                        let d1 = linalg::op_norm(&linalg::commutator(la, lb));
                        let d2 = linalg::op_norm(&linalg::commutator(la, &lb.adjoint()));
                        if d1.max(d2) > COMMUTATOR_TOL {
                            return Err(Error::ClosurePrecondition(format!(
                                "exact dephasing needs commuting normal couplings; L_{a}, L_{b} fail by {:.3e}",
                                d1.max(d2)
                            )));
                        }
                    }
                }
                Ok(())
            }
            Closure::StochasticHamiltonian => {
                let grid = TimeGrid::uniform(0.0, horizon.max(0.0), 15)?;
                let scale = model.couplings.iter().map(linalg::op_norm).fold(0.0, f64::max)
                    * linalg::max_abs(&k.chi(0.0, 0.0)).max(1.0);
                let mut worst: f64 = 0.0;
                for &t in grid.times() {
                    for &s in grid.times() {
                        worst = worst.max(hermitian_equality_residual(k, &model.couplings, t, s)?);
                    }
                }
                if worst > 1e-10 * scale.max(1.0) {
                    return Err(Error::ClosurePrecondition(format!(
                        "stochastic-Hamiltonian closure needs Σ L†χ = Σ Lη; residual {worst:.3e}"
                    )));
                }
                Ok(())
            }
            Closure::Tcl2 | Closure::ConvolutedFreeProp => {
                if let Some(eps) = k.white_epsilon() {
                    if dt > 0.5 * eps {
                        return Err(Error::ClosurePrecondition(format!(
                            "white-regularized memory of width {eps} needs dt <= {}, got {dt}",
                            0.5 * eps
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Uniform RK4 stepping from t = 0; every `stride`-th step is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl Integrator {
    pub fn new(dt: f64, t_end: f64, stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("need dt > 0 and t_end > 0, got dt={dt}, t_end={t_end}")));
        }
        let steps = (t_end / dt).round() as usize;
        if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
            return Err(Error::InvalidParameter(format!("t_end={t_end} is not a whole number of steps dt={dt}")));
        }
        let it = Self { dt, steps, stride: stride.max(1) };
        it.validate()?;
        Ok(it)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.steps == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter("integrator needs dt > 0, steps > 0, stride > 0".into()));
        }
        if !self.steps.is_multiple_of(self.stride) {
            return Err(Error::InvalidParameter(format!(
                "{} steps are not a multiple of the output stride {}",
                self.steps, self.stride
            )));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn output_len(&self) -> usize {
        self.steps / self.stride + 1
    }

    pub fn output_times(&self) -> Vec<f64> {
        (0..self.output_len()).map(|k| (k * self.stride) as f64 * self.dt).collect()
    }

    pub fn output_grid(&self) -> TimeGrid {
        TimeGrid::new(self.output_times()).expect("output times are increasing")
    }

    /// RK4 samples the noise at t_n, t_n + dt/2 and t_n + dt. Non-smooth noises
    /// are drawn on the half-step grid so that every stage sees an exact sample;
    /// smooth noises on the step grid, interpolated at midpoints.
    pub fn noise_grid(&self, k: &CorrelationKernel) -> TimeGrid {
        let points = if k.is_smooth() { self.steps } else { 2 * self.steps };
        let h = self.t_end() / points as f64;
        TimeGrid::new((0..=points).map(|i| i as f64 * h).collect()).expect("uniform grid")
    }
}

/// A named operator O whose raw expectation ⟨ψ|O|ψ⟩ is recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub op: CMat,
}

impl Observable {
    pub fn new(name: &str, op: CMat) -> Self {
        Self { name: name.to_string(), op }
    }
}

/// Everything a trajectory run needs besides its noise path.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: SystemModel,
    pub kernel: CorrelationKernel,
    pub closure: Closure,
    pub integrator: Integrator,
    pub psi0: CVec,
    pub observables: Vec<Observable>,
}

impl Simulation {
    pub fn plan(&self) -> Result<ClosurePlan> {
        ClosurePlan::new(self)
    }
}

/// F_cl(t) evaluated directly at one time by adaptive quadrature, for closures
/// that act on the current state. The convoluted closure depends on the stored
/// history and has no state-independent generator.
pub fn closure_term(model: &SystemModel, k: &CorrelationKernel, closure: Closure, t: f64) -> Result<CMat> {
    closure.check_preconditions(model, k, t, 0.0)?;
    let dim = model.dim();
    let n = k.n_channels();
    let ls = &model.couplings;
    let lam2 = model.lambda * model.lambda;
    match closure {
        Closure::StochasticHamiltonian => Ok(CMat::zeros(dim, dim)),
        Closure::ConvolutedFreeProp => {
            Err(Error::Unsupported("the convoluted closure acts on the stored history, not on ψ(t)".into()))
        }
        Closure::ExactDephasing => {
            let f = |s: f64, out: &mut [Complex64]| {
                let v = k.eval(t, s);
                out[..n * n].copy_from_slice(v.chi.as_slice());
                out[n * n..].copy_from_slice(v.eta.as_slice());
            };
            let ints = quadrature::integrate_vec(&f, 0.0, t, 2 * n * n, PREFACTOR_TOL);
            let x = CMat::from_column_slice(n, n, &ints[..n * n]);
            let y = CMat::from_column_slice(n, n, &ints[n * n..]);
            Ok(plan::dephasing_operator(ls, &x, &y, lam2))
        }
        Closure::Tcl2 => {
            let h = match &model.h {
                Hamiltonian::Static(h) => h.clone(),
                other if other.is_static() => other.at(0.0),
                _ => return Err(Error::Unsupported("direct TCL2 evaluation needs a static Hamiltonian".into())),
            };
            let prop = linalg::HermitianPropagator::new(&h);
            let f = |s: f64, out: &mut [Complex64]| {
                let m = plan::tcl2_integrand(ls, &k.eval(t, s), &prop.at(t - s));
                out.copy_from_slice(m.as_slice());
            };
            let ints = quadrature::integrate_vec(&f, 0.0, t, dim * dim, PREFACTOR_TOL);
            Ok(CMat::from_column_slice(dim, dim, &ints).scale(-lam2))
        }
    }
}

/// T(t) = -iH(t) - iλ Σ z_α L_α + F_cl(t).
pub fn drift_generator(
    model: &SystemModel,
    k: &CorrelationKernel,
    closure: Closure,
    t: f64,
    z: &[Complex64],
) -> Result<CMat> {
    if z.len() != model.couplings.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise values for {} couplings",
            z.len(),
            model.couplings.len()
        )));
    }
    let mut g = closure_term(model, k, closure, t)? - model.h.at(t) * c(0.0, 1.0);
    for (l, &zi) in model.couplings.iter().zip(z) {
        g -= l * (c(0.0, model.lambda) * zi);
    }
    Ok(g)
}

/// Runs one noise realization.
pub fn run_trajectory(sim: &Simulation, nr: &NoiseRealization) -> Result<Trajectory> {
    sim.plan()?.run(nr, 0)
}

/// Sup over the output grid of ‖ψ_orig(t) - ψ_transformed(t)‖ when operators,
/// kernel and noise path are all rotated by the same unitary.
pub fn invariance_check(sim: &Simulation, nr: &NoiseRealization, u: &CMat) -> Result<f64> {
    let transformed =
        Simulation { model: transform_model(&sim.model, u)?, kernel: kernel_transform(&sim.kernel, u)?, ..sim.clone() };
    let r = transform_noises(nr, u)?;
    let a = run_trajectory(sim, nr)?;
    let b = run_trajectory(&transformed, &r)?;
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}
