//! Deterministic precomputation shared by all trajectories of one simulation,
//! and the RK4 loop for a single realization.
//!
//! Everything is tabulated on the half-step grid τ_m = m·dt/2, which contains
//! every RK4 stage time.

use num_complex::Complex64;

use super::{Closure, Hamiltonian, Integrator, Observable, Simulation, BLOW_UP_NORM, PREFACTOR_TOL};
use crate::error::{Error, Result};
use crate::kernels::{CorrelationKernel, ExponentialTerm, KernelValue};
use crate::linalg::{self, c, CMat, CVec, ONE, ZERO};
use crate::noise::NoiseRealization;
use crate::quadrature;

/// Two-time kernel tables above this many complex entries are evaluated on demand.
const TABLE_LIMIT: usize = 1 << 22;

/// -λ² Σ_αβ (L_α† X_αβ - L_α Y_αβ) L_β.
pub(crate) fn dephasing_operator(ls: &[CMat], x: &CMat, y: &CMat, lam2: f64) -> CMat {
    let dim = ls[0].nrows();
    let mut f = CMat::zeros(dim, dim);
    for (a, la) in ls.iter().enumerate() {
        let la_adj = la.adjoint();
        for (b, lb) in ls.iter().enumerate() {
            f += (&la_adj * x[(a, b)] - la * y[(a, b)]) * lb;
        }
    }
    f.scale(-lam2)
}

/// Σ_αβ (L_α† χ_αβ - L_α η_αβ) U L_β U†.
pub(crate) fn tcl2_integrand(ls: &[CMat], v: &KernelValue, u: &CMat) -> CMat {
    let dim = ls[0].nrows();
    let u_adj = u.adjoint();
    let mut f = CMat::zeros(dim, dim);
    for (b, lb) in ls.iter().enumerate() {
        let mut left = CMat::zeros(dim, dim);
        for (a, la) in ls.iter().enumerate() {
            left += la.adjoint() * v.chi[(a, b)] - la * v.eta[(a, b)];
        }
        f += left * (u * lb * &u_adj);
    }
    f
}

/// U(τ_m, 0) for m = 0..count.
fn free_propagators(h: &Hamiltonian, half_dt: f64, count: usize) -> Vec<CMat> {
    if h.is_static() {
        let prop = linalg::HermitianPropagator::new(&h.at(0.0));
        return (0..count).map(|m| prop.at(m as f64 * half_dt)).collect();
    }
    // dU/dt = -iH(t)U by RK4 with four substeps per half step
    const SUB: usize = 4;
    let hs = half_dt / SUB as f64;
    let gen = |t: f64| h.at(t) * c(0.0, -1.0);
    let mut out = Vec::with_capacity(count);
    let mut u = linalg::identity(h.dim());
    out.push(u.clone());
    for m in 1..count {
        for k in 0..SUB {
            let t = (m - 1) as f64 * half_dt + k as f64 * hs;
            let k1 = gen(t) * &u;
            let k2 = gen(t + 0.5 * hs) * (&u + &k1 * c(0.5 * hs, 0.0));
            let k3 = gen(t + 0.5 * hs) * (&u + &k2 * c(0.5 * hs, 0.0));
            let k4 = gen(t + hs) * (&u + &k3 * c(hs, 0.0));
            u += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(hs / 6.0, 0.0);
        }
        out.push(u.clone());
    }
    out
}

/// Kernel values χ(τ_m, t_j), η(τ_m, t_j) needed by the memory integral.
#[derive(Debug, Clone)]
enum Memory {
    /// Recursively carried exponential sums; `decay[k]` = (e^{-μ_k dt/2}, e^{-μ_k dt}).
    Exponential {
        terms: Vec<ExponentialTerm>,
        decay: Vec<(Complex64, Complex64)>,
    },
    /// Full (m, j) table, row length S + 1.
    Table {
        values: Vec<KernelValue>,
        width: usize,
    },
    Direct(CorrelationKernel),
}

impl Memory {
    fn value(&self, m: usize, j: usize, half_dt: f64) -> KernelValue {
        match self {
            Memory::Table { values, width } => values[m * width + j].clone(),
            Memory::Direct(k) => k.eval(m as f64 * half_dt, 2.0 * j as f64 * half_dt),
            Memory::Exponential { .. } => unreachable!("exponential memory is carried recursively"),
        }
    }
}

#[derive(Debug, Clone)]
struct ConvPlan {
    u0: Vec<CMat>,
    u0_adj: Vec<CMat>,
    /// -λ² Σ_αβ (L_α† χ_αβ(τ,τ) - L_α η_αβ(τ,τ)) L_β: weight of the current stage state.
    local: Vec<CMat>,
    memory: Memory,
}

/// State of one realization: ψ(t) plus the memory the convoluted closure needs.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub psi: CVec,
    pub t: f64,
    step: usize,
    /// v_β(t_j) = U(t_j,0)† L_β ψ(t_j), indexed j·n + β (table-based memory).
    history: Vec<CVec>,
    /// v_β at the current step.
    current: Vec<CVec>,
    /// J_kβ(t_n) = trapezoid of ∫_0^{t_n} e^{-μ_k(t_n - s)} v_β(s) ds, indexed k·n + β.
    carried: Vec<CVec>,
}

/// Recorded output of one realization on the output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVec>,
    /// ⟨ψ|ψ⟩
    pub norms: Vec<f64>,
    /// `observables[k][i]` = ⟨ψ(t_i)|O_k|ψ(t_i)⟩.
    pub observables: Vec<Vec<Complex64>>,
}

/// Tabulated generators for one simulation, shared read-only by its trajectories.
#[derive(Debug, Clone)]
pub struct ClosurePlan {
    closure: Closure,
    integrator: Integrator,
    dim: usize,
    n: usize,
    half_dt: f64,
    lam2: f64,
    couplings: Vec<CMat>,
    couplings_adj: Vec<CMat>,
    /// -iλ L_α
    noise_ops: Vec<CMat>,
    /// -iH(τ_m) + F_cl(τ_m)
    base: Vec<CMat>,
    closure_ops: Vec<CMat>,
    conv: Option<ConvPlan>,
    psi0: CVec,
    observables: Vec<Observable>,
}

impl ClosurePlan {
    pub fn new(sim: &Simulation) -> Result<Self> {
        let Simulation { model, kernel: k, closure, integrator, psi0, observables } = sim;
        integrator.validate()?;
        closure.check_preconditions(model, k, integrator.t_end(), integrator.dt)?;
        let dim = model.dim();
        if psi0.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} entries for dimension {dim}",
                psi0.len()
            )));
        }
        if psi0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        for o in observables {
            if o.op.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!("observable '{}' has the wrong shape", o.name)));
            }
        }
        let n = k.n_channels();
        let ls = model.couplings.clone();
        let lam2 = model.lambda * model.lambda;
        let half_dt = 0.5 * integrator.dt;
        let count = 2 * integrator.steps + 1;
        let times: Vec<f64> = (0..count).map(|m| m as f64 * half_dt).collect();
        let stationary_lag = k.is_stationary() && k.is_analytic();

        let closure_ops: Vec<CMat> = match closure {
            Closure::StochasticHamiltonian | Closure::ConvolutedFreeProp => vec![CMat::zeros(dim, dim); count],
            Closure::ExactDephasing => {
                let xy = dephasing_integrals(k, &times, stationary_lag);
                xy.iter().map(|(x, y)| dephasing_operator(&ls, x, y, lam2)).collect()
            }
            Closure::Tcl2 => {
                if model.h.is_static() && stationary_lag {
                    let prop = linalg::HermitianPropagator::new(&model.h.at(0.0));
                    let f = |u: f64, out: &mut [Complex64]| {
                        out.copy_from_slice(tcl2_integrand(&ls, &k.eval(u, 0.0), &prop.at(u)).as_slice());
                    };
                    cumulative(&f, &times, dim * dim)
                        .into_iter()
                        .map(|v| CMat::from_column_slice(dim, dim, &v).scale(-lam2))
                        .collect()
                } else {
                    let u0 = free_propagators(&model.h, half_dt, count);
                    (0..count)
                        .map(|m| {
                            let w = quadrature::trapezoid_weights(&times[..=m]);
                            let mut f = CMat::zeros(dim, dim);
                            for j in 0..=m {
                                if w[j] != 0.0 {
                                    let u = &u0[m] * u0[j].adjoint();
                                    f += tcl2_integrand(&ls, &k.eval(times[m], times[j]), &u) * c(w[j], 0.0);
                                }
                            }
                            f.scale(-lam2)
                        })
                        .collect()
                }
            }
        };

        let conv = if *closure == Closure::ConvolutedFreeProp {
            let u0 = free_propagators(&model.h, half_dt, count);
            let u0_adj = u0.iter().map(|u| u.adjoint()).collect();
            let local = times
                .iter()
                .map(|&t| {
                    let v = k.eval(t, t);
                    dephasing_operator(&ls, &v.chi, &v.eta, lam2)
                })
                .collect();
            let steps = integrator.steps;
            let memory = if let Some(terms) = k.exponential_terms() {
                let decay = terms.iter().map(|t| ((-t.mu * half_dt).exp(), (-t.mu * integrator.dt).exp())).collect();
                Memory::Exponential { terms, decay }
            } else if count * (steps + 1) * n * n <= TABLE_LIMIT {
                let width = steps + 1;
                let mut values = Vec::with_capacity(count * width);
                for &t in &times {
                    for j in 0..width {
                        values.push(k.eval(t, times[2 * j]));
                    }
                }
                Memory::Table { values, width }
            } else {
                Memory::Direct(k.clone())
            };
            Some(ConvPlan { u0, u0_adj, local, memory })
        } else {
            None
        };

        let base = times.iter().zip(&closure_ops).map(|(&t, f)| f - model.h.at(t) * c(0.0, 1.0)).collect();
        Ok(Self {
            closure: *closure,
            integrator: *integrator,
            dim,
            n,
            half_dt,
            lam2,
            couplings_adj: ls.iter().map(|l| l.adjoint()).collect(),
            noise_ops: ls.iter().map(|l| l * c(0.0, -model.lambda)).collect(),
            couplings: ls,
            base,
            closure_ops,
            conv,
            psi0: psi0.clone(),
            observables: observables.clone(),
        })
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integrator
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    /// Number of half-step grid points τ_m = m·dt/2.
    pub fn half_step_len(&self) -> usize {
        self.base.len()
    }

    /// F_cl(τ_m) for the state-local closures; zero for the stochastic
    /// Hamiltonian and for the convoluted closure, whose memory term is affine.
    pub fn closure_operator(&self, m: usize) -> &CMat {
        &self.closure_ops[m]
    }

    /// T(τ_m) = -iH(τ_m) - iλ Σ z_α L_α + F_cl(τ_m).
    pub fn generator(&self, m: usize, z: &[Complex64]) -> CMat {
        let mut g = self.base[m].clone();
        for (op, &zi) in self.noise_ops.iter().zip(z) {
            g += op * zi;
        }
        g
    }

    pub fn initial_state(&self) -> TrajectoryState {
        let psi = self.psi0.clone();
        let current: Vec<CVec> = self.couplings.iter().map(|l| l * &psi).collect();
        let carried = match &self.conv {
            Some(ConvPlan { memory: Memory::Exponential { terms, .. }, .. }) => {
                vec![CVec::zeros(self.dim); terms.len() * self.n]
            }
            _ => Vec::new(),
        };
        let history = match &self.conv {
            Some(ConvPlan { memory: Memory::Exponential { .. }, .. }) | None => Vec::new(),
            Some(_) => current.clone(),
        };
        TrajectoryState { psi, t: 0.0, step: 0, history, current, carried }
    }

    /// Memory contribution at stage time τ_m = t_n + h, excluding the current
    /// stage state (carried by `local`).
    fn memory_term(&self, conv: &ConvPlan, st: &TrajectoryState, m: usize, stage: Stage, out: &mut CVec) {
        let dim = self.dim;
        let n = self.n;
        let dt = self.integrator.dt;
        let h = stage.offset(dt);
        let mut a = vec![CVec::zeros(dim); n];
        let mut b = vec![CVec::zeros(dim); n];
        match &conv.memory {
            Memory::Exponential { terms, decay } => {
                for (kk, term) in terms.iter().enumerate() {
                    let e = match stage {
                        Stage::Start => ONE,
                        Stage::Mid => decay[kk].0,
                        Stage::End => decay[kk].1,
                    };
                    for beta in 0..n {
                        let y = (&st.carried[kk * n + beta] + &st.current[beta] * c(0.5 * h, 0.0)) * e;
                        for alpha in 0..n {
                            let (xc, xe) = (term.chi[(alpha, beta)], term.eta[(alpha, beta)]);
                            if xc != ZERO {
                                a[alpha].axpy(xc, &y, ONE);
                            }
                            if xe != ZERO {
                                b[alpha].axpy(xe, &y, ONE);
                            }
                        }
                    }
                }
            }
            memory => {
                let steps_done = st.step;
                for j in 0..=steps_done {
                    let mut w = if j < steps_done {
                        if j == 0 {
                            0.5 * dt
                        } else {
                            dt
                        }
                    } else {
                        0.0
                    };
                    if j == steps_done {
                        if steps_done > 0 {
                            w += 0.5 * dt;
                        }
                        w += 0.5 * h;
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let v = memory.value(m, j, self.half_dt);
                    for beta in 0..n {
                        let hv = &st.history[j * n + beta];
                        for alpha in 0..n {
                            a[alpha].axpy(v.chi[(alpha, beta)] * w, hv, ONE);
                            b[alpha].axpy(v.eta[(alpha, beta)] * w, hv, ONE);
                        }
                    }
                }
            }
        }
        out.fill(ZERO);
        let u = &conv.u0[m];
        for alpha in 0..n {
            let ua = u * &a[alpha];
            let ub = u * &b[alpha];
            out.gemv(c(-self.lam2, 0.0), &self.couplings_adj[alpha], &ua, ONE);
            out.gemv(c(self.lam2, 0.0), &self.couplings[alpha], &ub, ONE);
        }
    }

    /// d|ψ⟩/dt at stage time τ_m for the stage state `psi`.
    #[allow(clippy::too_many_arguments)]
    fn rhs(
        &self,
        st: &TrajectoryState,
        m: usize,
        stage: Stage,
        z: &[Complex64],
        psi: &CVec,
        work: &mut CMat,
        aff: &mut CVec,
        out: &mut CVec,
    ) {
        work.copy_from(&self.base[m]);
        for (op, &zi) in self.noise_ops.iter().zip(z) {
            axpy_mat(work, zi, op);
        }
        if let Some(conv) = &self.conv {
            let h = stage.offset(self.integrator.dt);
            if h != 0.0 {
                axpy_mat(work, c(0.5 * h, 0.0), &conv.local[m]);
            }
            self.memory_term(conv, st, m, stage, aff);
            out.copy_from(aff);
            out.gemv(ONE, work, psi, ONE);
        } else {
            out.gemv(ONE, work, psi, ZERO);
        }
    }

    /// Bookkeeping after ψ has advanced to t_{n+1}.
    fn advance_memory(&self, st: &mut TrajectoryState) {
        let Some(conv) = &self.conv else { return };
        let m = 2 * st.step;
        let dt = self.integrator.dt;
        let next: Vec<CVec> = self.couplings.iter().map(|l| &conv.u0_adj[m] * (l * &st.psi)).collect();
        match &conv.memory {
            Memory::Exponential { decay, .. } => {
                let n = self.n;
                for (kk, d) in decay.iter().enumerate() {
                    for beta in 0..n {
                        let j = &mut st.carried[kk * n + beta];
                        let mut upd = &*j + &st.current[beta] * c(0.5 * dt, 0.0);
                        upd *= d.1;
                        upd.axpy(c(0.5 * dt, 0.0), &next[beta], ONE);
                        *j = upd;
                    }
                }
            }
            _ => st.history.extend(next.iter().cloned()),
        }
        st.current = next;
    }

    /// Integrates one realization; `index` identifies it in blow-up errors.
    pub fn run(&self, nr: &NoiseRealization, index: u64) -> Result<Trajectory> {
        self.check_noise(nr)?;
        let dim = self.dim;
        let dt = self.integrator.dt;
        let stride = self.integrator.stride;
        let len = self.integrator.output_len();
        let mut out = Trajectory {
            times: self.integrator.output_times(),
            states: Vec::with_capacity(len),
            norms: Vec::with_capacity(len),
            observables: vec![Vec::with_capacity(len); self.observables.len()],
        };
        let mut st = self.initial_state();
        self.record(&st.psi, &mut out);
        let mut z = vec![ZERO; self.n];
        let mut work = CMat::zeros(dim, dim);
        let mut aff = CVec::zeros(dim);
        let mut k1 = CVec::zeros(dim);
        let mut k2 = CVec::zeros(dim);
        let mut k3 = CVec::zeros(dim);
        let mut k4 = CVec::zeros(dim);
        let mut tmp = CVec::zeros(dim);
        for step in 0..self.integrator.steps {
            let m = 2 * step;
            let t = m as f64 * self.half_dt;
            nr.at(t, &mut z);
            self.rhs(&st, m, Stage::Start, &z, &st.psi, &mut work, &mut aff, &mut k1);
            nr.at((m + 1) as f64 * self.half_dt, &mut z);
            tmp.copy_from(&st.psi);
            tmp.axpy(c(0.5 * dt, 0.0), &k1, ONE);
            self.rhs(&st, m + 1, Stage::Mid, &z, &tmp, &mut work, &mut aff, &mut k2);
            tmp.copy_from(&st.psi);
            tmp.axpy(c(0.5 * dt, 0.0), &k2, ONE);
            self.rhs(&st, m + 1, Stage::Mid, &z, &tmp, &mut work, &mut aff, &mut k3);
            nr.at((m + 2) as f64 * self.half_dt, &mut z);
            tmp.copy_from(&st.psi);
            tmp.axpy(c(dt, 0.0), &k3, ONE);
            self.rhs(&st, m + 2, Stage::End, &z, &tmp, &mut work, &mut aff, &mut k4);
            k2 *= c(2.0, 0.0);
            k3 *= c(2.0, 0.0);
            k1 += &k2;
            k1 += &k3;
            k1 += &k4;
            st.psi.axpy(c(dt / 6.0, 0.0), &k1, ONE);
            st.step = step + 1;
            st.t = (m + 2) as f64 * self.half_dt;
            let norm = st.psi.norm_squared();
            if !(norm <= BLOW_UP_NORM) {
                return Err(Error::BlowUp { trajectory: index, time: st.t, norm });
            }
            self.advance_memory(&mut st);
            if st.step.is_multiple_of(stride) {
                self.record(&st.psi, &mut out);
            }
        }
        Ok(out)
    }

    fn record(&self, psi: &CVec, out: &mut Trajectory) {
        out.norms.push(psi.norm_squared());
        for (k, o) in self.observables.iter().enumerate() {
            out.observables[k].push(linalg::expectation(psi, &o.op));
        }
        out.states.push(psi.clone());
    }

    fn check_noise(&self, nr: &NoiseRealization) -> Result<()> {
        if nr.n_channels() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "noise has {} channels for {} couplings",
                nr.n_channels(),
                self.n
            )));
        }
        let g = nr.grid();
        let t_end = self.integrator.t_end();
        if g.start().abs() > 1e-12 || g.end() < t_end - 1e-9 * t_end.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "noise grid [{}, {}] does not cover [0, {t_end}]",
                g.start(),
                g.end()
            )));
        }
        if let Some(h) = g.uniform_step() {
            let r = h / self.half_dt;
            let aligned = |x: f64| x >= 1.0 - 1e-9 && (x - x.round()).abs() <= 1e-9 * x.max(1.0);
            if !aligned(r) && !aligned(1.0 / r) {
                return Err(Error::GridMismatch(format!(
                    "noise spacing {h} is not commensurate with the half step {}",
                    self.half_dt
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Start,
    Mid,
    End,
}

impl Stage {
    fn offset(self, dt: f64) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::Mid => 0.5 * dt,
            Stage::End => dt,
        }
    }
}

#[inline]
fn axpy_mat(y: &mut CMat, a: Complex64, x: &CMat) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// Running integrals ∫_0^{τ_m} f(u) du over consecutive panels of `times`.
fn cumulative<F>(f: &F, times: &[f64], len: usize) -> Vec<Vec<Complex64>>
where
    F: Fn(f64, &mut [Complex64]),
{
    let mut acc = vec![ZERO; len];
    let mut out = Vec::with_capacity(times.len());
    out.push(acc.clone());
    for w in times.windows(2) {
        let panel = quadrature::integrate_vec(f, w[0], w[1], len, PREFACTOR_TOL);
        acc.iter_mut().zip(&panel).for_each(|(a, p)| *a += p);
        out.push(acc.clone());
    }
    out
}

/// (∫_0^t χ(t,s) ds, ∫_0^t η(t,s) ds) at every grid time.
fn dephasing_integrals(k: &CorrelationKernel, times: &[f64], stationary: bool) -> Vec<(CMat, CMat)> {
    let n = k.n_channels();
    let split =
        |v: &[Complex64]| (CMat::from_column_slice(n, n, &v[..n * n]), CMat::from_column_slice(n, n, &v[n * n..]));
    let write = |v: KernelValue, out: &mut [Complex64]| {
        out[..n * n].copy_from_slice(v.chi.as_slice());
        out[n * n..].copy_from_slice(v.eta.as_slice());
    };
    if stationary {
        let f = |u: f64, out: &mut [Complex64]| write(k.eval(u, 0.0), out);
        cumulative(&f, times, 2 * n * n).iter().map(|v| split(v)).collect()
    } else if k.is_analytic() {
        times
            .iter()
            .map(|&t| {
                let f = |s: f64, out: &mut [Complex64]| write(k.eval(t, s), out);
                split(&quadrature::integrate_vec(&f, 0.0, t, 2 * n * n, PREFACTOR_TOL))
            })
            .collect()
    } else {
        (0..times.len())
            .map(|m| {
                let w = quadrature::trapezoid_weights(&times[..=m]);
                let mut x = CMat::zeros(n, n);
                let mut y = CMat::zeros(n, n);
                for j in 0..=m {
                    let v = k.eval(times[m], times[j]);
                    x += v.chi * c(w[j], 0.0);
                    y += v.eta * c(w[j], 0.0);
                }
                (x, y)
            })
            .collect()
    }
}
