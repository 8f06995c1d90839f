//! Deterministic master-equation oracles: exact dephasing, the Lindblad limit of
//! white noise, and the second-order time-convolutionless equation.
//!
//! These solvers are written independently of the trajectory code; they share
//! only the kernel evaluation and the generic quadrature routine.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::CorrelationKernel;
use crate::linalg::{self, c, CMat};
use crate::quadrature;
use crate::unraveling::{EnsembleAccumulator, Hamiltonian, SystemModel};

const PREFACTOR_TOL: f64 = 1e-10;

/// ρ(t) on a grid, tagged with the method that produced it.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    pub rho: Vec<CMat>,
    pub method: &'static str,
}

impl MasterSolution {
    pub fn max_hermiticity_deviation(&self) -> f64 {
        self.rho.iter().map(linalg::hermiticity_deviation).fold(0.0, f64::max)
    }

    pub fn max_trace_deviation(&self) -> f64 {
        self.rho.iter().map(|r| (linalg::trace(r) - 1.0).norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho.iter().map(|r| linalg::hermitian_eigen(r).0[0]).fold(f64::INFINITY, f64::min)
    }

    /// Hermitian, unit trace and positive within `tol` at every grid point.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let h = self.max_hermiticity_deviation();
        let t = self.max_trace_deviation();
        let e = self.min_eigenvalue();
        if h > tol || t > tol || e < -tol {
            return Err(Error::InvalidParameter(format!(
                "{} solution violates density-matrix invariants: hermiticity {h:.3e}, trace {t:.3e}, min eigenvalue {e:.3e}",
                self.method
            )));
        }
        Ok(())
    }
}

/// Γ(t) = ∫_0^t dt′ ∫_0^{t′} ds κ(t′,s) with κ = Re χ, on a grid.
#[derive(Debug, Clone)]
pub struct DephasingFactor {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DephasingFactor {
    pub fn new(k: &CorrelationKernel, grid: &TimeGrid) -> Result<Self> {
        if k.n_channels() != 1 {
            return Err(Error::DimensionMismatch("the dephasing factor is defined for one channel".into()));
        }
        let inner = |tp: f64| quadrature::integrate_real(|s| k.chi(tp, s)[(0, 0)].re, 0.0, tp, PREFACTOR_TOL);
        let times = grid.times().to_vec();
        let mut gamma = Vec::with_capacity(times.len());
        let mut acc = quadrature::integrate_real(inner, 0.0, times[0].max(0.0), PREFACTOR_TOL);
        gamma.push(acc);
        for w in times.windows(2) {
            acc += quadrature::integrate_real(inner, w[0], w[1], PREFACTOR_TOL);
            gamma.push(acc);
        }
        Ok(Self { times, gamma })
    }
}

/// RK4 on [t_i, t_{i+1}] with substeps no longer than `max_dt`.
fn integrate_master<F>(grid: &TimeGrid, rho0: &CMat, max_dt: f64, rhs: F, method: &'static str) -> MasterSolution
where
    F: Fn(f64, &CMat) -> CMat,
{
    let times = grid.times().to_vec();
    let mut rho = rho0.clone();
    let mut t = 0.0;
    // advance from 0 to the first grid time if it is not 0
    let mut out = Vec::with_capacity(times.len());
    let step_to = |rho: &mut CMat, t: &mut f64, target: f64| {
        let span = target - *t;
        if span <= 0.0 {
            return;
        }
        let n = (span / max_dt).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for k in 0..n {
            let s = *t + k as f64 * h;
            let k1 = rhs(s, rho);
            let k2 = rhs(s + 0.5 * h, &(&*rho + &k1 * c(0.5 * h, 0.0)));
            let k3 = rhs(s + 0.5 * h, &(&*rho + &k2 * c(0.5 * h, 0.0)));
            let k4 = rhs(s + h, &(&*rho + &k3 * c(h, 0.0)));
            *rho += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        }
        *t = target;
    };
    for &target in &times {
        step_to(&mut rho, &mut t, target);
        out.push(rho.clone());
    }
    MasterSolution { times, rho: out, method }
}

fn commutator_h(h: &CMat, rho: &CMat) -> CMat {
    (h * rho - rho * h) * c(0.0, -1.0)
}

fn step_bound(rate: f64) -> f64 {
    if rate > 0.0 {
        0.01f64.min(0.1 / rate)
    } else {
        0.01
    }
}

fn check_rho0(model: &SystemModel, rho0: &CMat) -> Result<()> {
    let dim = model.dim();
    if rho0.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!("initial density matrix must be {dim}x{dim}")));
    }
    linalg::ensure_finite(rho0, "initial density matrix")
}

fn hamiltonian_norm(h: &Hamiltonian) -> f64 {
    match h {
        Hamiltonian::Static(h) => linalg::op_norm(h),
        Hamiltonian::Rotating { h0, drive, .. } => linalg::op_norm(h0) + 2.0 * linalg::op_norm(drive),
    }
}

/// dρ/dt = -i[H,ρ] - λ² K(t)[L,[L,ρ]] - iλ² J(t)[L²,ρ] with K + iJ = ∫_0^t χ(t,s) ds,
/// exact for one Hermitian channel commuting with H.
pub fn dephasing_exact(
    model: &SystemModel,
    k: &CorrelationKernel,
    rho0: &CMat,
    grid: &TimeGrid,
) -> Result<MasterSolution> {
    model.validate()?;
    check_rho0(model, rho0)?;
    if model.couplings.len() != 1 || k.n_channels() != 1 {
        return Err(Error::ClosurePrecondition("exact dephasing oracle needs a single channel".into()));
    }
    let l = &model.couplings[0];
    if linalg::hermiticity_deviation(l) > 1e-10 {
        return Err(Error::ClosurePrecondition("exact dephasing oracle needs a Hermitian coupling".into()));
    }
    let h = match &model.h {
        Hamiltonian::Static(h) => h.clone(),
        _ => return Err(Error::ClosurePrecondition("exact dephasing oracle needs a static Hamiltonian".into())),
    };
    if linalg::op_norm(&linalg::commutator(&h, l)) > 1e-10 {
        return Err(Error::ClosurePrecondition("exact dephasing oracle needs [H, L] = 0".into()));
    }
    let lam2 = model.lambda * model.lambda;
    let l2 = l * l;
    let prefactor = |t: f64| quadrature::integrate(|s| k.chi(t, s)[(0, 0)], 0.0, t, PREFACTOR_TOL);
    let rate = lam2 * linalg::max_abs(&k.chi(0.0, 0.0)) * linalg::op_norm(l).powi(2) + linalg::op_norm(&h);
    let rhs = |t: f64, rho: &CMat| {
        let a = prefactor(t);
        let inner = l * rho - rho * l;
        let double = l * &inner - &inner * l;
        commutator_h(&h, rho) - double * c(lam2 * a.re, 0.0) - (&l2 * rho - rho * &l2) * c(0.0, lam2 * a.im)
    };
    Ok(integrate_master(grid, rho0, step_bound(rate), rhs, "dephasing-exact"))
}

/// dρ/dt = -i[H,ρ] + λ² Σ_α ([L_α, ρL_α†] + [L_αρ, L_α†]).
pub fn lindblad_solve(model: &SystemModel, rho0: &CMat, grid: &TimeGrid) -> Result<MasterSolution> {
    model.validate()?;
    check_rho0(model, rho0)?;
    let lam2 = model.lambda * model.lambda;
    let ls: Vec<(CMat, CMat)> = model.couplings.iter().map(|l| (l.clone(), l.adjoint())).collect();
    let rate =
        2.0 * lam2 * ls.iter().map(|(l, _)| linalg::op_norm(l).powi(2)).sum::<f64>() + hamiltonian_norm(&model.h);
    let rhs = |t: f64, rho: &CMat| {
        let mut d = commutator_h(&model.h.at(t), rho);
        for (l, ld) in &ls {
            let rl = rho * ld;
            let lr = l * rho;
            d += ((l * &rl - &rl * l) + (&lr * ld - ld * &lr)) * c(lam2, 0.0);
        }
        d
    };
    Ok(integrate_master(grid, rho0, step_bound(rate), rhs, "lindblad"))
}

/// Second-order equation
/// dρ/dt = -i[H,ρ] - λ² ∫_0^t ds {χ_αβ(t,s) [L_α†, L̃_β(t,s) ρ] + h.c.},
/// L̃_β(t,s) = U(t,s) L_β U(t,s)†. η does not enter.
pub fn tcl2_master(model: &SystemModel, k: &CorrelationKernel, rho0: &CMat, grid: &TimeGrid) -> Result<MasterSolution> {
    model.validate()?;
    check_rho0(model, rho0)?;
    let n = model.couplings.len();
    if k.n_channels() != n {
        return Err(Error::DimensionMismatch(format!("{n} couplings for a {}-channel kernel", k.n_channels())));
    }
    let dim = model.dim();
    let lam2 = model.lambda * model.lambda;
    let ls = &model.couplings;
    let ls_adj: Vec<CMat> = ls.iter().map(|l| l.adjoint()).collect();
    let chi_scale = linalg::max_abs(&k.chi(0.0, 0.0));
    let norm_l: f64 = ls.iter().map(|l| linalg::op_norm(l).powi(2)).sum();
    let rate = 2.0 * lam2 * chi_scale * norm_l * grid.end().max(1.0) + hamiltonian_norm(&model.h);
    let max_dt = step_bound(rate);

    // R_α(t) = Σ_β ∫_0^t χ_αβ(t,s) L̃_β(t,s) ds
    let memory: Box<dyn Fn(f64) -> Vec<CMat> + Sync> = if model.h.is_static() {
        let prop = linalg::HermitianPropagator::new(&model.h.at(0.0));
        Box::new(move |t: f64| {
            let f = |s: f64, out: &mut [Complex64]| {
                let u = prop.at(t - s);
                let ud = u.adjoint();
                let chi = k.chi(t, s);
                let lt: Vec<CMat> = ls.iter().map(|l| &u * l * &ud).collect();
                for a in 0..n {
                    let mut r = CMat::zeros(dim, dim);
                    for (b, ltb) in lt.iter().enumerate() {
                        r += ltb * chi[(a, b)];
                    }
                    out[a * dim * dim..(a + 1) * dim * dim].copy_from_slice(r.as_slice());
                }
            };
            let v = quadrature::integrate_vec(&f, 0.0, t, n * dim * dim, PREFACTOR_TOL);
            (0..n).map(|a| CMat::from_column_slice(dim, dim, &v[a * dim * dim..(a + 1) * dim * dim])).collect()
        })
    } else {
        // U(t,0) on a fine uniform grid; the s-integral by trapezoid on that grid
        let fine = (grid.end() / (0.25 * max_dt)).ceil().max(1.0) as usize;
        let h = grid.end() / fine as f64;
        let us = fine_propagators(&model.h, h, fine);
        Box::new(move |t: f64| {
            let m = ((t / h).round() as usize).min(fine);
            let ut = if (t - m as f64 * h).abs() <= 1e-9 * h {
                us[m].clone()
            } else {
                propagate_from(&model.h, &us[(t / h).floor() as usize], (t / h).floor() * h, t)
            };
            let nodes: Vec<f64> = (0..=m).map(|j| j as f64 * h).filter(|&s| s < t).chain(std::iter::once(t)).collect();
            let w = quadrature::trapezoid_weights(&nodes);
            let mut out = vec![CMat::zeros(dim, dim); n];
            for (j, &s) in nodes.iter().enumerate() {
                if w[j] == 0.0 {
                    continue;
                }
                let us_s = if j + 1 == nodes.len() { ut.clone() } else { us[j].clone() };
                let u = &ut * us_s.adjoint();
                let ud = u.adjoint();
                let chi = k.chi(t, s);
                let lt: Vec<CMat> = ls.iter().map(|l| &u * l * &ud).collect();
                for a in 0..n {
                    for (b, ltb) in lt.iter().enumerate() {
                        out[a] += ltb * (chi[(a, b)] * w[j]);
                    }
                }
            }
            out
        })
    };

    let rhs = |t: f64, rho: &CMat| {
        let r = memory(t);
        let mut q = CMat::zeros(dim, dim);
        let mut jump = CMat::zeros(dim, dim);
        for a in 0..n {
            q += &ls_adj[a] * &r[a];
            jump += &r[a] * rho * &ls_adj[a];
        }
        let qr = &q * rho;
        let d = qr.clone() + qr.adjoint() - &jump - jump.adjoint();
        commutator_h(&model.h.at(t), rho) - d * c(lam2, 0.0)
    };
    Ok(integrate_master(grid, rho0, max_dt, rhs, "tcl2"))
}

fn propagate_from(h: &Hamiltonian, u0: &CMat, t0: f64, t1: f64) -> CMat {
    let gen = |t: f64| h.at(t) * c(0.0, -1.0);
    let span = t1 - t0;
    let n = 8;
    let hs = span / n as f64;
    let mut u = u0.clone();
    for k in 0..n {
        let t = t0 + k as f64 * hs;
        let k1 = gen(t) * &u;
        let k2 = gen(t + 0.5 * hs) * (&u + &k1 * c(0.5 * hs, 0.0));
        let k3 = gen(t + 0.5 * hs) * (&u + &k2 * c(0.5 * hs, 0.0));
        let k4 = gen(t + hs) * (&u + &k3 * c(hs, 0.0));
        u += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(hs / 6.0, 0.0);
    }
    u
}

fn fine_propagators(h: &Hamiltonian, step: f64, count: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(count + 1);
    out.push(linalg::identity(h.dim()));
    for m in 1..=count {
        let next = propagate_from(h, &out[m - 1], (m - 1) as f64 * step, m as f64 * step);
        out.push(next);
    }
    out
}

/// Deviation summary of one output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeComparison {
    pub t: f64,
    pub max_abs_dev: f64,
    pub max_z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub method: &'static str,
    pub max_abs_dev: f64,
    pub max_z_score: f64,
    /// Fraction of (t, i, j) entries with z <= `nsigma`.
    pub fraction_within: f64,
    pub nsigma: f64,
    pub per_time: Vec<TimeComparison>,
}

impl Comparison {
    /// `fraction_within` at least `fraction`.
    pub fn passes(&self, fraction: f64) -> bool {
        self.fraction_within >= fraction
    }
}

pub(crate) fn z_score(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev / se
    } else if dev <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Entrywise deviation of the ensemble mean from an oracle, in units of the
/// ensemble standard error.
pub fn compare(acc: &EnsembleAccumulator, reference: &MasterSolution, nsigma: f64) -> Result<Comparison> {
    let times = acc.times();
    if times.len() != reference.times.len()
        || times.iter().zip(&reference.times).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::GridMismatch("ensemble and reference are on different grids".into()));
    }
    let dim = acc.dim();
    if reference.rho.first().is_some_and(|r| r.nrows() != dim) {
        return Err(Error::DimensionMismatch("ensemble and reference dimensions differ".into()));
    }
    let mut per_time = Vec::with_capacity(times.len());
    let mut within = 0usize;
    let mut total = 0usize;
    for (i, &t) in times.iter().enumerate() {
        let mean = acc.mean_rho(i);
        let se = acc.rho_stderr(i);
        let mut dev_max: f64 = 0.0;
        let mut z_max: f64 = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                let dev = (mean[(a, b)] - reference.rho[i][(a, b)]).norm();
                let z = z_score(dev, se[(a, b)]);
                dev_max = dev_max.max(dev);
                z_max = z_max.max(z);
                total += 1;
                if z <= nsigma {
                    within += 1;
                }
            }
        }
        per_time.push(TimeComparison { t, max_abs_dev: dev_max, max_z_score: z_max });
    }
    Ok(Comparison {
        method: reference.method,
        max_abs_dev: per_time.iter().map(|p| p.max_abs_dev).fold(0.0, f64::max),
        max_z_score: per_time.iter().map(|p| p.max_z_score).fold(0.0, f64::max),
        fraction_within: if total == 0 { 1.0 } else { within as f64 / total as f64 },
        nsigma,
        per_time,
    })
}
