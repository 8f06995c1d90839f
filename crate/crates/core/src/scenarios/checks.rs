//! Pass/fail checks of an ensemble run against its scenario's claims.

use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{ReferenceSpec, Scenario, ScenarioSpec};
use crate::error::{Error, Result};
use crate::kernels::{check_kernel_positivity, PositivityReport, DEFAULT_POSITIVITY_TOL};
use crate::reference::{z_score, MasterSolution};
use crate::unraveling::{run_ensemble, Closure, EnsembleAccumulator, EnsembleOptions};

/// Largest grid used for the positivity gate of a run.
const POSITIVITY_POINTS: usize = 101;

/// Two-sided p-value below which two trajectory dispersions count as different.
pub const VARIANCE_P_BOUND: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckVerdict {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckVerdict {
    fn at_most(name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self { name: name.into(), measured, bound, pass: measured <= bound, detail }
    }
}

/// Block-covariance positivity on (a subsample of) the output grid.
pub fn check_positivity(s: &Scenario) -> Result<(CheckVerdict, PositivityReport)> {
    let grid = s.output_grid()?.subsample(POSITIVITY_POINTS);
    let report = check_kernel_positivity(s.kernel(), &grid, DEFAULT_POSITIVITY_TOL)?;
    let v = CheckVerdict {
        name: "positivity".into(),
        measured: report.min_eigenvalue,
        bound: -report.tolerance,
        pass: report.pass,
        detail: format!("{} grid points, max eigenvalue {:.6e}", grid.len(), report.max_eigenvalue),
    };
    Ok((v, report))
}

/// |Tr ρ̄ - 1| ≤ max(3 stderr, b) with b = 1e-3 for the exact closures and
/// b = 5e-3 for the perturbative ones. `measured` is the worst ratio of
/// deviation to allowance.
pub fn check_trace(acc: &EnsembleAccumulator, closure: Closure) -> CheckVerdict {
    let exact = matches!(closure, Closure::ExactDephasing | Closure::StochasticHamiltonian);
    let floor = if exact { 1e-3 } else { 5e-3 };
    let mut worst = 0.0f64;
    let mut worst_dev = 0.0f64;
    let mut worst_t = 0.0;
    for (i, &t) in acc.times().iter().enumerate() {
        let dev = (acc.trace_mean(i) - 1.0).abs();
        let allowance = (3.0 * acc.trace_stderr(i)).max(floor);
        let ratio = dev / allowance;
        if ratio > worst || ratio.is_nan() {
            worst = ratio;
            worst_dev = dev;
            worst_t = t;
        }
    }
    CheckVerdict::at_most(
        "trace",
        worst,
        1.0,
        format!("|Tr rho - 1| = {worst_dev:.3e} at t = {worst_t}, allowance max(3 stderr, {floor:e})"),
    )
}

fn selected(spec: &ReferenceSpec, dim: usize, diagonal_default: bool) -> Vec<[usize; 2]> {
    if !spec.entries.is_empty() {
        spec.entries.clone()
    } else if diagonal_default {
        (0..dim).map(|a| [a, a]).collect()
    } else {
        (0..dim).flat_map(|a| (0..dim).map(move |b| [a, b])).collect()
    }
}

/// Every bound the scenario's reference section sets.
pub fn check_reference(
    acc: &EnsembleAccumulator,
    spec: &ReferenceSpec,
    sol: &MasterSolution,
) -> Result<Vec<CheckVerdict>> {
    let cmp = crate::reference::compare(acc, sol, 3.0)?;
    let dim = acc.dim();
    let nt = acc.times().len();
    if let Some(&[a, b]) = spec.entries.iter().find(|e| e[0] >= dim || e[1] >= dim) {
        return Err(Error::Config(format!("reference entry ({a}, {b}) outside a {dim}-level system")));
    }
    let mut out = Vec::new();
    if let Some(bound) = spec.max_z_score {
        let mut z = 0.0f64;
        for i in 0..nt {
            let (mean, se) = (acc.mean_rho(i), acc.rho_stderr(i));
            for [a, b] in selected(spec, dim, false) {
                z = z.max(z_score((mean[(a, b)] - sol.rho[i][(a, b)]).norm(), se[(a, b)]));
            }
        }
        out.push(CheckVerdict::at_most(
            "reference-z-score",
            z,
            bound,
            format!("{} oracle, max |deviation| {:.3e}", cmp.method, cmp.max_abs_dev),
        ));
    }
    if let Some(bound) = spec.max_abs_deviation {
        let mut d = 0.0f64;
        for i in 0..nt {
            let mean = acc.mean_rho(i);
            for [a, b] in selected(spec, dim, true) {
                d = d.max((mean[(a, b)] - sol.rho[i][(a, b)]).norm());
            }
        }
        out.push(CheckVerdict::at_most("reference-abs", d, bound, format!("{} oracle", cmp.method)));
    }
    if let Some(bound) = spec.max_final_relative_deviation {
        let last = nt - 1;
        let mean = acc.mean_rho(last);
        let mut d = 0.0f64;
        for [a, b] in selected(spec, dim, true) {
            let r = sol.rho[last][(a, b)];
            d = d.max((mean[(a, b)] - r).norm() / r.norm());
        }
        out.push(CheckVerdict::at_most(
            "reference-final-relative",
            d,
            bound,
            format!("{} oracle at t = {}", cmp.method, acc.times()[last]),
        ));
    }
    Ok(out)
}

/// Outcome of comparing the first and last variants of a sweep.
#[derive(Debug, Clone)]
pub struct EtaIndependence {
    pub mean: CheckVerdict,
    pub dispersion: CheckVerdict,
    pub first: EnsembleAccumulator,
    pub last: EnsembleAccumulator,
}

/// Runs the first and last variants on independent seeds (seed, seed + 1): mean states agree
/// within 3 combined stderr everywhere while the per-trajectory variance of
/// `observable` at the final time differs (two-sided F test).
pub fn check_eta_independence(
    spec: &ScenarioSpec,
    base_dir: &Path,
    m: usize,
    seed: u64,
    opts: EnsembleOptions,
    observable: &str,
) -> Result<EtaIndependence> {
    let (Some(a), Some(b)) = (spec.variants.first(), spec.variants.last()) else {
        return Err(Error::Config(format!("scenario '{}' has no variants to compare", spec.name)));
    };
    if a.label == b.label {
        return Err(Error::Config("eta independence needs at least two variants".into()));
    }
    let sa = spec.variant(&a.label)?.build(base_dir)?;
    let sb = spec.variant(&b.label)?.build(base_dir)?;
    let first = run_ensemble(&sa.simulation, m, seed, opts)?.accumulator;
    let last = run_ensemble(&sb.simulation, m, seed.wrapping_add(1), opts)?.accumulator;
    let k = first
        .observable_index(observable)
        .ok_or_else(|| Error::Config(format!("observable '{observable}' is not recorded")))?;
    let dim = first.dim();
    let mut z = 0.0f64;
    for i in 0..first.times().len() {
        let (ma, mb) = (first.mean_rho(i), last.mean_rho(i));
        let (ea, eb) = (first.rho_stderr(i), last.rho_stderr(i));
        for p in 0..dim {
            for q in 0..dim {
                let se = (ea[(p, q)].powi(2) + eb[(p, q)].powi(2)).sqrt();
                z = z.max(z_score((ma[(p, q)] - mb[(p, q)]).norm(), se));
            }
        }
    }
    let mean = CheckVerdict::at_most(
        "eta-independence-mean",
        z,
        3.0,
        format!("{} vs {}: max combined z-score of mean rho", a.label, b.label),
    );
    let i = first.times().len() - 1;
    let (va, vb) = (first.observable_variance(k, i), last.observable_variance(k, i));
    let p = variance_ratio_p(va, first.count(), vb, last.count())?;
    let dispersion = CheckVerdict {
        name: "eta-independence-dispersion".into(),
        measured: p,
        bound: VARIANCE_P_BOUND,
        pass: p < VARIANCE_P_BOUND,
        detail: format!("var {observable}(t = {}): {va:.6e} vs {vb:.6e}, two-sided F-test p-value", first.times()[i]),
    };
    Ok(EtaIndependence { mean, dispersion, first, last })
}

/// Two-sided p-value of H0: equal variances, from sample variances of sizes m1, m2.
pub fn variance_ratio_p(v1: f64, m1: usize, v2: f64, m2: usize) -> Result<f64> {
    if v1 == 0.0 && v2 == 0.0 {
        return Ok(1.0);
    }
    if v2 == 0.0 || v1 == 0.0 {
        return Ok(0.0);
    }
    let f = FisherSnedecor::new((m1 - 1) as f64, (m2 - 1) as f64)
        .map_err(|e| Error::InvalidParameter(format!("F distribution: {e}")))?;
    let c = f.cdf(v1 / v2);
    Ok((2.0 * c.min(1.0 - c)).min(1.0))
}
