//! Plot-ready CSV tables of ensemble averages and oracle solutions.
//!
//! Numbers are written with 17 significant digits so that byte-identical files
//! mean bit-identical results.

use std::io::Write;

use crate::error::Result;
use crate::reference::MasterSolution;
use crate::unraveling::EnsembleAccumulator;

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn rho_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for a in 0..dim {
        for b in 0..dim {
            h.extend([format!("rho_{a}{b}_re"), format!("rho_{a}{b}_im"), format!("rho_{a}{b}_stderr")]);
        }
    }
    h.extend(["trace".to_string(), "trace_stderr".to_string()]);
    h
}

/// t, then re/im/stderr of every ρ̄ entry (row-major), then Tr ρ̄ and its stderr.
pub fn write_mean_rho_csv<W: Write>(w: W, acc: &EnsembleAccumulator) -> Result<()> {
    let dim = acc.dim();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(rho_header(dim))?;
    for (i, &t) in acc.times().iter().enumerate() {
        let (mean, se) = (acc.mean_rho(i), acc.rho_stderr(i));
        let mut rec = vec![f(t)];
        for a in 0..dim {
            for b in 0..dim {
                rec.extend([f(mean[(a, b)].re), f(mean[(a, b)].im), f(se[(a, b)])]);
            }
        }
        rec.extend([f(acc.trace_mean(i)), f(acc.trace_stderr(i))]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// The `write_mean_rho_csv` layout for a deterministic solution (zero stderr).
pub fn write_solution_csv<W: Write>(w: W, sol: &MasterSolution) -> Result<()> {
    let dim = sol.rho.first().map_or(0, |r| r.nrows());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(rho_header(dim))?;
    for (t, rho) in sol.times.iter().zip(&sol.rho) {
        let mut rec = vec![f(*t)];
        for a in 0..dim {
            for b in 0..dim {
                rec.extend([f(rho[(a, b)].re), f(rho[(a, b)].im), f(0.0)]);
            }
        }
        let tr = crate::linalg::trace(rho);
        rec.extend([f(tr.re), f(0.0)]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// t, then re/im/stderr of each recorded observable's ensemble mean.
pub fn write_observables_csv<W: Write>(w: W, acc: &EnsembleAccumulator) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    for name in acc.observable_names() {
        header.extend([format!("{name}_re"), format!("{name}_im"), format!("{name}_stderr")]);
    }
    out.write_record(&header)?;
    for (i, &t) in acc.times().iter().enumerate() {
        let mut rec = vec![f(t)];
        for k in 0..acc.observable_names().len() {
            let m = acc.observable_mean(k, i);
            rec.extend([f(m.re), f(m.im), f(acc.observable_stderr(k, i))]);
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
