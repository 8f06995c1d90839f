//! CSV storage of tabulated kernels: one row per (i, j, alpha, beta) with
//! columns re_chi, im_chi, re_eta, im_eta. Entries may be given for one triangle
//! only; the other is filled from χ(s,t) = χ(t,s)† and η(s,t) = η(t,s)ᵀ.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CorrelationKernel, GridKernelData};
use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    i: usize,
    j: usize,
    alpha: usize,
    beta: usize,
    re_chi: f64,
    im_chi: f64,
    re_eta: f64,
    im_eta: f64,
}

pub fn read_grid_kernel_csv<R: Read>(reader: R, times: &[f64], n_channels: usize) -> Result<CorrelationKernel> {
    let nt = times.len();
    let n = n_channels;
    if n == 0 {
        return Err(Error::InvalidParameter("grid kernel needs at least one channel".into()));
    }
    let slots = nt * nt * n * n;
    let mut chi: Vec<Option<Complex64>> = vec![None; slots];
    let mut eta: Vec<Option<Complex64>> = vec![None; slots];
    let idx = |i: usize, j: usize, a: usize, b: usize| ((i * nt + j) * n + a) * n + b;

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize() {
        let r: Row = row?;
        if r.i >= nt || r.j >= nt || r.alpha >= n || r.beta >= n {
            return Err(Error::InvalidGrid(format!(
                "entry ({}, {}, {}, {}) outside a {nt}-point, {n}-channel grid",
                r.i, r.j, r.alpha, r.beta
            )));
        }
        let values = [r.re_chi, r.im_chi, r.re_eta, r.im_eta];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid kernel entry ({}, {}, {}, {})", r.i, r.j, r.alpha, r.beta)));
        }
        let k = idx(r.i, r.j, r.alpha, r.beta);
        chi[k] = Some(Complex64::new(r.re_chi, r.im_chi));
        eta[k] = Some(Complex64::new(r.re_eta, r.im_eta));
    }

    let mut chi_m = vec![CMat::zeros(n, n); nt * nt];
    let mut eta_m = vec![CMat::zeros(n, n); nt * nt];
    for i in 0..nt {
        for j in 0..nt {
            for a in 0..n {
                for b in 0..n {
                    let k = idx(i, j, a, b);
                    let mirror = idx(j, i, b, a);
                    let (x, y) = match (chi[k], eta[k]) {
                        (Some(x), Some(y)) => (x, y),
                        _ => match (chi[mirror], eta[mirror]) {
                            (Some(x), Some(y)) => (x.conj(), y),
                            _ => {
                                return Err(Error::InvalidGrid(format!(
                                    "grid kernel has no entry for ({i}, {j}, {a}, {b}) or its mirror"
                                )))
                            }
                        },
                    };
                    chi_m[i * nt + j][(a, b)] = x;
                    eta_m[i * nt + j][(a, b)] = y;
                }
            }
        }
    }
    CorrelationKernel::from_grid(n, GridKernelData { times: times.to_vec(), chi: chi_m, eta: eta_m })
}

/// Tabulates `k` on `times` in the CSV layout read by [`read_grid_kernel_csv`].
pub fn write_grid_kernel_csv<W: Write>(writer: W, k: &CorrelationKernel, times: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["i", "j", "alpha", "beta", "re_chi", "im_chi", "re_eta", "im_eta"])?;
    for (i, &t) in times.iter().enumerate() {
        for (j, &s) in times.iter().enumerate() {
            let v = k.eval(t, s);
            for a in 0..k.n_channels() {
                for b in 0..k.n_channels() {
                    let x = v.chi[(a, b)];
                    let y = v.eta[(a, b)];
                    w.write_record(&[
                        i.to_string(),
                        j.to_string(),
                        a.to_string(),
                        b.to_string(),
                        format!("{:.16e}", x.re),
                        format!("{:.16e}", x.im),
                        format!("{:.16e}", y.re),
                        format!("{:.16e}", y.im),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
