//! Binary dump of noise ensembles and CSV export of empirical correlations.
//!
//! Binary layout (little endian): magic `UNRVNOIS`, u32 version, u32 n, u64 N,
//! u64 M, N f64 grid times, then per realization N·n (re, im) f64 pairs in
//! time-major, channel-minor order.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use super::{EmpiricalCorrelations, Interpolation, NoiseRealization};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::CorrelationKernel;

const MAGIC: &[u8; 8] = b"UNRVNOIS";
const VERSION: u32 = 1;

pub fn write_realizations<W: Write>(mut w: W, ensemble: &[NoiseRealization]) -> Result<()> {
    let first = ensemble.first().ok_or_else(|| Error::InvalidParameter("nothing to write".into()))?;
    let grid = first.grid();
    let n = first.n_channels();
    if ensemble.iter().any(|r| r.grid() != grid || r.n_channels() != n) {
        return Err(Error::GridMismatch("realizations must share grid and channel count".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(grid.len() as u64).to_le_bytes())?;
    w.write_all(&(ensemble.len() as u64).to_le_bytes())?;
    for t in grid.times() {
        w.write_all(&t.to_le_bytes())?;
    }
    for r in ensemble {
        for z in r.values() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_realizations<R: Read>(mut r: R, interpolation: Interpolation) -> Result<Vec<NoiseRealization>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a noise dump (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Config(format!("unsupported noise dump version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let nt = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let times = (0..nt).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let grid = Arc::new(TimeGrid::new(times)?);
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let mut values = Vec::with_capacity(n * nt);
        for _ in 0..n * nt {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            values.push(Complex64::new(re, im));
        }
        out.push(NoiseRealization::new(grid.clone(), n, values, interpolation)?);
    }
    Ok(out)
}

/// One row per (i, j, alpha, beta); analytic columns are added when a kernel is given.
pub fn write_correlations_csv<W: Write>(
    w: W,
    emp: &EmpiricalCorrelations,
    reference: Option<&CorrelationKernel>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "i",
        "j",
        "t",
        "s",
        "alpha",
        "beta",
        "re_chi_hat",
        "im_chi_hat",
        "se_chi",
        "re_eta_hat",
        "im_eta_hat",
        "se_eta",
    ];
    if reference.is_some() {
        header.extend(["re_chi", "im_chi", "re_eta", "im_eta"]);
    }
    out.write_record(&header)?;
    let times = emp.grid.times();
    let f = |x: f64| format!("{x:.16e}");
    for (i, &t) in times.iter().enumerate() {
        for (j, &s) in times.iter().enumerate() {
            let v = reference.map(|k| k.eval(t, s));
            for a in 0..emp.n {
                for b in 0..emp.n {
                    let ch = emp.chi(i, j)[(a, b)];
                    let eh = emp.eta(i, j)[(a, b)];
                    let mut rec = vec![
                        i.to_string(),
                        j.to_string(),
                        f(t),
                        f(s),
                        a.to_string(),
                        b.to_string(),
                        f(ch.re),
                        f(ch.im),
                        f(emp.chi_stderr(i, j)[(a, b)]),
                        f(eh.re),
                        f(eh.im),
                        f(emp.eta_stderr(i, j)[(a, b)]),
                    ];
                    if let Some(v) = &v {
                        rec.extend([
                            f(v.chi[(a, b)].re),
                            f(v.chi[(a, b)].im),
                            f(v.eta[(a, b)].re),
                            f(v.eta[(a, b)].im),
                        ]);
                    }
                    out.write_record(&rec)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
