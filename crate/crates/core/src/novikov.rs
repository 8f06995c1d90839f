//! Monte Carlo check of the Gaussian integration-by-parts identity
//! ⟨z_γ(t) M[z]⟩ = Σ_β ∫_0^t ds {χ*_γβ(t,s) ⟨δM/δz*_β(s)⟩ + η_γβ(t,s) ⟨δM/δz_β(s)⟩}
//! for functionals whose derivatives are known in closed form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{check_kernel_positivity, CorrelationKernel, DEFAULT_POSITIVITY_TOL};
use crate::linalg::ZERO;
use crate::noise::{NoiseRealization, NoiseSampler, RngStreamSpec};
use crate::quadrature::trapezoid_weights;

const BATCH: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunctional {
    /// ∫ f(s) z_β(s) ds with f sampled on `grid`.
    LinearZ { channel: usize, grid: TimeGrid, weights: Vec<Complex64> },
    /// ∫ f(s) z*_β(s) ds with f sampled on `grid`.
    LinearZStar { channel: usize, grid: TimeGrid, weights: Vec<Complex64> },
    /// z*_β(s0).
    PointZStar { channel: usize, s0: f64 },
    /// z_a(s1) z_b(s2) z*_c(s3).
    CubicWick { channels: [usize; 3], times: [f64; 3] },
}

impl TestFunctional {
    pub fn linear_z(channel: usize, grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let weights = sample_weights(&grid, f)?;
        Ok(Self::LinearZ { channel, grid, weights })
    }

    pub fn linear_z_star(channel: usize, grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let weights = sample_weights(&grid, f)?;
        Ok(Self::LinearZStar { channel, grid, weights })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LinearZ { .. } => "linear-z",
            Self::LinearZStar { .. } => "linear-z-star",
            Self::PointZStar { .. } => "point-z-star",
            Self::CubicWick { .. } => "cubic-wick",
        }
    }

    fn channels(&self) -> Vec<usize> {
        match self {
            Self::LinearZ { channel, .. } | Self::LinearZStar { channel, .. } | Self::PointZStar { channel, .. } => {
                vec![*channel]
            }
            Self::CubicWick { channels, .. } => channels.to_vec(),
        }
    }

    fn validate(&self, n: usize, t: f64) -> Result<()> {
        if let Some(c) = self.channels().into_iter().find(|&c| c >= n) {
            return Err(Error::DimensionMismatch(format!("channel {c} for a {n}-channel kernel")));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!("evaluation time must be positive, got {t}")));
        }
        let interior = |s: f64| s > 0.0 && s < t;
        match self {
            Self::LinearZ { grid, weights, .. } | Self::LinearZStar { grid, weights, .. } => {
                if weights.len() != grid.len() {
                    return Err(Error::GridMismatch("weights do not match their grid".into()));
                }
                if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
                    return Err(Error::NonFinite("test-functional weights".into()));
                }
                if grid.index_of(t).is_none() {
                    return Err(Error::GridMismatch(format!("t = {t} is not a point of the weight grid")));
                }
            }
            Self::PointZStar { s0, .. } => {
                if !interior(*s0) {
                    return Err(Error::InvalidParameter(format!("s0 = {s0} must lie in (0, {t})")));
                }
            }
            Self::CubicWick { times, .. } => {
                if let Some(s) = times.iter().find(|&&s| !interior(s)) {
                    return Err(Error::InvalidParameter(format!("cubic time {s} must lie in (0, {t})")));
                }
            }
        }
        Ok(())
    }

    /// Sampling grid containing t and every point the functional reads.
    fn sampling_grid(&self, t: f64) -> Result<TimeGrid> {
        match self {
            Self::LinearZ { grid, .. } | Self::LinearZStar { grid, .. } => Ok(grid.clone()),
            Self::PointZStar { s0, .. } => TimeGrid::new(dedup(vec![*s0, t])),
            Self::CubicWick { times, .. } => TimeGrid::new(dedup(vec![times[0], times[1], times[2], t])),
        }
    }

    /// M[z] on one realization.
    fn evaluate(&self, nr: &NoiseRealization, t: f64) -> Complex64 {
        let at = |s: f64, c: usize| nr.value(nr.grid().index_of(s).expect("sampling grid holds every point"), c);
        match self {
            Self::LinearZ { channel, grid, weights } => {
                linear_weights(grid, weights, t).map(|(i, w)| w * nr.value(i, *channel)).sum()
            }
            Self::LinearZStar { channel, grid, weights } => {
                linear_weights(grid, weights, t).map(|(i, w)| w * nr.value(i, *channel).conj()).sum()
            }
            Self::PointZStar { channel, s0 } => at(*s0, *channel).conj(),
            Self::CubicWick { channels, times } => {
                at(times[0], channels[0]) * at(times[1], channels[1]) * at(times[2], channels[2]).conj()
            }
        }
    }
}

fn sample_weights(grid: &TimeGrid, f: impl Fn(f64) -> Complex64) -> Result<Vec<Complex64>> {
    let w: Vec<Complex64> = grid.times().iter().map(|&s| f(s)).collect();
    if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::NonFinite("test-functional weights".into()));
    }
    Ok(w)
}

fn dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// (grid index, trapezoid weight × f) over the grid points in [0, t].
fn linear_weights<'a>(grid: &'a TimeGrid, f: &'a [Complex64], t: f64) -> impl Iterator<Item = (usize, Complex64)> + 'a {
    let end = grid.index_of(t).expect("validated");
    let w = trapezoid_weights(&grid.times()[..=end]);
    w.into_iter().enumerate().map(move |(i, wi)| (i, f[i] * wi))
}

/// Right-hand side of the identity for output channel γ at time t. The
/// inner means are kernel values: Wick pairings for the cubic functional.
pub fn novikov_rhs(tf: &TestFunctional, k: &CorrelationKernel, gamma: usize, t: f64) -> Result<Complex64> {
    let n = k.n_channels();
    tf.validate(n, t)?;
    if gamma >= n {
        return Err(Error::DimensionMismatch(format!("output channel {gamma} for a {n}-channel kernel")));
    }
    let chi_star = |a: usize, x: f64, b: usize, y: f64| k.chi(x, y)[(a, b)].conj();
    let eta = |a: usize, x: f64, b: usize, y: f64| k.eta(x, y)[(a, b)];
    Ok(match tf {
        TestFunctional::LinearZ { channel, grid, weights } => {
            linear_weights(grid, weights, t).map(|(i, w)| eta(gamma, t, *channel, grid.times()[i]) * w).sum()
        }
        TestFunctional::LinearZStar { channel, grid, weights } => {
            linear_weights(grid, weights, t).map(|(i, w)| chi_star(gamma, t, *channel, grid.times()[i]) * w).sum()
        }
        TestFunctional::PointZStar { channel, s0 } => chi_star(gamma, t, *channel, *s0),
        TestFunctional::CubicWick { channels: [a, b, c], times: [s1, s2, s3] } => {
            // ⟨z_b(s2) z*_c(s3)⟩ = χ*_bc(s2, s3), ⟨z_a(s1) z_b(s2)⟩ = η_ab(s1, s2)
            eta(gamma, t, *a, *s1) * chi_star(*b, *s2, *c, *s3)
                + eta(gamma, t, *b, *s2) * chi_star(*a, *s1, *c, *s3)
                + chi_star(gamma, t, *c, *s3) * eta(*a, *s1, *b, *s2)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NovikovReport {
    pub kind: &'static str,
    pub kernel: String,
    pub channel: usize,
    pub t: f64,
    pub samples: usize,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub lhs_stderr: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    /// |lhs - rhs|.
    pub residual: f64,
    /// residual / lhs_stderr.
    pub z_score: f64,
}

impl NovikovReport {
    pub fn lhs(&self) -> Complex64 {
        Complex64::new(self.lhs_re, self.lhs_im)
    }

    pub fn rhs(&self) -> Complex64 {
        Complex64::new(self.rhs_re, self.rhs_im)
    }
}

/// Estimates ⟨z_γ(t) M[z]⟩ from `m` sampled paths (path i uses stream (seed, i))
/// and compares it to `novikov_rhs`.
pub fn novikov_check(
    tf: &TestFunctional,
    k: &CorrelationKernel,
    gamma: usize,
    t: f64,
    m: usize,
    seed: u64,
) -> Result<NovikovReport> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {m}")));
    }
    let rhs = novikov_rhs(tf, k, gamma, t)?;
    let grid = tf.sampling_grid(t)?;
    check_kernel_positivity(k, &grid, DEFAULT_POSITIVITY_TOL)?.into_result()?;
    let sampler = NoiseSampler::new(k, &grid)?;
    let ti = grid.index_of(t).ok_or_else(|| Error::GridMismatch(format!("t = {t} missing from sampling grid")))?;
    let batches: Vec<(usize, usize)> = (0..m).step_by(BATCH).map(|s| (s, (s + BATCH).min(m))).collect();
    let parts: Vec<Result<(Complex64, f64)>> = batches
        .par_iter()
        .map(|&(lo, hi)| {
            let (mut sum, mut sq) = (ZERO, 0.0);
            for i in lo..hi {
                let nr = sampler.sample(RngStreamSpec::new(seed, i as u64))?;
                let x = nr.value(ti, gamma) * tf.evaluate(&nr, t);
                sum += x;
                sq += x.norm_sqr();
            }
            Ok((sum, sq))
        })
        .collect();
    let (mut sum, mut sq) = (ZERO, 0.0);
    for p in parts {
        let (s, q) = p?;
        sum += s;
        sq += q;
    }
    let mf = m as f64;
    let mean = sum / mf;
    let var = ((sq - mf * mean.norm_sqr()) / (mf - 1.0)).max(0.0);
    let se = (var / mf).sqrt();
    let residual = (mean - rhs).norm();
    Ok(NovikovReport {
        kind: tf.kind(),
        kernel: format!("{:?}", k.descriptor()),
        channel: gamma,
        t,
        samples: m,
        lhs_re: mean.re,
        lhs_im: mean.im,
        lhs_stderr: se,
        rhs_re: rhs.re,
        rhs_im: rhs.im,
        residual,
        z_score: crate::reference::z_score(residual, se),
    })
}

/// The four shipped functionals for one kernel on [0, t], channel 0, with
/// weights f(s) = cos s + i s/2 on a `steps`-interval grid.
pub fn standard_functionals(t: f64, steps: usize) -> Result<Vec<TestFunctional>> {
    let grid = TimeGrid::uniform(0.0, t, steps)?;
    let f = |s: f64| Complex64::new(s.cos(), 0.5 * s);
    Ok(vec![
        TestFunctional::linear_z(0, grid.clone(), f)?,
        TestFunctional::linear_z_star(0, grid, f)?,
        TestFunctional::PointZStar { channel: 0, s0: 0.5 * t },
        TestFunctional::CubicWick { channels: [0, 0, 0], times: [0.3 * t, 0.6 * t, 0.45 * t] },
    ])
}

/// Kernels the identity is checked on by default: exponential with complex,
/// real and rotating noise, and white-regularized with and without η.
pub fn standard_kernels() -> Result<Vec<(&'static str, CorrelationKernel)>> {
    use crate::kernels::{exponential_kernel, white_kernel, OUParams, WhiteConvention, WhiteNoiseSpec};
    use crate::linalg::CMat;
    let white = |c: f64| {
        white_kernel(
            &WhiteNoiseSpec::new(CMat::from_element(1, 1, Complex64::new(c, 0.0)), 0.1)
                .with_convention(WhiteConvention::OneSided),
        )
    };
    Ok(vec![
        ("exponential-complex", exponential_kernel(OUParams::new(1.0, 0.0, 2.0, 0.0)?)?),
        ("exponential-real", exponential_kernel(OUParams::new(1.0, 0.0, 2.0, 2.0)?)?),
        ("exponential-rotating", exponential_kernel(OUParams::new(1.0, 0.8, 2.0, 1.0)?)?),
        ("white-complex", white(0.0)?),
        ("white-correlated", white(0.5)?),
    ])
}

/// Every shipped functional on every standard kernel at time t; combination c
/// uses master seed `seed + c`.
pub fn standard_batch(t: f64, m: usize, seed: u64) -> Result<Vec<NovikovReport>> {
    let mut out = Vec::new();
    for (label, k) in standard_kernels()? {
        for tf in standard_functionals(t, 20)? {
            let mut r = novikov_check(&tf, &k, 0, t, m, seed.wrapping_add(out.len() as u64))?;
            r.kernel = label.to_string();
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{exponential_kernel, white_kernel, OUParams, WhiteConvention, WhiteNoiseSpec};
    use crate::linalg::{c, CMat};

    fn ou(d_prime: f64, omega: f64) -> CorrelationKernel {
        exponential_kernel(OUParams::new(1.0, omega, 2.0, d_prime).unwrap()).unwrap()
    }

    /// ⟨w1 w2 w3 w4⟩ for complex Gaussian entries w = x + iy of a zero-mean
    /// vector with ⟨z_i* z_j⟩ = X_ij and ⟨z_i z_j⟩ = E_ij, by expanding each w
    /// into real parts and applying Isserlis to the real covariance.
    fn brute_force_moment(x: &CMat, e: &CMat, picks: [(usize, bool); 4]) -> Complex64 {
        let n = x.nrows();
        // real covariance over (Re z_0.., Im z_0..)
        let mut r = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                r[i][j] = 0.5 * (x[(i, j)] + e[(i, j)]).re;
                r[n + i][n + j] = 0.5 * (x[(i, j)] - e[(i, j)]).re;
                r[i][n + j] = 0.5 * (e[(i, j)] + x[(i, j)]).im;
                r[n + i][j] = 0.5 * (e[(i, j)] - x[(i, j)]).im;
            }
        }
        let mut total = ZERO;
        for mask in 0..16u32 {
            let mut coef = c(1.0, 0.0);
            let mut idx = [0usize; 4];
            for (p, &(i, conj)) in picks.iter().enumerate() {
                if mask >> p & 1 == 1 {
                    idx[p] = n + i;
                    coef *= if conj { c(0.0, -1.0) } else { c(0.0, 1.0) };
                } else {
                    idx[p] = i;
                }
            }
            let [a, b, cc, d] = idx;
            let m4 = r[a][b] * r[cc][d] + r[a][cc] * r[b][d] + r[a][d] * r[b][cc];
            total += coef * m4;
        }
        total
    }

    #[test]
    fn cubic_rhs_matches_brute_force_moments() {
        // two channels with cross-correlations after a base change
        use crate::kernels::kernel_transform;
        let k = CorrelationKernel::block_diagonal(vec![ou(1.2, 0.7), ou(0.4, -0.3)]).unwrap();
        let u = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)]);
        let k = kernel_transform(&k, &u).unwrap();
        let (t, s) = (1.0, 0.4);
        // flattened variables: (time, channel) with times [s, t]
        let pts = [s, t];
        let mut x = CMat::zeros(4, 4);
        let mut e = CMat::zeros(4, 4);
        for (i, &ti) in pts.iter().enumerate() {
            for (j, &tj) in pts.iter().enumerate() {
                let (ch, et) = (k.chi(ti, tj), k.eta(ti, tj));
                for a in 0..2 {
                    for b in 0..2 {
                        x[(2 * i + a, 2 * j + b)] = ch[(a, b)];
                        e[(2 * i + a, 2 * j + b)] = et[(a, b)];
                    }
                }
            }
        }
        for gamma in 0..2 {
            for chans in [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]] {
                let tf = TestFunctional::CubicWick { channels: chans, times: [s, s, s] };
                let rhs = novikov_rhs(&tf, &k, gamma, t).unwrap();
                let picks = [(2 + gamma, false), (chans[0], false), (chans[1], false), (chans[2], true)];
                let brute = brute_force_moment(&x, &e, picks);
                assert!((rhs - brute).norm() < 1e-10, "{rhs} {brute}");
            }
        }
    }

    #[test]
    fn trivial_rhs_values() {
        let k = ou(0.0, 0.0);
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let lin = TestFunctional::linear_z(0, grid.clone(), |_| c(1.0, 0.0)).unwrap();
        assert_eq!(novikov_rhs(&lin, &k, 0, 1.0).unwrap(), ZERO);
        let k2 = ou(2.0, 0.0);
        let expect = (-0.5f64).exp();
        let pt = TestFunctional::PointZStar { channel: 0, s0: 0.5 };
        assert!((novikov_rhs(&pt, &k2, 0, 1.0).unwrap() - expect).norm() < 1e-14);
        let w: Vec<f64> = trapezoid_weights(grid.times());
        let direct: Complex64 = grid.times().iter().zip(&w).map(|(&s, wi)| k2.eta(1.0, s)[(0, 0)] * *wi).sum();
        assert!((novikov_rhs(&lin, &k2, 0, 1.0).unwrap() - direct).norm() < 1e-14);
    }

    #[test]
    fn endpoint_and_channel_errors() {
        let k = ou(0.0, 0.0);
        for s0 in [0.0, 1.0, 1.5] {
            assert!(novikov_rhs(&TestFunctional::PointZStar { channel: 0, s0 }, &k, 0, 1.0).is_err());
        }
        assert!(novikov_rhs(&TestFunctional::PointZStar { channel: 1, s0: 0.5 }, &k, 0, 1.0).is_err());
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let lin = TestFunctional::linear_z(0, grid, |_| c(1.0, 0.0)).unwrap();
        assert!(novikov_rhs(&lin, &k, 0, 0.55).is_err());
        assert!(TestFunctional::linear_z(0, TimeGrid::uniform(0.0, 1.0, 4).unwrap(), |_| c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn monte_carlo_matches_rhs() {
        let kernels = [
            ou(0.0, 0.0),
            ou(2.0, 0.0),
            ou(1.0, 0.8),
            white_kernel(
                &WhiteNoiseSpec::new(CMat::from_element(1, 1, c(0.5, 0.0)), 0.1)
                    .with_convention(WhiteConvention::OneSided),
            )
            .unwrap(),
        ];
        for k in &kernels {
            for tf in standard_functionals(1.0, 20).unwrap() {
                let r = novikov_check(&tf, k, 0, 1.0, 20_000, 11).unwrap();
                assert!(r.z_score < 4.5, "{r:?}");
            }
        }
        // a wrong identity is rejected: drop the η pairings of the cubic functional
        let k = ou(2.0, 0.0);
        let tf = TestFunctional::CubicWick { channels: [0, 0, 0], times: [0.3, 0.6, 0.45] };
        let r = novikov_check(&tf, &k, 0, 1.0, 20_000, 11).unwrap();
        let partial = k.chi(1.0, 0.45)[(0, 0)].conj() * k.eta(0.3, 0.6)[(0, 0)];
        assert!((r.lhs() - partial).norm() / r.lhs_stderr > 10.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let k = ou(1.0, 0.3);
        let tf = TestFunctional::PointZStar { channel: 0, s0: 0.5 };
        let a = novikov_check(&tf, &k, 0, 1.0, 3000, 5).unwrap();
        let b = novikov_check(&tf, &k, 0, 1.0, 3000, 5).unwrap();
        assert_eq!(a, b);
    }
}
