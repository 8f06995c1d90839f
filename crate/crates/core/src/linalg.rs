//! Small dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Lowering operator |1><0|. Basis convention: index 0 is the excited state.
pub fn sigma_minus() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

pub fn sigma_plus() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// Operators addressable by name in configuration files.
pub fn named_operator(name: &str) -> Option<CMat> {
    match name {
        "sigma_x" => Some(sigma_x()),
        "sigma_y" => Some(sigma_y()),
        "sigma_z" => Some(sigma_z()),
        "sigma_minus" => Some(sigma_minus()),
        "sigma_plus" => Some(sigma_plus()),
        "identity2" => Some(identity(2)),
        "zero2" => Some(CMat::zeros(2, 2)),
        "projector_excited" => Some(CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO])),
        "projector_ground" => Some(CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE])),
        _ => None,
    }
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn hermiticity_deviation(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_deviation(u: &CMat) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n))).max(max_abs(&(u * u.adjoint() - identity(n))))
}

pub fn ensure_unitary(u: &CMat, tol: f64) -> Result<()> {
    let deviation = unitarity_deviation(u);
    if deviation <= tol {
        Ok(())
    } else {
        Err(Error::NotUnitary { deviation })
    }
}

pub fn ensure_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(h.nrows(), h.ncols());
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// exp(-i H tau) for a fixed Hermitian H, evaluated through its eigenbasis.
#[derive(Debug, Clone)]
pub struct HermitianPropagator {
    energies: Vec<f64>,
    vectors: CMat,
    vectors_adj: CMat,
}

impl HermitianPropagator {
    pub fn new(h: &CMat) -> Self {
        let (energies, vectors) = hermitian_eigen(h);
        let vectors_adj = vectors.adjoint();
        Self { energies, vectors, vectors_adj }
    }

    pub fn at(&self, tau: f64) -> CMat {
        let n = self.energies.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let phase = Complex64::from_polar(1.0, -self.energies[k] * tau);
            for r in 0..n {
                scaled[(r, k)] *= phase;
            }
        }
        scaled * &self.vectors_adj
    }
}

/// Haar-random unitary via QR of a complex Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..n {
            q[(row, k)] *= phase;
        }
    }
    q
}

/// <a|M|a>
pub fn expectation(psi: &CVec, op: &CMat) -> Complex64 {
    psi.dotc(&(op * psi))
}

pub fn outer(psi: &CVec) -> CMat {
    psi * psi.adjoint()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// y <- A x without allocating.
#[inline]
pub fn matvec_into(a: &CMat, x: &CVec, y: &mut CVec) {
    y.gemv(ONE, a, x, ZERO);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_algebra() {
        let x = sigma_x();
        let y = sigma_y();
        let z = sigma_z();
        assert!(max_abs(&(commutator(&x, &y) - z.scale(2.0) * I)) < 1e-15);
        let sm = sigma_minus();
        assert!(max_abs(&(sm.adjoint() - sigma_plus())) < 1e-15);
        // sigma_+ sigma_- projects on the excited state (index 0)
        let p = sigma_plus() * sm;
        assert_eq!(p[(0, 0)], ONE);
        assert_eq!(p[(1, 1)], ZERO);
    }

    #[test]
    fn propagator_matches_series() {
        let h = sigma_x().scale(0.7) + sigma_z().scale(0.3);
        let prop = HermitianPropagator::new(&h);
        let u = prop.at(0.9);
        assert!(unitarity_deviation(&u) < 1e-12);
        // Taylor series of exp(-i h t)
        let a = h.map(|v| v * c(0.0, -0.9));
        let mut term = identity(2);
        let mut sum = identity(2);
        for k in 1..40 {
            term = &term * &a / c(k as f64, 0.0);
            sum += &term;
        }
        assert!(max_abs(&(u - sum)) < 1e-12);
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..5 {
            let u = random_unitary(n, &mut rng);
            assert!(unitarity_deviation(&u) < 1e-12);
        }
    }

    #[test]
    fn op_norm_of_sigma_difference() {
        assert!((op_norm(&(sigma_plus() - sigma_minus())) - 1.0).abs() < 1e-14);
        assert!((op_norm(&sigma_z()) - 1.0).abs() < 1e-14);
    }
}
