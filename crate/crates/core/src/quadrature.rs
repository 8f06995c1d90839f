//! Adaptive Gauss-Kronrod (7/15) quadrature for complex, vector-valued integrands,
//! plus trapezoid weights for sampled data.

use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_DEPTH: u32 = 30;

/// Integrates a vector-valued integrand `f(x, out)` over `[a, b]` until the
/// Kronrod/Gauss difference per panel is below `tol` (absolute, scaled by panel width).
pub fn integrate_vec<F>(f: &F, a: f64, b: f64, len: usize, tol: f64) -> Vec<Complex64>
where
    F: Fn(f64, &mut [Complex64]),
{
    let mut total = vec![Complex64::new(0.0, 0.0); len];
    if b == a || len == 0 {
        return total;
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); len];
    recurse(f, a, b, tol, 0, &mut total, &mut scratch);
    total
}

pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let g = |x: f64, out: &mut [Complex64]| out[0] = f(x);
    integrate_vec(&g, a, b, 1, tol)[0]
}

pub fn integrate_real<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(f(x), 0.0), a, b, tol).re
}

fn recurse<F>(f: &F, a: f64, b: f64, tol: f64, depth: u32, total: &mut [Complex64], scratch: &mut [Complex64])
where
    F: Fn(f64, &mut [Complex64]),
{
    let len = total.len();
    let (kronrod, err) = panel(f, a, b, len, scratch);
    // the relative floor stops refinement once K - G is pure rounding
    let scale = kronrod.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if err <= tol.max(f64::EPSILON * 16.0) * ((b - a).abs().max(1e-300))
        || err <= 64.0 * f64::EPSILON * scale
        || depth >= MAX_DEPTH
    {
        for (t, k) in total.iter_mut().zip(kronrod.iter()) {
            *t += k;
        }
        return;
    }
    let mid = 0.5 * (a + b);
    recurse(f, a, mid, tol, depth + 1, total, scratch);
    recurse(f, mid, b, tol, depth + 1, total, scratch);
}

fn panel<F>(f: &F, a: f64, b: f64, len: usize, scratch: &mut [Complex64]) -> (Vec<Complex64>, f64)
where
    F: Fn(f64, &mut [Complex64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![Complex64::new(0.0, 0.0); len];
    let mut gauss = vec![Complex64::new(0.0, 0.0); len];

    f(center, scratch);
    for i in 0..len {
        kronrod[i] += scratch[i] * WGK[7];
        gauss[i] += scratch[i] * WG[3];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for &x in &[center - dx, center + dx] {
            f(x, scratch);
            for i in 0..len {
                kronrod[i] += scratch[i] * WGK[j];
                // odd Kronrod nodes are the Gauss nodes
                if j % 2 == 1 {
                    gauss[i] += scratch[i] * WG[j / 2];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..len {
        kronrod[i] *= half;
        gauss[i] *= half;
        err = err.max((kronrod[i] - gauss[i]).norm());
    }
    (kronrod, err)
}

/// Composite trapezoid weights for (possibly non-uniform) sample points.
pub fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = points[k] - points[k - 1];
        w[k - 1] += 0.5 * h;
        w[k] += 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = integrate_real(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-13);
        assert!((v - (4.0 - 4.0)).abs() < 1e-13);
        let e = integrate(|x| Complex64::new(0.0, x).exp(), 0.0, 1.0, 1e-13);
        let exact = Complex64::new(1f64.sin(), 1.0 - 1f64.cos());
        assert!((e - exact).norm() < 1e-13);
    }

    #[test]
    fn sharply_peaked_integrand() {
        let eps = 1e-3;
        let v = integrate_real(|s| (-(1.0 - s) / eps).exp() / eps, 0.0, 1.0, 1e-12);
        assert!((v - (1.0 - (-1.0 / eps).exp())).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let pts = [0.0, 0.1, 0.3, 0.35, 1.0];
        let w = trapezoid_weights(&pts);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
