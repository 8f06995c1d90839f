use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::grid::TimeGrid;
use crate::linalg::{self, c, sigma_minus, sigma_plus, sigma_z, CMat};
use crate::quadrature;

fn ou(gamma: f64, omega: f64, d: f64, d_prime: f64) -> CorrelationKernel {
    exponential_kernel(OUParams::new(gamma, omega, d, d_prime).unwrap()).unwrap()
}

fn comb(weights: &[f64], freqs: &[f64]) -> BathSpectrum {
    BathSpectrum::new(
        weights.iter().zip(freqs).map(|(&w, &f)| BathMode { g: c(w.sqrt(), 0.0), omega: f, n_thermal: 0.0 }).collect(),
    )
}

fn five_mode() -> BathSpectrum {
    comb(&[0.2; 5], &[-2.0, -1.0, 0.0, 1.0, 2.0])
}

#[test]
fn exponential_values() {
    let k = ou(1.0, 0.0, 2.0, 0.0);
    assert!((k.chi(0.3, 0.3)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    assert_eq!(k.eta(0.3, 0.3)[(0, 0)], c(0.0, 0.0));
    assert!((k.chi(1.5, 0.5)[(0, 0)].re - (-1f64).exp()).abs() < 1e-15);
    assert!((k.chi(1.5, 0.5)[(0, 0)].re - 0.367879).abs() < 1e-6);
    let real = ou(1.0, 0.0, 2.0, 2.0);
    for &(t, s) in &[(0.0, 0.0), (1.0, 0.2), (0.2, 1.7)] {
        assert!((real.chi(t, s)[(0, 0)] - real.eta(t, s)[(0, 0)]).norm() < 1e-15);
    }
}

#[test]
fn exponential_rejects_invalid() {
    assert!(OUParams::new(0.0, 0.0, 1.0, 0.0).is_err());
    assert!(OUParams::new(-1.0, 0.0, 1.0, 0.0).is_err());
    assert!(OUParams::new(1.0, 0.0, 1.0, 1.5).is_err());
    assert!(OUParams::new(1.0, 0.0, 1.0, -1.0).is_ok());
}

#[test]
fn exponential_rotating_symmetries() {
    let k = ou(0.7, 2.0, 1.3, 0.4);
    let times = [0.0, 0.4, 1.1, 2.5];
    assert!(k.symmetry_deviation(&times) < 1e-15);
    // forward lag: chi rotates as e^{+iΩτ}, eta as e^{-iΩτ}
    let tau = 0.6;
    let chi = k.chi(tau, 0.0)[(0, 0)];
    let expect = c(1.3 / 1.4, 0.0) * (c(-0.7, 2.0) * tau).exp();
    assert!((chi - expect).norm() < 1e-15);
    let eta = k.eta(tau, 0.0)[(0, 0)];
    let expect = c(0.4, 0.0) / (c(0.7, 2.0) * 2.0) * (c(-0.7, -2.0) * tau).exp();
    assert!((eta - expect).norm() < 1e-15);
}

#[test]
fn bath_single_mode_and_symmetric_comb() {
    let b = BathSpectrum::new(vec![BathMode { g: c(1.0, 0.0), omega: 2.0, n_thermal: 0.0 }]);
    let k = bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap();
    assert!((k.chi(0.7, 0.7)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);

    let b = five_mode();
    let k = bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap();
    for &tau in &[0.0, 0.3, 1.7, 4.2] {
        let fwd = k.chi(tau, 0.0)[(0, 0)];
        let back = k.chi(0.0, tau)[(0, 0)];
        // independent oracle: direct cosine sum
        let direct: f64 = [-2.0f64, -1.0, 0.0, 1.0, 2.0].iter().map(|w| 0.2 * (w * tau).cos()).sum();
        assert!(fwd.im.abs() < 1e-14);
        assert!((fwd.re - direct).abs() < 1e-14);
        assert!((fwd - back).norm() < 1e-14);
        assert_eq!(k.eta(tau, 0.0)[(0, 0)], c(0.0, 0.0));
    }
}

#[test]
fn thermal_bath_adds_counter_rotating_term() {
    let b = BathSpectrum::new(vec![BathMode { g: c(0.5, 0.0), omega: 1.0, n_thermal: 2.0 }]);
    let coupling =
        CouplingStructure { g: CMat::from_element(1, 1, c(0.5, 0.0)), h: Some(CMat::from_element(1, 1, c(0.0, 0.3))) };
    let k = bath_kernel(&b, &coupling).unwrap();
    let tau = 0.8;
    let expect = c(3.0 * 0.25, 0.0) * c(0.0, -tau).exp() + c(2.0 * 0.09, 0.0) * c(0.0, tau).exp();
    assert!((k.chi(tau, 0.0)[(0, 0)] - expect).norm() < 1e-15);
    assert!(bath_kernel(&BathSpectrum::new(vec![]), &coupling).is_err());
    let negative = BathSpectrum::new(vec![BathMode { g: c(1.0, 0.0), omega: 0.0, n_thermal: -1.0 }]);
    assert!(bath_kernel(&negative, &CouplingStructure::single_channel(&negative)).is_err());
}

#[test]
fn quadrature_identity_map_is_bath_kernel() {
    let b = five_mode();
    let cs = CouplingStructure::single_channel(&b);
    let grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.25).collect();
    let (q, residual) = quadrature_kernel(&b, &cs, &QuadratureMap::linear(CMat::identity(1, 1)), &grid).unwrap();
    assert!(residual < 1e-14);
    let bk = bath_kernel(&b, &cs).unwrap();
    for &t in &grid {
        let a = q.eval(t, 0.3);
        let e = bk.eval(t, 0.3);
        assert!(linalg::max_abs(&(a.chi - e.chi)) < 1e-14);
        assert!(linalg::max_abs(&(a.eta - e.eta)) < 1e-14);
    }
}

#[test]
fn quadrature_real_noise_symmetric_spectrum() {
    let b = comb(&[0.3, 0.2, 0.2, 0.3], &[-1.5, -0.5, 0.5, 1.5]);
    assert!(b.is_symmetric(1e-14));
    let cs = CouplingStructure::single_channel(&b);
    let grid: Vec<f64> = (0..15).map(|k| k as f64 * 0.3).collect();
    let (q, residual) = quadrature_kernel(&b, &cs, &QuadratureMap::hermitian_part(1), &grid).unwrap();
    assert!(residual < 1e-14, "residual {residual}");
    for &tau in &grid {
        let v = q.eval(tau, 0.0);
        let expect = 2.0 * (0.2 * (0.5 * tau).cos() + 0.3 * (1.5 * tau).cos());
        assert!((v.chi[(0, 0)] - c(expect, 0.0)).norm() < 1e-14);
        assert!((v.eta[(0, 0)] - c(expect, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn quadrature_asymmetric_spectrum_has_residual() {
    let b = BathSpectrum::new(vec![BathMode { g: c(1.0, 0.0), omega: 1.0, n_thermal: 0.0 }]);
    assert!(!b.is_symmetric(1e-12));
    let grid: Vec<f64> = (0..10).map(|k| k as f64 * 0.4).collect();
    let (_, residual) =
        quadrature_kernel(&b, &CouplingStructure::single_channel(&b), &QuadratureMap::hermitian_part(1), &grid)
            .unwrap();
    // oracle: |e^{-iτ} - cos τ| = |sin τ|, maximized over the grid lags
    let expect = grid.iter().flat_map(|t| grid.iter().map(move |s| (t - s).sin().abs())).fold(0.0, f64::max);
    assert!((residual - expect).abs() < 1e-14);
    assert!(residual > 0.5);
}

#[test]
fn white_kernel_normalization() {
    let eps = 0.01;
    let k = white_kernel(&WhiteNoiseSpec::new(CMat::zeros(1, 1), eps)).unwrap();
    let f = |s: f64| k.chi(0.0, s)[(0, 0)].re;
    let total = quadrature::integrate_real(f, -1.0, 0.0, 1e-13) + quadrature::integrate_real(f, 0.0, 1.0, 1e-13);
    assert!((total - 1.0).abs() < 1e-10);
    assert_eq!(k.eta(0.2, 0.21)[(0, 0)], c(0.0, 0.0));

    let k = white_kernel(&WhiteNoiseSpec::new(CMat::identity(1, 1), eps)).unwrap();
    assert_eq!(k.chi(0.1, 0.13), k.eta(0.1, 0.13));

    let one_sided =
        white_kernel(&WhiteNoiseSpec::new(CMat::zeros(1, 1), eps).with_convention(WhiteConvention::OneSided)).unwrap();
    let causal = quadrature::integrate_real(|s| one_sided.chi(1.0, s)[(0, 0)].re, 0.0, 1.0, 1e-13);
    assert!((causal - 1.0).abs() < 1e-10);
}

#[test]
fn white_kernel_whole_line_integral_at_small_epsilon() {
    let eps = 1e-3;
    let k = white_kernel(&WhiteNoiseSpec::new(CMat::zeros(1, 1), eps)).unwrap();
    let f = |s: f64| k.chi(0.5, s)[(0, 0)].re;
    let total = quadrature::integrate_real(f, -0.5, 0.5, 1e-12) + quadrature::integrate_real(f, 0.5, 1.5, 1e-12);
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn white_kernel_rejects_bad_input() {
    assert!(white_kernel(&WhiteNoiseSpec::new(CMat::zeros(1, 1), 0.0)).is_err());
    assert!(white_kernel(&WhiteNoiseSpec::new(CMat::zeros(1, 1), -1.0)).is_err());
    let asym = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    assert!(white_kernel(&WhiteNoiseSpec::new(asym, 0.1)).is_err());
}

#[test]
fn block_assembly_small_cases() {
    let one_point = TimeGrid::new(vec![0.0]).unwrap();
    let grid_kernel = |chi: Complex64, eta: Complex64| {
        CorrelationKernel::from_grid(
            1,
            GridKernelData {
                times: vec![0.0],
                chi: vec![CMat::from_element(1, 1, chi)],
                eta: vec![CMat::from_element(1, 1, eta)],
            },
        )
        .unwrap()
    };
    let kg = build_block_covariance(&grid_kernel(c(1.0, 0.0), c(1.0, 0.0)), &one_point).unwrap();
    let ones = CMat::from_element(2, 2, c(1.0, 0.0));
    assert_eq!(kg.block, ones);
    let report = check_positivity(&kg, 1e-10).unwrap();
    assert!(report.pass);
    assert!(report.min_eigenvalue.abs() < 1e-14);

    let kg = build_block_covariance(&grid_kernel(c(1.0, 0.0), c(0.0, 1.0)), &one_point).unwrap();
    let expect = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(1.0, 0.0)]);
    assert_eq!(kg.block, expect);

    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
    let kg = build_block_covariance(&ou(1.0, 0.0, 2.0, 0.0), &grid).unwrap();
    assert_eq!(kg.block.shape(), (6, 6));
    assert!(linalg::hermiticity_deviation(&kg.block) == 0.0);
    for i in 0..6 {
        assert!((kg.block[(i, i)] - c(1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn positivity_gate() {
    let grid = TimeGrid::uniform(0.0, 2.0, 9).unwrap();
    // η = χ real is admissible (rank deficient)
    let real = ou(1.0, 0.0, 2.0, 2.0);
    let r = check_kernel_positivity(&real, &grid, DEFAULT_POSITIVITY_TOL).unwrap();
    assert!(r.pass && r.min_eigenvalue >= -1e-10, "{r:?}");
    // η forced equal to the complex χ of a rotating OU process is not
    let locked = ou(1.0, 2.0, 2.0, 2.0).eta_locked_to_chi();
    let r = check_kernel_positivity(&locked, &grid, DEFAULT_POSITIVITY_TOL).unwrap();
    assert!(!r.pass, "{r:?}");
    assert!(r.min_eigenvalue < -1e-3);
    // the rotating OU process itself (real driving noise) is a valid kernel
    let r = check_kernel_positivity(&ou(1.0, 2.0, 2.0, 2.0), &grid, DEFAULT_POSITIVITY_TOL).unwrap();
    assert!(r.pass, "{r:?}");
    let b = five_mode();
    let k = bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap();
    assert!(check_kernel_positivity(&k, &grid, DEFAULT_POSITIVITY_TOL).unwrap().pass);
}

#[test]
fn real_embedding_agrees_with_complex_block_sign() {
    // The real covariance of (x, y) is unitarily similar to half the complex block.
    let grid = TimeGrid::uniform(0.0, 1.0, 6).unwrap();
    for k in [ou(1.0, 2.0, 2.0, 2.0).eta_locked_to_chi(), ou(1.0, 0.5, 2.0, 1.0)] {
        let complex_min = check_kernel_positivity(&k, &grid, 0.0).unwrap().min_eigenvalue;
        let nt = grid.len();
        let mut real = nalgebra::DMatrix::<f64>::zeros(2 * nt, 2 * nt);
        for (i, &t) in grid.times().iter().enumerate() {
            for (j, &s) in grid.times().iter().enumerate() {
                let v = k.eval(t, s);
                let (chi, eta) = (v.chi[(0, 0)], v.eta[(0, 0)]);
                real[(i, j)] = 0.5 * (chi + eta).re;
                real[(nt + i, nt + j)] = 0.5 * (chi - eta).re;
                real[(i, nt + j)] = 0.5 * (chi + eta).im;
                real[(nt + i, j)] = 0.5 * (eta - chi).im;
            }
        }
        let sym = (&real + real.transpose()) * 0.5;
        let real_min = sym.symmetric_eigenvalues().min();
        assert!((2.0 * real_min - complex_min).abs() < 1e-12, "{real_min} vs {complex_min}");
    }
}

#[test]
fn hermitian_equality_residual_cases() {
    let real = ou(1.0, 0.0, 2.0, 2.0);
    assert!(hermitian_equality_residual(&real, &[sigma_z()], 1.0, 0.4).unwrap() < 1e-15);
    let k = ou(1.0, 0.0, 2.0, 0.0);
    let r = hermitian_equality_residual(&k, &[sigma_z()], 1.0, 0.4).unwrap();
    assert!((r - k.chi(1.0, 0.4)[(0, 0)].norm()).abs() < 1e-14);
    let r = hermitian_equality_residual(&real, &[sigma_minus()], 1.0, 0.4).unwrap();
    let expect = real.chi(1.0, 0.4)[(0, 0)].norm() * linalg::op_norm(&(sigma_plus() - sigma_minus()));
    assert!((r - expect).abs() < 1e-14);
    assert!(hermitian_equality_residual(&real, &[sigma_z(), sigma_z()], 1.0, 0.4).is_err());
}

#[test]
fn transform_cases() {
    let k = ou(1.0, 0.5, 2.0, 1.0);
    let same = kernel_transform(&k, &CMat::identity(1, 1)).unwrap();
    assert_eq!(same.eval(0.7, 0.2), k.eval(0.7, 0.2));

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]);
    let white = white_kernel(&WhiteNoiseSpec::new(CMat::zeros(2, 2), 0.05)).unwrap();
    let t = kernel_transform(&white, &hadamard).unwrap();
    for &(a, b) in &[(0.0, 0.0), (0.3, 0.31), (1.0, 0.2)] {
        let v = t.eval(a, b);
        assert!(linalg::max_abs(&(v.chi - white.chi(a, b))) < 1e-14);
        assert!(linalg::max_abs(&v.eta) == 0.0);
    }
    let not_unitary = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    assert!(kernel_transform(&white, &not_unitary).is_err());
    assert!(kernel_transform(&k, &hadamard).is_err());
}

#[test]
fn grid_kernel_csv_round_trip() {
    let k = ou(1.0, 0.8, 2.0, 1.0);
    let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let mut buf = Vec::new();
    write_grid_kernel_csv(&mut buf, &k, &times).unwrap();
    let back = read_grid_kernel_csv(buf.as_slice(), &times, 1).unwrap();
    assert_eq!(back.descriptor(), Descriptor::CustomGrid);
    for &t in &times {
        for &s in &times {
            assert!(linalg::max_abs(&(back.chi(t, s) - k.chi(t, s))) < 1e-15);
            assert!(linalg::max_abs(&(back.eta(t, s) - k.eta(t, s))) < 1e-15);
        }
    }
    // bilinear interpolation between nodes
    let mid = back.chi(0.125, 0.0)[(0, 0)];
    let expect = (k.chi(0.0, 0.0)[(0, 0)] + k.chi(0.25, 0.0)[(0, 0)]) * 0.5;
    assert!((mid - expect).norm() < 1e-15);
}

#[test]
fn grid_kernel_csv_fills_mirror_triangle() {
    let mut csv = String::from("i,j,alpha,beta,re_chi,im_chi,re_eta,im_eta\n");
    csv.push_str("0,0,0,0,1,0,0.5,0\n1,1,0,0,1,0,0.5,0\n1,0,0,0,0.5,0.25,0.1,0.2\n");
    let k = read_grid_kernel_csv(csv.as_bytes(), &[0.0, 1.0], 1).unwrap();
    assert_eq!(k.chi(0.0, 1.0)[(0, 0)], c(0.5, -0.25));
    assert_eq!(k.eta(0.0, 1.0)[(0, 0)], c(0.1, 0.2));
    let missing = "i,j,alpha,beta,re_chi,im_chi,re_eta,im_eta\n0,0,0,0,1,0,0,0\n";
    assert!(read_grid_kernel_csv(missing.as_bytes(), &[0.0, 1.0], 1).is_err());
    let out_of_range = "i,j,alpha,beta,re_chi,im_chi,re_eta,im_eta\n3,0,0,0,1,0,0,0\n";
    assert!(read_grid_kernel_csv(out_of_range.as_bytes(), &[0.0, 1.0], 1).is_err());
}

#[test]
fn markov_forms() {
    let k = ou(1.5, 0.5, 2.0, 1.0);
    let f = k.markov_form().unwrap();
    assert_eq!(f.gamma, 1.5);
    let white = white_kernel(&WhiteNoiseSpec::new(CMat::identity(1, 1), 0.01)).unwrap();
    let f = white.markov_form().unwrap();
    assert!((f.gamma - 100.0).abs() < 1e-12);
    let block = CorrelationKernel::block_diagonal(vec![ou(1.0, 0.0, 2.0, 0.0), ou(1.0, 0.0, 1.0, 1.0)]).unwrap();
    assert_eq!(block.markov_form().unwrap().p.shape(), (2, 2));
    let mixed = CorrelationKernel::block_diagonal(vec![ou(1.0, 0.0, 2.0, 0.0), ou(2.0, 0.0, 1.0, 1.0)]).unwrap();
    assert!(mixed.markov_form().is_none());
    assert!(ou(1.0, 2.0, 2.0, 2.0).eta_locked_to_chi().markov_form().is_none());
    let b = five_mode();
    assert!(bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap().markov_form().is_none());
}

#[test]
fn exponential_terms_reproduce_causal_kernel() {
    let b = five_mode();
    let u = linalg::random_unitary(2, &mut rand::rngs::StdRng::seed_from_u64(3));
    let two = CorrelationKernel::block_diagonal(vec![ou(1.0, 0.7, 2.0, 1.0), ou(0.5, 0.0, 1.0, -1.0)]).unwrap();
    let kernels = vec![
        ou(1.5, -0.5, 2.0, 1.0),
        white_kernel(&WhiteNoiseSpec::new(CMat::identity(1, 1), 0.05)).unwrap(),
        bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap(),
        kernel_transform(&two, &u).unwrap(),
        ou(1.0, 2.0, 2.0, 2.0).eta_locked_to_chi(),
    ];
    for k in &kernels {
        let terms = k.exponential_terms().unwrap();
        for (t, s) in [(0.0, 0.0), (0.8, 0.3), (2.0, 0.1)] {
            let v = k.eval(t, s);
            let mut chi = CMat::zeros(k.n_channels(), k.n_channels());
            let mut eta = chi.clone();
            for term in &terms {
                let w = (-term.mu * (t - s)).exp();
                chi += &term.chi * w;
                eta += &term.eta * w;
            }
            assert!(linalg::max_abs(&(chi - v.chi)) < 1e-13);
            assert!(linalg::max_abs(&(eta - v.eta)) < 1e-13);
        }
    }
    assert!(ou(1.0, 0.0, 2.0, 0.0).with_envelope(Envelope::new(|t| t)).exponential_terms().is_none());
}

#[test]
fn envelope_scales_both_kernels() {
    let k = ou(1.0, 0.0, 2.0, 1.0).with_envelope(Envelope::new(|t| 1.0 + t));
    assert!(!k.is_stationary());
    let plain = ou(1.0, 0.0, 2.0, 1.0);
    let v = k.eval(1.0, 0.5);
    assert!((v.chi[(0, 0)] - plain.chi(1.0, 0.5)[(0, 0)] * 3.0).norm() < 1e-15);
    assert!((v.eta[(0, 0)] - plain.eta(1.0, 0.5)[(0, 0)] * 3.0).norm() < 1e-15);
}

#[test]
fn kernel_spec_round_trip_and_build() {
    let json = r#"{"type":"exponential","gamma":1.0,"d":2.0,"d_prime":2.0,"eta":"equal-chi"}"#;
    let spec: KernelSpec = serde_json::from_str(json).unwrap();
    let again: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(spec, again);
    let k = spec.build(std::path::Path::new(".")).unwrap();
    assert_eq!(k.chi(0.5, 0.1), k.eta(0.5, 0.1));

    let json = r#"{"type":"quadrature-bath","modes":[{"g":1.0,"omega":1.0}],"n":"identity2","real_noise":true}"#;
    let spec: KernelSpec = serde_json::from_str(json).unwrap();
    assert!(spec.build(std::path::Path::new(".")).is_err());
    assert!(serde_json::from_str::<KernelSpec>(r#"{"type":"exponential","gamma":1.0}"#).is_err());
    assert!(serde_json::from_str::<KernelSpec>(r#"{"type":"mystery"}"#).is_err());
}

fn kernel_strategy() -> impl Strategy<Value = CorrelationKernel> {
    prop_oneof![
        (0.1f64..3.0, 0.0f64..3.0, -1.0f64..1.0).prop_map(|(g, d, r)| ou(g, 0.0, d, r * d)),
        (0.1f64..3.0, -3.0f64..3.0, 0.0f64..3.0, -1.0f64..1.0).prop_map(|(g, w, d, r)| ou(g, w, d, r * d)),
        proptest::collection::vec((0.0f64..1.0, -3.0f64..3.0), 1..6).prop_map(|modes| {
            let b = BathSpectrum::new(
                modes.iter().map(|&(g, w)| BathMode { g: c(g, 0.3 * g), omega: w, n_thermal: 0.0 }).collect(),
            );
            bath_kernel(&b, &CouplingStructure::single_channel(&b)).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn blocks_are_hermitian_and_admissible_families_pass(
        k in kernel_strategy(),
        steps in 1usize..10,
        span in 0.1f64..4.0,
    ) {
        let grid = TimeGrid::uniform(0.0, span, steps).unwrap();
        let kg = build_block_covariance(&k, &grid).unwrap();
        prop_assert_eq!(linalg::hermiticity_deviation(&kg.block), 0.0);
        prop_assert!(k.symmetry_deviation(grid.times()) < 1e-13);
        let r = check_kernel_positivity(&k, &grid, DEFAULT_POSITIVITY_TOL).unwrap();
        // OU with Ω = 0 and every vacuum bath are admissible on every grid
        if k.descriptor() == Descriptor::BathSpectrum || k.markov_form().is_some_and(|f| f.omega == 0.0) {
            prop_assert!(r.pass, "{:?}", r);
        }
    }

    #[test]
    fn transform_then_inverse_is_identity(seed in any::<u64>(), t in 0.0f64..3.0, s in 0.0f64..3.0) {

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = linalg::random_unitary(2, &mut rng);
        let k = CorrelationKernel::block_diagonal(vec![ou(1.0, 0.5, 2.0, 1.0), ou(0.5, -1.0, 1.0, -0.5)]).unwrap();
        let back = kernel_transform(&kernel_transform(&k, &u).unwrap(), &u.adjoint()).unwrap();
        let (a, b) = (back.eval(t, s), k.eval(t, s));
        prop_assert!(linalg::max_abs(&(a.chi - b.chi)) < 1e-10);
        prop_assert!(linalg::max_abs(&(a.eta - b.eta)) < 1e-10);
    }

    #[test]
    fn hermitian_real_equal_kernels_cancel(g in 0.1f64..3.0, d in 0.1f64..3.0, t in 0.0f64..3.0, s in 0.0f64..3.0,
                                           hx in -1.0f64..1.0, hz in -1.0f64..1.0) {
        let k = ou(g, 0.0, d, d);
        let l = linalg::sigma_x().scale(hx) + sigma_z().scale(hz);
        prop_assert!(hermitian_equality_residual(&k, &[l], t, s).unwrap() < 1e-12);
    }
}
