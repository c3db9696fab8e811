use nalgebra::{DMatrix, DVector};

use ha_array::linalg::{chol, eigen};
use ha_array::samplers::{
    sample_effect_kron, sample_gamma, sample_inverse_gamma, sample_inverse_wishart, sample_mvn_prec, sample_wishart,
};
use ha_array::tensor::kronecker;
use ha_array::{RngStream, SymMatrix, Tensor};

fn sym(rows: usize, v: &[f64]) -> SymMatrix {
    SymMatrix::new(DMatrix::from_row_slice(rows, rows, v)).unwrap()
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn gamma_uses_rate() {
    let mut rng = RngStream::new(1, 0);
    let x: Vec<f64> = (0..100_000).map(|_| sample_gamma(3.0, 2.0, &mut rng).unwrap()).collect();
    let (m, v) = moments(&x);
    // mean 3/2, variance 3/4
    assert!((m - 1.5).abs() < 0.02, "{m}");
    assert!((v - 0.75).abs() < 0.03, "{v}");
}

#[test]
fn inverse_gamma_mean() {
    let mut rng = RngStream::new(2, 0);
    let x: Vec<f64> = (0..100_000).map(|_| sample_inverse_gamma(4.0, 6.0, &mut rng).unwrap()).collect();
    // b/(a − 1) = 2
    assert!((moments(&x).0 - 2.0).abs() < 0.03);
}

#[test]
fn bad_parameters_are_errors() {
    let mut rng = RngStream::new(3, 0);
    assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
    assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
    assert!(sample_gamma(1.0, f64::INFINITY, &mut rng).is_err());
    assert!(sample_inverse_wishart(0.5, &SymMatrix::identity(2), &mut rng).is_err());
}

#[test]
fn mvn_from_precision() {
    let p = sym(2, &[2.0, 0.5, 0.5, 1.0]);
    let h = DVector::from_vec(vec![1.0, -1.0]);
    let cov = p.as_matrix().clone().try_inverse().unwrap();
    let mean = &cov * &h;
    let f = chol(&p).unwrap();
    let mut rng = RngStream::new(4, 0);
    let n = 100_000;
    let mut sum = DVector::zeros(2);
    let mut cross = DMatrix::zeros(2, 2);
    for _ in 0..n {
        let x = sample_mvn_prec(&h, &f, &mut rng).unwrap();
        sum += &x;
        cross += &x * x.transpose();
    }
    let m = sum / n as f64;
    let c = cross / n as f64 - &m * m.transpose();
    assert!((&m - &mean).amax() < 0.02);
    assert!((&c - &cov).amax() < 0.02);
}

#[test]
fn kron_effect_draw_matches_dense_precision() {
    // Dense oracle: precision γ(Σ2 ⊗ Σ1)⁻¹ + κI on the vectorized 2×3 array.
    let s1 = sym(2, &[1.0, 0.3, 0.3, 0.5]);
    let s2 = sym(3, &[2.0, 0.4, 0.1, 0.4, 1.0, -0.2, 0.1, -0.2, 0.8]);
    let (gamma, kappa) = (1.5, 2.0);
    let rbar = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 0.2, 0.0, 1.1, -0.3]).unwrap();
    let k = kronecker(&[s2.as_matrix(), s1.as_matrix()]).unwrap();
    let prec = k.try_inverse().unwrap() * gamma + DMatrix::identity(6, 6) * kappa;
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * DVector::from_column_slice(rbar.data()) * kappa;
    let (e1, e2) = (eigen(&s1).unwrap(), eigen(&s2).unwrap());
    let mut rng = RngStream::new(5, 0);
    let n = 100_000;
    let mut sum = DVector::zeros(6);
    let mut cross = DMatrix::zeros(6, 6);
    for _ in 0..n {
        let x = DVector::from_vec(sample_effect_kron(&rbar, &[&e1, &e2], gamma, kappa, &mut rng).unwrap().into_vec());
        sum += &x;
        cross += &x * x.transpose();
    }
    let m = sum / n as f64;
    let c = cross / n as f64 - &m * m.transpose();
    let tol = 4.0 * (cov.diagonal().max() / n as f64).sqrt();
    assert!((&m - &mean).amax() < tol, "{}", (&m - &mean).amax());
    assert!((&c - &cov).amax() < 0.01, "{}", (&c - &cov).amax());
}

#[test]
fn kron_effect_draw_checks_shapes() {
    let e = eigen(&SymMatrix::identity(3)).unwrap();
    let rbar = Tensor::zeros(&[2, 3]);
    let mut rng = RngStream::new(6, 0);
    assert!(sample_effect_kron(&rbar, &[&e, &e], 1.0, 1.0, &mut rng).is_err());
    assert!(sample_effect_kron(&rbar, &[&e], 1.0, 1.0, &mut rng).is_err());
}

#[test]
fn wishart_and_inverse_wishart_means() {
    let s = sym(3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.5]);
    let mut rng = RngStream::new(7, 0);
    let n = 40_000;
    let (mut w, mut iw) = (DMatrix::zeros(3, 3), DMatrix::zeros(3, 3));
    for _ in 0..n {
        w += sample_wishart(6.0, &s, &mut rng).unwrap().as_matrix();
        iw += sample_inverse_wishart(10.0, &s, &mut rng).unwrap().as_matrix();
    }
    let w_target = s.as_matrix() * 6.0;
    let iw_target = s.as_matrix() / 6.0;
    assert!((w / n as f64 - &w_target).amax() < 0.05 * w_target.amax());
    assert!((iw / n as f64 - &iw_target).amax() < 0.03 * iw_target.amax());
}

#[test]
fn inverse_wishart_scales_linearly_under_a_fixed_stream() {
    let s = sym(2, &[1.0, 0.2, 0.2, 0.7]);
    let a = sample_inverse_wishart(5.0, &s, &mut RngStream::new(8, 0)).unwrap();
    let b = sample_inverse_wishart(5.0, &s.scale(4.0), &mut RngStream::new(8, 0)).unwrap();
    assert!((a.as_matrix() * 4.0 - b.as_matrix()).amax() < 1e-12);
}
