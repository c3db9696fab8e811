//! Distribution samplers for the Gibbs sweep.
//!
//! Gamma-type distributions use the shape/rate convention throughout:
//! `gamma(a, b)` has mean `a/b`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{chol, chol_jittered, Eigen, PdFactor};
use crate::tensor::{increment, SymMatrix, Tensor};

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws from `gamma(shape, rate)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(unit_gamma(shape, rng)? / positive("rate", rate)?)
}

/// Draws from the inverse-gamma with shape `shape` and scale `rate`
/// (the reciprocal of a `gamma(shape, rate)` variable).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(positive("rate", rate)? / unit_gamma(shape, rng)?)
}

fn unit_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(positive("shape", shape)?, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma shape {shape}: {e}")))?;
    // Gamma draws can underflow to zero for tiny shapes; keep the support open.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Draws `x ~ N(P⁻¹h, P⁻¹)` given the Cholesky factor of the precision `P`.
pub fn sample_mvn_prec<R: Rng + ?Sized>(h: &DVector<f64>, p: &PdFactor, rng: &mut R) -> Result<DVector<f64>> {
    if h.len() != p.order() {
        return Err(Error::Dimension(format!(
            "natural mean has length {}, precision order {}",
            h.len(),
            p.order()
        )));
    }
    let mean = p.solve(h);
    let z = DVector::from_iterator(h.len(), (0..h.len()).map(|_| std_normal(rng)));
    // With P = L·Lᵀ, L⁻ᵀz has covariance P⁻¹.
    Ok(mean + p.solve_upper(&z))
}

/// Draws an effect array from its conjugate full conditional with precision
/// `γ·(⊗_d Σ_d)⁻¹ + κ·I` and mean `precision⁻¹·κ·vec(rbar)`.
///
/// `eig[d]` is the eigendecomposition of `Σ_d` for mode `d` of `rbar`. Both
/// terms of the precision are diagonal in the basis `⊗_d U_d`, so the draw
/// costs a few mode products instead of a dense factorization.
pub fn sample_effect_kron<R: Rng + ?Sized>(
    rbar: &Tensor,
    eig: &[&Eigen],
    gamma: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if eig.len() != rbar.order() {
        return Err(Error::Dimension(format!(
            "{} eigendecompositions for an order-{} array",
            eig.len(),
            rbar.order()
        )));
    }
    for (d, e) in eig.iter().enumerate() {
        if e.values.len() != rbar.dims()[d] {
            return Err(Error::Dimension(format!(
                "mode {d}: covariance order {} vs length {}",
                e.values.len(),
                rbar.dims()[d]
            )));
        }
    }
    positive("gamma", gamma)?;
    positive("kappa", kappa)?;

    let mut z = rbar.clone();
    for (d, e) in eig.iter().enumerate() {
        if !is_identity(&e.vectors) {
            z = z.mode_product(d, &e.vectors.transpose())?;
        }
    }
    let dims = rbar.dims().to_vec();
    let mut idx = vec![0usize; dims.len()];
    for w in z.data_mut().iter_mut() {
        let lambda: f64 = idx.iter().zip(eig).map(|(&i, e)| e.values[i]).product();
        let prec = gamma / lambda + kappa;
        *w = kappa * *w / prec + std_normal(rng) / prec.sqrt();
        increment(&mut idx, &dims);
    }
    for (d, e) in eig.iter().enumerate() {
        if !is_identity(&e.vectors) {
            z = z.mode_product(d, &e.vectors)?;
        }
    }
    Ok(z)
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    m.iter()
        .enumerate()
        .all(|(p, &v)| v == if p % (m.nrows() + 1) == 0 { 1.0 } else { 0.0 })
}

/// Draws from the inverse-Wishart whose mean is `S/(η − m − 1)`, written
/// inverse-Wishart`(η, S⁻¹)` in the conjugate-update notation.
///
/// Uses the Bartlett decomposition of the Wishart`(η, S⁻¹)` precision. With
/// `S = C·Cᵀ` and Bartlett factor `A`, the draw is `C·A⁻ᵀ·A⁻¹·Cᵀ`, so it
/// scales linearly in `S` under a fixed random stream.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(eta: f64, s: &SymMatrix, rng: &mut R) -> Result<SymMatrix> {
    let m = s.order();
    if !(eta > m as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse-Wishart degrees of freedom {eta} must exceed m - 1 = {}",
            m as f64 - 1.0
        )));
    }
    let (c, _) = chol_jittered(s)?;
    let a = bartlett(eta, m, rng)?;
    let a_inv = lower_inverse(&a);
    let ct = c.lower() * a_inv.transpose();
    Ok(SymMatrix::symmetrize(&ct * ct.transpose()))
}

/// Draws from the Wishart`(η, V)` with mean `η·V`.
pub fn sample_wishart<R: Rng + ?Sized>(eta: f64, v: &SymMatrix, rng: &mut R) -> Result<SymMatrix> {
    let m = v.order();
    if !(eta > m as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Wishart degrees of freedom {eta} must exceed m - 1"
        )));
    }
    let l = chol(v)?;
    let a = bartlett(eta, m, rng)?;
    let la = l.lower() * a;
    Ok(SymMatrix::symmetrize(&la * la.transpose()))
}

/// Lower-triangular Bartlett factor: `A_ii² ~ χ²(η − i)` (zero-based `i`),
/// `A_ij ~ N(0, 1)` below the diagonal.
fn bartlett<R: Rng + ?Sized>(eta: f64, m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let chi2 = 2.0 * unit_gamma((eta - i as f64) / 2.0, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    Ok(a)
}

fn lower_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / a[(j, j)];
        for i in j + 1..n {
            let mut v = 0.0;
            for k in j..i {
                v -= a[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = v / a[(i, i)];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigen;
    use crate::rng::RngStream;
    use nalgebra::dmatrix;

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn gamma_is_deterministic() {
        let a: Vec<f64> = {
            let mut rng = RngStream::new(11, 2);
            (0..5).map(|_| sample_gamma(2.0, 1.0, &mut rng).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut rng = RngStream::new(11, 2);
            (0..5).map(|_| sample_gamma(2.0, 1.0, &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn lower_inverse_is_inverse() {
        let a = dmatrix![2.0, 0.0, 0.0; 0.3, 1.5, 0.0; -0.7, 0.4, 3.0];
        let inv = lower_inverse(&a);
        assert!((&a * inv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn effect_kron_scalar_case_moments() {
        // K = 1, m = 1: N(κ r/(γ/σ² + κ), 1/(γ/σ² + κ)).
        let e = eigen(&SymMatrix::from_diagonal(&[2.0])).unwrap();
        let rbar = Tensor::from_vec(&[1], vec![1.5]).unwrap();
        let (gamma, kappa) = (1.0, 4.0);
        let prec = gamma / 2.0 + kappa;
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_effect_kron(&rbar, &[&e], gamma, kappa, &mut rng).unwrap().data()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = (1.0 / prec).sqrt();
        assert!((mean - kappa * 1.5 / prec).abs() < 4.0 * sd / (n as f64).sqrt());
        assert!((var - 1.0 / prec).abs() < 0.02 / prec);
    }

    #[test]
    fn effect_kron_infinite_shrinkage() {
        let e = eigen(&SymMatrix::new(dmatrix![1.0, 0.3; 0.3, 2.0]).unwrap()).unwrap();
        let rbar = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let mut rng = RngStream::new(9, 0);
        let x = sample_effect_kron(&rbar, &[&e, &e], 1e14, 1.0, &mut rng).unwrap();
        assert!(x.data().iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn inverse_wishart_rejects_low_dof() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_inverse_wishart(1.0, &SymMatrix::identity(2), &mut rng).is_err());
        assert!(sample_inverse_wishart(1.01, &SymMatrix::identity(2), &mut rng).is_ok());
    }
}
