//! Positive-definite factorizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::SymMatrix;

/// Cholesky factor `L` (lower triangular, `L·Lᵀ = S`) of a positive-definite matrix.
#[derive(Debug, Clone)]
pub struct PdFactor {
    lower: DMatrix<f64>,
}

/// Spectral decomposition `S = U·diag(λ)·Uᵀ` with all `λ > 0`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cholesky factorization. A pivot at or below `1e-12·trace(S)/m` is
/// reported as [`Error::NotPositiveDefinite`].
pub fn chol(s: &SymMatrix) -> Result<PdFactor> {
    let a = s.as_matrix();
    let n = a.nrows();
    let tol = 1e-12 * (a.trace() / n as f64).abs();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(PdFactor { lower: l })
}

/// Cholesky with the jitter policy: on failure, add `1e-8·trace/m` to the
/// diagonal once and retry. The flag reports whether jitter was used.
pub fn chol_jittered(s: &SymMatrix) -> Result<(PdFactor, bool)> {
    match chol(s) {
        Ok(f) => Ok((f, false)),
        Err(Error::NotPositiveDefinite { .. }) => {
            let jittered = jitter(s);
            chol(&jittered).map(|f| (f, true))
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn jitter(s: &SymMatrix) -> SymMatrix {
    let n = s.order();
    let eps = 1e-8 * s.trace().abs() / n as f64;
    let eps = if eps > 0.0 { eps } else { 1e-8 };
    SymMatrix::symmetrize(s.as_matrix() + DMatrix::<f64>::identity(n, n) * eps)
}

impl PdFactor {
    pub fn order(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Solves `L·x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.order();
        let mut x = b.clone();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.lower[(i, k)] * x[k];
            }
            x[i] = v / self.lower[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ·x = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.order();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= self.lower[(k, i)] * x[k];
            }
            x[i] = v / self.lower[(i, i)];
        }
        x
    }

    /// Solves `S·x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.order();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        SymMatrix::symmetrize(inv)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Eigendecomposition of a positive-definite matrix.
pub fn eigen(s: &SymMatrix) -> Result<Eigen> {
    let e = SymmetricEigen::new(s.as_matrix().clone());
    let n = s.order();
    let floor = 1e-12 * (s.trace() / n as f64).abs();
    if let Some((row, &v)) = e.eigenvalues.iter().enumerate().find(|(_, &v)| !(v > floor)) {
        return Err(Error::NotPositiveDefinite { row, pivot: v });
    }
    Ok(Eigen {
        values: e.eigenvalues.iter().copied().collect(),
        vectors: e.eigenvectors,
    })
}

impl Eigen {
    /// `U·diag(f(λ))·Uᵀ`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let scaled = &self.vectors * DMatrix::from_diagonal(&d);
        scaled * self.vectors.transpose()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.map_values(|v| 1.0 / v);
        (&inv + inv.transpose()) * 0.5
    }

    /// Eigendecomposition of the identity of the given order.
    pub fn identity(order: usize) -> Self {
        Eigen {
            values: vec![1.0; order],
            vectors: DMatrix::identity(order, order),
        }
    }
}
