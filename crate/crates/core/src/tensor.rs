//! Dense multiway arrays and the Kronecker / mode-product algebra used by the sampler.
//!
//! Storage is column-major: the first index varies fastest. With this
//! convention a tensor whose modes carry covariances `Σ_1, …, Σ_K` has
//! `Cov[vec(A)] = Σ_K ⊗ … ⊗ Σ_1`, and every formula in the Gibbs sampler
//! relies on that ordering. Modes are numbered from zero in this API.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest Kronecker order that [`kronecker`] will materialize.
pub const MAX_DENSE_KRONECKER: usize = 4096;

/// A dense real array with column-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    /// Wraps `data` (column-major) as a tensor of shape `dims`.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("zero-length mode in {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {dims:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut out = Tensor::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for slot in out.data.iter_mut() {
            *slot = f(&idx);
            increment(&mut idx, dims);
        }
        out
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat position of a multi-index (first index fastest).
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        linear_index(&self.dims, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let at = self.linear_index(idx);
        self.data[at] = value;
    }

    /// The column-major vectorization `vec(A)`.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Inverse of [`Tensor::vectorize`].
    pub fn reshape(dims: &[usize], vec: &[f64]) -> Result<Self> {
        Tensor::from_vec(dims, vec.to_vec())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Mode-`mode` matricization: an `m_mode × ∏_{e≠mode} m_e` matrix whose
    /// columns run over the remaining modes with lower modes varying fastest.
    pub fn matricize(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.check_mode(mode)?;
        let rows = self.dims[mode];
        let cols = self.data.len() / rows;
        let stride = stride(&self.dims, mode);
        let mut out = DMatrix::zeros(rows, cols);
        // Entry at flat position p with mode index i sits in column
        // (p mod stride) + stride * (p div (stride * rows)).
        for (p, &v) in self.data.iter().enumerate() {
            let i = (p / stride) % rows;
            let col = p % stride + stride * (p / (stride * rows));
            out[(i, col)] = v;
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::matricize`].
    pub fn unmatricize(mat: &DMatrix<f64>, dims: &[usize], mode: usize) -> Result<Self> {
        if mode >= dims.len() {
            return Err(Error::Dimension(format!(
                "mode {mode} out of range for order {}",
                dims.len()
            )));
        }
        let len: usize = dims.iter().product();
        if mat.nrows() != dims[mode] || mat.nrows() * mat.ncols() != len {
            return Err(Error::Dimension(format!(
                "{}x{} matrix does not unfold to {dims:?} along mode {mode}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let rows = dims[mode];
        let stride = stride(dims, mode);
        let mut data = vec![0.0; len];
        for (p, slot) in data.iter_mut().enumerate() {
            let i = (p / stride) % rows;
            let col = p % stride + stride * (p / (stride * rows));
            *slot = mat[(i, col)];
        }
        Tensor::from_vec(dims, data)
    }

    /// Mode product `A ×_mode B`: replaces mode `mode` (length `m`) by
    /// `B.nrows()` using the `B.nrows() × m` matrix `B`.
    pub fn mode_product(&self, mode: usize, mat: &DMatrix<f64>) -> Result<Tensor> {
        self.check_mode(mode)?;
        let m = self.dims[mode];
        if mat.ncols() != m {
            return Err(Error::Dimension(format!(
                "mode {mode} has length {m} but matrix has {} columns",
                mat.ncols()
            )));
        }
        let r = mat.nrows();
        let inner = stride(&self.dims, mode);
        let outer = self.data.len() / (inner * m);
        let mut dims = self.dims.clone();
        dims[mode] = r;
        let mut out = vec![0.0; inner * r * outer];
        for o in 0..outer {
            let src = &self.data[o * inner * m..(o + 1) * inner * m];
            let dst = &mut out[o * inner * r..(o + 1) * inner * r];
            for k in 0..m {
                let col = &src[k * inner..(k + 1) * inner];
                for i in 0..r {
                    let b = mat[(i, k)];
                    if b == 0.0 {
                        continue;
                    }
                    let row = &mut dst[i * inner..(i + 1) * inner];
                    for (d, s) in row.iter_mut().zip(col) {
                        *d += b * s;
                    }
                }
            }
        }
        Ok(Tensor { dims, data: out })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(Error::Dimension(format!(
                "mode {mode} out of range for order {}",
                self.dims.len()
            )));
        }
        Ok(())
    }
}

/// Product of the mode lengths before `mode`.
fn stride(dims: &[usize], mode: usize) -> usize {
    dims[..mode].iter().product()
}

pub(crate) fn linear_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut at = 0;
    let mut step = 1;
    for (&i, &m) in idx.iter().zip(dims) {
        debug_assert!(i < m);
        at += i * step;
        step *= m;
    }
    at
}

/// Advances a column-major multi-index; wraps to all zeros after the last.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &m) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < m {
            return;
        }
        *i = 0;
    }
}

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Accepts `m` if it is square and symmetric to 1e-12 relative tolerance,
    /// then stores the exactly symmetrized average.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(SymMatrix::symmetrize(m))
    }

    /// Stores `(m + mᵀ)/2` without checking.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(order: usize) -> Self {
        SymMatrix(DMatrix::identity(order, order))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<f64> {
        let n = self.order();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

/// Kronecker product `B_1 ⊗ B_2 ⊗ …` in the listed order.
///
/// Only meant for small oracles: orders above [`MAX_DENSE_KRONECKER`] are refused.
pub fn kronecker(factors: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let Some((first, rest)) = factors.split_first() else {
        return Ok(DMatrix::identity(1, 1));
    };
    let rows: usize = factors.iter().map(|f| f.nrows()).product();
    let cols: usize = factors.iter().map(|f| f.ncols()).product();
    if rows.max(cols) > MAX_DENSE_KRONECKER {
        return Err(Error::Dimension(format!(
            "dense Kronecker product of order {rows}x{cols} exceeds {MAX_DENSE_KRONECKER}"
        )));
    }
    let mut acc = (*first).clone();
    for f in rest {
        acc = acc.kronecker(*f);
    }
    Ok(acc)
}

/// Kronecker product of symmetric factors.
pub fn kronecker_sym(factors: &[&SymMatrix]) -> Result<SymMatrix> {
    let mats: Vec<&DMatrix<f64>> = factors.iter().map(|s| s.as_matrix()).collect();
    Ok(SymMatrix(kronecker(&mats)?))
}

/// `A_(mode) · (⊗_{e≠mode} F_e) · A_(mode)ᵀ` computed by mode products,
/// where `others` lists the (already inverted) factors `F_e` for the remaining
/// modes in increasing mode order. The Kronecker product is taken in reversed
/// mode order, matching the column ordering of [`Tensor::matricize`].
pub fn mode_quadratic(a: &Tensor, mode: usize, others: &[&DMatrix<f64>]) -> Result<SymMatrix> {
    a.check_mode(mode)?;
    if others.len() + 1 != a.order() {
        return Err(Error::Dimension(format!(
            "expected {} factors, got {}",
            a.order() - 1,
            others.len()
        )));
    }
    let mut weighted = a.clone();
    let remaining = (0..a.order()).filter(|&e| e != mode);
    for (e, f) in remaining.zip(others) {
        if f.nrows() != a.dims[e] || f.ncols() != a.dims[e] {
            return Err(Error::Dimension(format!(
                "factor for mode {e} is {}x{}, mode length {}",
                f.nrows(),
                f.ncols(),
                a.dims[e]
            )));
        }
        weighted = weighted.mode_product(e, f)?;
    }
    // Contract every mode except `mode` directly on the flat storage.
    let m = a.dims[mode];
    let inner = stride(&a.dims, mode);
    let outer = a.data.len() / (inner * m);
    let mut out = DMatrix::zeros(m, m);
    for o in 0..outer {
        let base = o * inner * m;
        for i in 0..m {
            let ai = &a.data[base + i * inner..base + (i + 1) * inner];
            for j in 0..m {
                let wj = &weighted.data[base + j * inner..base + (j + 1) * inner];
                out[(i, j)] += ai.iter().zip(wj).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    Ok(SymMatrix::symmetrize(out))
}

/// `vec(A)ᵀ (⊗_e F_e) vec(A)` for per-mode factors `F_e` listed in mode order.
pub fn full_quadratic(a: &Tensor, factors: &[&DMatrix<f64>]) -> Result<f64> {
    if factors.len() != a.order() {
        return Err(Error::Dimension(format!(
            "expected {} factors, got {}",
            a.order(),
            factors.len()
        )));
    }
    let mut weighted = a.clone();
    for (e, f) in factors.iter().enumerate() {
        weighted = weighted.mode_product(e, f)?;
    }
    Ok(a.dot(&weighted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn cube() -> Tensor {
        // A[i,j,k] = i + 2j + 4k + 1 with zero-based indices.
        Tensor::from_fn(&[2, 2, 2], |ix| (ix[0] + 2 * ix[1] + 4 * ix[2] + 1) as f64)
    }

    #[test]
    fn vectorize_is_column_major() {
        let a = Tensor::from_fn(&[2, 2], |ix| [[1.0, 2.0], [3.0, 4.0]][ix[0]][ix[1]]);
        assert_eq!(a.vectorize(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(cube().vectorize(), (1..=8).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn matricize_mode_one_rows() {
        let m = cube().matricize(0).unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(m.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 4.0, 6.0, 8.0]);
        // Column-major read of the mode-1 unfolding equals vec(A).
        assert_eq!(m.as_slice(), cube().data());
    }

    #[test]
    fn matricize_other_modes_enumerated() {
        let a = cube();
        let m2 = a.matricize(1).unwrap();
        // Row j holds entries with second index j; columns run (i, k) with i fastest.
        assert_eq!(m2.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 5.0, 6.0]);
        let m3 = a.matricize(2).unwrap();
        assert_eq!(m3.row(1).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0, 7.0, 8.0]);
        for mode in 0..3 {
            let back = Tensor::unmatricize(&a.matricize(mode).unwrap(), a.dims(), mode).unwrap();
            assert_eq!(back, a);
        }
    }

    #[test]
    fn matricize_order_one_is_column() {
        let v = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = v.matricize(0).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 1));
        assert_eq!(m.as_slice(), v.data());
    }

    #[test]
    fn mode_out_of_range_is_an_error() {
        assert!(cube().matricize(3).is_err());
        assert!(cube().mode_product(5, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn kronecker_small_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(kronecker(&[&i2, &i3]).unwrap(), DMatrix::identity(6, 6));
        let a = dmatrix![1.0, 2.0; 2.0, 5.0];
        assert_eq!(kronecker(&[&a]).unwrap(), a);
        let two = dmatrix![2.0];
        let three = dmatrix![3.0];
        assert_eq!(kronecker(&[&two, &three]).unwrap(), dmatrix![6.0]);
    }

    #[test]
    fn kronecker_guard() {
        let big = DMatrix::<f64>::identity(65, 65);
        assert!(kronecker(&[&big, &big]).is_err());
    }

    #[test]
    fn mode_product_matches_matricized_product() {
        let a = cube();
        let b = dmatrix![1.0, -1.0; 0.5, 2.0; 3.0, 0.0];
        for mode in 0..3 {
            let got = a.mode_product(mode, &b).unwrap();
            let expect = &b * a.matricize(mode).unwrap();
            let mut dims = a.dims().to_vec();
            dims[mode] = 3;
            assert_eq!(got, Tensor::unmatricize(&expect, &dims, mode).unwrap());
        }
    }

    #[test]
    fn mode_quadratic_identity_factors() {
        let a = cube();
        let i2 = DMatrix::identity(2, 2);
        let q = mode_quadratic(&a, 1, &[&i2, &i2]).unwrap();
        let m = a.matricize(1).unwrap();
        assert_eq!(q.as_matrix(), &(&m * m.transpose()));
    }

    #[test]
    fn mode_quadratic_two_by_two_dense_oracle() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let inv = dmatrix![1.0, 0.0; 0.0, 0.25];
        let q = mode_quadratic(&a, 0, &[&inv]).unwrap();
        let m = a.matricize(0).unwrap();
        let dense = &m * &inv * m.transpose();
        assert!((q.as_matrix() - dense).norm() < 1e-12);
    }

    #[test]
    fn symmetry_check() {
        assert!(SymMatrix::new(dmatrix![1.0, 2.0; 2.0 + 1e-9, 1.0]).is_err());
        assert!(SymMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).is_ok());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }
}
