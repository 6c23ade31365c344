//! Small matrix type with cheap isotropic and diagonal cases.
//!
//! Covariances, Stein kernel values and linear maps all share this
//! representation so that the common `c·Id` case never materialises a
//! dense `d×d` array inside Monte Carlo loops.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Mat {
    /// `c · Id_d`
    Scalar { d: usize, c: f64 },
    /// `diag(v)`
    Diag(Vec<f64>),
    /// General (possibly rectangular) matrix.
    Dense(DMatrix<f64>),
}

impl Mat {
    pub fn identity(d: usize) -> Self {
        Mat::Scalar { d, c: 1.0 }
    }

    pub fn scalar(d: usize, c: f64) -> Self {
        Mat::Scalar { d, c }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return param("empty matrix");
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return param("ragged matrix rows");
        }
        Ok(Mat::Dense(DMatrix::from_fn(r, c, |i, j| rows[i][j])))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Mat::Scalar { d, .. } => *d,
            Mat::Diag(v) => v.len(),
            Mat::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Mat::Scalar { d, .. } => *d,
            Mat::Diag(v) => v.len(),
            Mat::Dense(m) => m.ncols(),
        }
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Mat::Scalar { c, .. } => {
                if i == j {
                    *c
                } else {
                    0.0
                }
            }
            Mat::Diag(v) => {
                if i == j {
                    v[i]
                } else {
                    0.0
                }
            }
            Mat::Dense(m) => m[(i, j)],
        }
    }

    pub fn diag_entry(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn is_diagonal(&self) -> bool {
        match self {
            Mat::Scalar { .. } | Mat::Diag(_) => true,
            Mat::Dense(m) => {
                m.is_square()
                    && (0..m.nrows())
                        .all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
            }
        }
    }

    /// Returns `Some(c)` when the matrix equals `c·Id`.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Mat::Scalar { c, .. } => Some(*c),
            Mat::Diag(v) => {
                let c = *v.first()?;
                v.iter().all(|&x| x == c).then_some(c)
            }
            Mat::Dense(m) => {
                if !self.is_diagonal() || m.nrows() == 0 {
                    return None;
                }
                let c = m[(0, 0)];
                (0..m.nrows()).all(|i| m[(i, i)] == c).then_some(c)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Mat::Scalar { d, c } => DMatrix::from_diagonal_element(*d, *d, *c),
            Mat::Diag(v) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)),
            Mat::Dense(m) => m.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Mat::Scalar { d, c } => *d as f64 * c,
            Mat::Diag(v) => v.iter().sum(),
            Mat::Dense(m) => m.trace(),
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        match self {
            Mat::Scalar { d, c } => Mat::Scalar { d: *d, c: c * s },
            Mat::Diag(v) => Mat::Diag(v.iter().map(|x| x * s).collect()),
            Mat::Dense(m) => Mat::Dense(m * s),
        }
    }

    pub fn transpose(&self) -> Mat {
        match self {
            Mat::Dense(m) => Mat::Dense(m.transpose()),
            other => other.clone(),
        }
    }

    /// `out = self · x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Mat::Scalar { c, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = c * v;
                }
            }
            Mat::Diag(dv) => {
                for ((o, v), s) in out.iter_mut().zip(x).zip(dv) {
                    *o = s * v;
                }
            }
            Mat::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, v) in x.iter().enumerate() {
                        acc += m[(i, j)] * v;
                    }
                    *o = acc;
                }
            }
        }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        use Mat::*;
        match (self, other) {
            (Scalar { c: a, .. }, m) => m.scale(*a),
            (m, Scalar { c: b, .. }) => m.scale(*b),
            (Diag(a), Diag(b)) => Diag(a.iter().zip(b).map(|(x, y)| x * y).collect()),
            _ => Dense(self.to_dense() * other.to_dense()),
        }
    }

    /// `self · m · selfᵀ`
    pub fn congruence(&self, m: &Mat) -> Mat {
        self.mul(m).mul(&self.transpose())
    }

    pub fn add(&self, other: &Mat) -> Mat {
        use Mat::*;
        match (self, other) {
            (Scalar { d, c: a }, Scalar { c: b, .. }) => Scalar { d: *d, c: a + b },
            (Scalar { c, .. }, Diag(v)) | (Diag(v), Scalar { c, .. }) => {
                Diag(v.iter().map(|x| x + c).collect())
            }
            (Diag(a), Diag(b)) => Diag(a.iter().zip(b).map(|(x, y)| x + y).collect()),
            _ => Dense(self.to_dense() + other.to_dense()),
        }
    }

    /// `Σ_ij self_ij · other_ij`
    pub fn frobenius_inner(&self, other: &Mat) -> f64 {
        use Mat::*;
        match (self, other) {
            (Scalar { d, c: a }, Scalar { c: b, .. }) => *d as f64 * a * b,
            (Scalar { c, .. }, m) | (m, Scalar { c, .. }) => c * m.trace(),
            (Diag(a), Diag(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (Diag(v), Dense(m)) | (Dense(m), Diag(v)) => {
                v.iter().enumerate().map(|(i, x)| x * m[(i, i)]).sum()
            }
            (Dense(a), Dense(b)) => a.component_mul(b).sum(),
        }
    }

    /// `‖self − other‖²_F`
    pub fn frobenius_dist2(&self, other: &Mat) -> f64 {
        use Mat::*;
        match (self, other) {
            (Scalar { d, c: a }, Scalar { c: b, .. }) => *d as f64 * (a - b).powi(2),
            (Scalar { c, .. }, Diag(v)) | (Diag(v), Scalar { c, .. }) => {
                v.iter().map(|x| (x - c).powi(2)).sum()
            }
            (Diag(a), Diag(b)) => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum(),
            _ => (self.to_dense() - other.to_dense()).norm_squared(),
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        match self {
            Mat::Scalar { c, .. } => c * x.iter().map(|v| v * v).sum::<f64>(),
            Mat::Diag(v) => v.iter().zip(x).map(|(s, y)| s * y * y).sum(),
            Mat::Dense(m) => {
                let mut acc = 0.0;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        acc += x[i] * m[(i, j)] * x[j];
                    }
                }
                acc
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        match self {
            Mat::Dense(m) => {
                m.is_square()
                    && (0..m.nrows()).all(|i| {
                        (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs()))
                    })
            }
            _ => true,
        }
    }

    fn eigenvalues(&self) -> Vec<f64> {
        match self {
            Mat::Scalar { d, c } => vec![*c; *d],
            Mat::Diag(v) => v.clone(),
            Mat::Dense(m) => SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_psd(&self, what: &str) -> Result<()> {
        if !self.is_square() || !self.is_symmetric(1e-10) {
            return param(format!("{what} must be square and symmetric"));
        }
        let scale = self.max_eigenvalue().abs().max(1.0);
        if self.min_eigenvalue() < -1e-10 * scale {
            return param(format!("{what} is not positive semidefinite"));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Mat> {
        match self {
            Mat::Scalar { d, c } if *c != 0.0 => Ok(Mat::Scalar { d: *d, c: 1.0 / c }),
            Mat::Diag(v) if v.iter().all(|x| *x != 0.0) => {
                Ok(Mat::Diag(v.iter().map(|x| 1.0 / x).collect()))
            }
            Mat::Dense(m) if m.is_square() => {
                let lu = m.clone().lu();
                let det = lu.determinant();
                let scale = m.abs().max().powi(m.nrows() as i32).max(f64::MIN_POSITIVE);
                if det.abs() <= 1e-13 * scale {
                    return param("matrix is singular");
                }
                lu.try_inverse().map(Mat::Dense).ok_or_else(|| {
                    crate::error::Error::Parameter("matrix is singular".into())
                })
            }
            _ => param("matrix is singular or not square"),
        }
    }

    /// Lower Cholesky-type factor `L` with `self = L Lᵀ`.
    pub fn cholesky(&self) -> Result<Mat> {
        match self {
            Mat::Scalar { d, c } if *c > 0.0 => Ok(Mat::Scalar { d: *d, c: c.sqrt() }),
            Mat::Diag(v) if v.iter().all(|x| *x > 0.0) => {
                Ok(Mat::Diag(v.iter().map(|x| x.sqrt()).collect()))
            }
            Mat::Dense(m) => m
                .clone()
                .cholesky()
                .map(|c| Mat::Dense(c.l()))
                .ok_or_else(|| crate::error::Error::Parameter("matrix is not positive definite".into())),
            _ => param("matrix is not positive definite"),
        }
    }

    pub fn log_det(&self) -> Result<f64> {
        match self {
            Mat::Scalar { d, c } if *c > 0.0 => Ok(*d as f64 * c.ln()),
            Mat::Diag(v) if v.iter().all(|x| *x > 0.0) => Ok(v.iter().map(|x| x.ln()).sum()),
            Mat::Dense(_) => {
                let l = self.cholesky()?.to_dense();
                Ok(2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>())
            }
            _ => param("log-determinant of a matrix that is not positive definite"),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols()).map(|j| self.get(i, j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_dense_agree() {
        let s = Mat::scalar(3, 2.0);
        let d = Mat::Dense(s.to_dense());
        let x = [1.0, -2.0, 0.5];
        assert_eq!(s.quad_form(&x), d.quad_form(&x));
        assert_eq!(s.trace(), d.trace());
        assert!((s.frobenius_dist2(&Mat::Diag(vec![1.0, 2.0, 3.0])) - 2.0).abs() < 1e-15);
        assert_eq!(d.as_scalar(), Some(2.0));
    }

    #[test]
    fn inverse_and_cholesky() {
        let m = Mat::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = m.inverse().unwrap();
        let prod = m.mul(&inv).to_dense();
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-14);
        let l = m.cholesky().unwrap();
        assert!((l.mul(&l.transpose()).to_dense() - m.to_dense()).norm() < 1e-14);
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap().inverse().is_err());
    }
}
