//! Vector fields `f: R^d → R^d` with Jacobian access.
//!
//! These serve both as test functions in Stein-type identities and as the
//! perturbation `f` of an estimator `S(x) = x + f(x)`.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Squared norms at or below this value are treated as singular.
pub const SINGULAR_NORM2: f64 = 1e-12;

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// `∂_j f_i(x)`
    fn partial(&self, i: usize, j: usize, x: &[f64]) -> Result<f64>;

    fn divergence(&self, x: &[f64]) -> Result<f64> {
        (0..self.dim()).map(|i| self.partial(i, i, x)).sum()
    }

    /// `⟨M, ∇f(x)⟩ = Σ_ij M_ij ∂_j f_i(x)`
    fn jacobian_inner(&self, m: &Mat, x: &[f64]) -> Result<f64> {
        match m {
            Mat::Scalar { c, .. } => Ok(c * self.divergence(x)?),
            Mat::Diag(v) => {
                let mut acc = 0.0;
                for (i, s) in v.iter().enumerate() {
                    if *s != 0.0 {
                        acc += s * self.partial(i, i, x)?;
                    }
                }
                Ok(acc)
            }
            Mat::Dense(a) => {
                let mut acc = 0.0;
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        if a[(i, j)] != 0.0 {
                            acc += a[(i, j)] * self.partial(i, j, x)?;
                        }
                    }
                }
                Ok(acc)
            }
        }
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn guard_norm2(x: &[f64]) -> Result<f64> {
    let n2 = norm2(x);
    if n2 <= SINGULAR_NORM2 {
        return Err(Error::Singular(format!("‖x‖² = {n2:e} at or below {SINGULAR_NORM2:e}")));
    }
    Ok(n2)
}

/// `f(x) = M x + b`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub m: Mat,
    pub b: Vec<f64>,
}

impl LinearField {
    pub fn identity(d: usize) -> Self {
        LinearField { m: Mat::identity(d), b: vec![0.0; d] }
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn name(&self) -> String {
        "linear".into()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.m.mul_vec(x, out);
        out.iter_mut().zip(&self.b).for_each(|(o, b)| *o += b);
        Ok(())
    }
    fn partial(&self, i: usize, j: usize, _x: &[f64]) -> Result<f64> {
        Ok(self.m.get(i, j))
    }
    fn jacobian_inner(&self, m: &Mat, _x: &[f64]) -> Result<f64> {
        Ok(m.frobenius_inner(&self.m))
    }
}

/// `f(x) = x_i² e_i`.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateQuadratic {
    pub d: usize,
    pub i: usize,
}

impl VectorField for CoordinateQuadratic {
    fn dim(&self) -> usize {
        self.d
    }
    fn name(&self) -> String {
        format!("coord-quadratic[{}]", self.i)
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[self.i] = x[self.i] * x[self.i];
        Ok(())
    }
    fn partial(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        Ok(if i == self.i && j == self.i { 2.0 * x[i] } else { 0.0 })
    }
}

/// `g₀(x) = x / ‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct InverseNormField {
    pub d: usize,
}

impl VectorField for InverseNormField {
    fn dim(&self) -> usize {
        self.d
    }
    fn name(&self) -> String {
        "g0".into()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n2 = guard_norm2(x)?;
        out.iter_mut().zip(x).for_each(|(o, v)| *o = v / n2);
        Ok(())
    }
    fn partial(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        let n2 = guard_norm2(x)?;
        let delta = if i == j { 1.0 / n2 } else { 0.0 };
        Ok(delta - 2.0 * x[i] * x[j] / (n2 * n2))
    }
    fn divergence(&self, x: &[f64]) -> Result<f64> {
        Ok((self.d as f64 - 2.0) / guard_norm2(x)?)
    }
    fn jacobian_inner(&self, m: &Mat, x: &[f64]) -> Result<f64> {
        let n2 = guard_norm2(x)?;
        Ok(m.trace() / n2 - 2.0 * m.quad_form(x) / (n2 * n2))
    }
}

/// `f_i(y) = sin(Σ_k y_k)` for every `i`; its Jacobian has all entries
/// equal to `cos(Σ_k y_k)`.
#[derive(Debug, Clone, Copy)]
pub struct SumProjection {
    pub d: usize,
}

impl VectorField for SumProjection {
    fn dim(&self) -> usize {
        self.d
    }
    fn name(&self) -> String {
        "sum-projection".into()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let w: f64 = x.iter().sum();
        out.iter_mut().for_each(|o| *o = w.sin());
        Ok(())
    }
    fn partial(&self, _i: usize, _j: usize, x: &[f64]) -> Result<f64> {
        Ok(x.iter().sum::<f64>().cos())
    }
    fn jacobian_inner(&self, m: &Mat, x: &[f64]) -> Result<f64> {
        let ones = vec![1.0; self.d];
        Ok(m.quad_form(&ones) * x.iter().sum::<f64>().cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference<F: VectorField>(f: &F, x: &[f64]) {
        let d = f.dim();
        let h = 1e-6;
        let mut hi = vec![0.0; d];
        let mut lo = vec![0.0; d];
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            f.eval(&xp, &mut hi).unwrap();
            f.eval(&xm, &mut lo).unwrap();
            for i in 0..d {
                let fd = (hi[i] - lo[i]) / (2.0 * h);
                assert!((fd - f.partial(i, j, x).unwrap()).abs() < 1e-6, "{} ({i},{j})", f.name());
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let x = [0.7, -1.2, 0.4, 2.0];
        finite_difference(&InverseNormField { d: 4 }, &x);
        finite_difference(&CoordinateQuadratic { d: 4, i: 2 }, &x);
        finite_difference(&SumProjection { d: 4 }, &x);
        let m = Mat::from_rows(&[
            vec![1.0, 2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        finite_difference(&LinearField { m, b: vec![0.5; 4] }, &x);
    }

    #[test]
    fn fast_jacobian_inner_matches_default() {
        let x = [0.7, -1.2, 0.4];
        let m = Mat::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.1], vec![0.0, 0.1, 0.5]]).unwrap();
        let g = InverseNormField { d: 3 };
        let mut slow = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                slow += m.get(i, j) * g.partial(i, j, &x).unwrap();
            }
        }
        assert!((slow - g.jacobian_inner(&m, &x).unwrap()).abs() < 1e-14);
        assert!(g.eval(&[0.0, 0.0, 0.0], &mut [0.0; 3]).is_err());
    }
}
