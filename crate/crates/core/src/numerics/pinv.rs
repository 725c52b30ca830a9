//! Moore–Penrose pseudoinverse and SVD-based least squares.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::svd::svd;

/// Relative cutoff applied to singular values when none is given.
pub const DEFAULT_RCOND: f64 = 1e-10;

/// `M⁺`, treating singular values `≤ rcond · s₁` as zero.
pub fn pseudoinverse(m: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(rcond >= 0.0) {
        return Err(Error::Precondition(format!("rcond must be >= 0, got {rcond}")));
    }
    m.check_finite("pseudoinverse input")?;
    let (n, c) = m.shape();
    if n == 0 || c == 0 {
        return Ok(Matrix::zeros(c, n));
    }
    let f = svd(m)?;
    let cutoff = rcond * f.s[0];
    let mut out = Matrix::zeros(c, n);
    for (j, &s) in f.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        let vj = f.v.col(j);
        let uj: Vec<f64> = f.u.col(j).iter().map(|x| x * inv).collect();
        out.add_outer(&vj, &uj);
    }
    Ok(out)
}

/// Solves `min ‖M X − Y‖² + ridge ‖X‖²` through the SVD of `M`.
///
/// With `ridge = 0` this is the minimum-norm least-squares solution `M⁺ Y`.
pub fn least_squares(m: &Matrix, y: &Matrix, ridge: f64, rcond: f64) -> Result<Matrix> {
    if m.rows() != y.rows() {
        return Err(Error::dim(format!(
            "design has {} rows but targets have {}",
            m.rows(),
            y.rows()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Precondition(format!("ridge must be >= 0, got {ridge}")));
    }
    m.check_finite("least-squares design")?;
    y.check_finite("least-squares targets")?;
    let (n, c) = m.shape();
    if n == 0 || c == 0 {
        return Ok(Matrix::zeros(c, y.cols()));
    }
    let f = svd(m)?;
    let cutoff = rcond * f.s[0];
    // X = V diag(s / (s² + ridge)) Uᵀ Y
    let uty = f.u.t_matmul(y)?;
    let mut out = Matrix::zeros(c, y.cols());
    for (j, &s) in f.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let gain = s / (s * s + ridge);
        let coef: Vec<f64> = uty.row(j).iter().map(|x| x * gain).collect();
        out.add_outer(&f.v.col(j), &coef);
    }
    Ok(out)
}
