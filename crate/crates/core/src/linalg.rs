//! Small dense linear-algebra helpers shared by the smoothers and the fitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Orthonormal basis (m × (m−1)) of the complement of `c`, taken from a
/// Householder reflection. Coefficients θ in the reduced space map to
/// β = Zθ with cᵀβ = 0.
pub fn null_space_of_vector(c: &DVector<f64>) -> DMatrix<f64> {
    let m = c.len();
    let norm = c.norm();
    if m < 2 {
        return DMatrix::zeros(m, 0);
    }
    if norm == 0.0 {
        return DMatrix::identity(m, m).columns(1, m - 1).into_owned();
    }
    let mut v = c.clone();
    v[0] += c[0].signum() * norm;
    let vv = v.dot(&v);
    let mut h = DMatrix::<f64>::identity(m, m);
    h -= (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, m - 1).into_owned()
}

/// Cholesky of a symmetric matrix, retrying with an escalating diagonal ridge
/// if the matrix is numerically indefinite. Returns the ridge used.
pub fn robust_cholesky(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let n = a.nrows();
    let scale = (a.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut ridge = scale * 1e-12;
    for _ in 0..12 {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(b) {
            log::debug!("cholesky needed ridge {ridge:e}");
            return Ok((c, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::LinAlg("matrix is not positive definite even with a ridge".into()))
}

/// Xᵀ X, computed column pair by column pair so the result is exactly symmetric.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..p {
        let ci = x.column(i);
        for j in i..p {
            let v = ci.dot(&x.column(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
