//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorization that retries with a growing diagonal jitter.
///
/// Returns the factor and the jitter actually added (0 when none was needed).
pub fn cholesky_jitter(mut m: DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = 1e-8 * scale;
    let mut added = 0.0;
    for _ in 0..8 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Singular)
}

/// Indices of columns that are (numerically) linear combinations of earlier columns.
pub fn dependent_columns(x: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut v = col / norm0;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let r = v.norm();
        if r < rel_tol {
            dependent.push(j);
        } else {
            basis.push(v / r);
        }
    }
    dependent
}

/// Least-squares solution of `x·b ≈ y` through a Householder QR.
/// The caller is responsible for ensuring full column rank.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() < x.ncols() {
        return Err(Error::Contract(format!(
            "least squares needs at least as many rows ({}) as columns ({})",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let r = qr.r();
    r.solve_upper_triangular(&qty).ok_or(Error::Singular)
}

/// Solves a symmetric positive (semi)definite system, with jitter fallback.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (c, _) = cholesky_jitter(a.clone(), scale)?;
    Ok(c.solve(b))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}
