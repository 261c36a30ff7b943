//! Dense complex helpers used by the solvers.
//!
//! The hot loops (matrix-vector products, Hermitian forms, rank-1 updates) run
//! directly over nalgebra's column-major storage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// `out = a * x` for a square column-major `a`.
pub fn mat_vec_into(a: &CMat, x: &[Complex64], out: &mut [Complex64]) {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let data = a.as_slice();
    for (j, &xj) in x.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
}

/// `Re(x^H a x)`; exact for Hermitian `a` up to rounding.
pub fn hermitian_form(a: &CMat, x: &[Complex64]) -> f64 {
    let n = a.nrows();
    let data = a.as_slice();
    let mut acc = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        let mut s = Complex64::new(0.0, 0.0);
        for (&c, &xi) in col.iter().zip(x) {
            s += xi.conj() * c;
        }
        acc += (s * xj).re;
    }
    acc
}

/// `Re(x^H y)`.
pub fn inner_re(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum()
}

/// `a -= coef * u u^H`.
pub fn hermitian_rank1_sub(a: &mut CMat, u: &[Complex64], coef: f64) {
    let n = a.nrows();
    let data = a.as_mut_slice();
    for (j, &uj) in u.iter().enumerate() {
        let w = uj.conj() * coef;
        let col = &mut data[j * n..(j + 1) * n];
        for (c, &ui) in col.iter_mut().zip(u) {
            *c -= ui * w;
        }
    }
}

/// `a += coef * s s^H`.
pub fn hermitian_rank1_add(a: &mut CMat, s: &[Complex64], coef: f64) {
    hermitian_rank1_sub(a, s, -coef);
}

/// `Re tr(a b)`.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            // a[i,k] * b[k,i]
            acc += (ad[k * n + i] * bd[i * n + k]).re;
        }
    }
    acc
}

/// Inverse and log-determinant of a Hermitian positive definite matrix.
pub fn hermitian_inverse(m: &CMat) -> Result<(CMat, f64)> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Degenerate("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    let mut inv = chol.inverse();
    hermitize(&mut inv);
    if !logdet.is_finite() {
        return Err(Error::Degenerate("non-finite log-determinant".into()));
    }
    Ok((inv, logdet))
}

/// Replace `m` by `(m + m^H) / 2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..=j {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// `||m - m^H||_F / ||m||_F` (0 for the zero matrix).
pub fn relative_asymmetry(m: &CMat) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

pub fn identity_scaled(n: usize, v: f64) -> CMat {
    CMat::from_diagonal_element(n, n, Complex64::new(v, 0.0))
}

/// Numerical rank from singular values, relative to the largest one.
pub fn numerical_rank(m: &RMat, rtol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// Minimum eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
