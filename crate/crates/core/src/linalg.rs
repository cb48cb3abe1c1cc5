//! Small dense complex linear-algebra helpers shared by the rate and WMMSE models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

fn cholesky(a: &CMat) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let fail = || Error::NumericalFailure("matrix is not Hermitian positive definite".into());
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or_else(fail)?;
    // complex square roots never fail, so check that the pivots were real and positive
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re {
            return Err(fail());
        }
    }
    Ok(chol)
}

/// Solves `A x = b` for Hermitian positive-definite `A` through a Cholesky factor.
pub fn hpd_solve(a: &CMat, b: &CVec) -> Result<CVec> {
    Ok(cholesky(a)?.solve(b))
}

/// `x^H A^{-1} x` for Hermitian positive-definite `A`.
pub fn inverse_quad_form(a: &CMat, x: &CVec) -> Result<f64> {
    let y = hpd_solve(a, x)?;
    Ok(x.dotc(&y).re)
}

/// `log2 det A` for Hermitian positive-definite `A`.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let chol = cholesky(a)?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}

/// `u u^H`.
pub fn outer(u: &CVec) -> CMat {
    u * u.adjoint()
}

/// `x^H A x`, returned as a complex number (real for Hermitian `A`).
pub fn quad_form(a: &CMat, x: &CVec) -> C64 {
    x.dotc(&(a * x))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, C64::new(s, 0.0))
}

/// Largest elementwise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hpd_solve_matches_direct_inverse() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[C64::new(4.0, 0.0), C64::new(1.0, 1.0), C64::new(1.0, -1.0), C64::new(3.0, 0.0)],
        );
        let b = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)]);
        let x = hpd_solve(&a, &b).unwrap();
        let r = &a * &x - &b;
        assert!(r.norm() < 1e-13);
        assert!(hermitian_defect(&a) == 0.0);
        assert!((log2_det_hpd(&a).unwrap() - 10f64.log2()).abs() < 1e-13);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]));
        assert!(hpd_solve(&a, &CVec::zeros(2)).is_err());
    }
}
