//! Matrix exponential.
//!
//! Hermitian inputs go through the eigendecomposition, so `exp(-i t H)` is
//! unitary to rounding for any `t`. Everything else uses Padé-13 with scaling
//! and squaring (Higham 2005).

use num_complex::Complex;

use super::{hermitian_eigen, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.37;

/// `exp(scale · h)`.
pub fn matrix_exponential<T: Real>(h: &Matrix<T>, scale: Complex<T>) -> Result<Matrix<T>> {
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    let tol = T::epsilon() * T::lit(64.0) * (T::one() + h.max_abs());
    if h.is_hermitian(tol) {
        let eig = hermitian_eigen(h)?;
        return Ok(eig.map(|l| (scale * l).exp()));
    }
    expm_pade(&h.scale(scale))
}

/// Padé-13 scaling-and-squaring exponential of a general square matrix.
pub fn expm_pade<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    let norm = a.one_norm();
    let s = if norm > T::lit(THETA13) {
        (norm / T::lit(THETA13)).log2().ceil().to_i32().unwrap_or(0).max(0)
    } else {
        0
    };
    let a = a.scale_real(T::lit(0.5).powi(s));
    let b: Vec<T> = PADE13.iter().map(|&c| T::lit(c)).collect();
    let id = Matrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let lin = |c6: T, c4: T, c2: T, c0: Option<T>| {
        let mut m = a6.scale_real(c6) + a4.scale_real(c4) + a2.scale_real(c2);
        if let Some(c0) = c0 {
            m += &id.scale_real(c0);
        }
        m
    };
    let inner_u = &a6 * &lin(b[13], b[11], b[9], None);
    let u = &a * &(inner_u + lin(b[7], b[5], b[3], Some(b[1])));
    let inner_v = &a6 * &lin(b[12], b[10], b[8], None);
    let v = inner_v + lin(b[6], b[4], b[2], Some(b[0]));

    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn sigma_x() -> M {
        M::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    #[test]
    fn zero_scale_is_identity() {
        let h = sigma_x();
        assert!(matrix_exponential(&h, c(0.0, 0.0)).unwrap().max_abs_diff(&M::identity(2)) < 1e-15);
    }

    #[test]
    fn pauli_half_turn() {
        let u = matrix_exponential(&sigma_x(), c(0.0, -std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(u.max_abs_diff(&sigma_x().scale(c(0.0, -1.0))) < 1e-12);
    }

    #[test]
    fn spin1_sz_pi() {
        let sz = M::from_real_diag(&[1.0, 0.0, -1.0]);
        let u = matrix_exponential(&sz, c(0.0, -std::f64::consts::PI)).unwrap();
        assert!(u.max_abs_diff(&M::from_real_diag(&[-1.0, 1.0, -1.0])) < 1e-12);
    }

    #[test]
    fn pade_agrees_with_eigen_route() {
        let h = M::from_fn(4, 4, |i, j| c((i * j) as f64 * 0.3 - 0.5, 0.0) + c(0.0, (i as f64 - j as f64) * 0.7));
        assert!(h.is_hermitian(1e-15));
        for t in [0.01, 1.0, 37.0] {
            let a = matrix_exponential(&h, c(0.0, -t)).unwrap();
            let b = expm_pade(&h.scale(c(0.0, -t))).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn nilpotent_exponential_is_truncated_series() {
        let n = M::from_real_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let e = matrix_exponential(&n, c(2.0, 0.0)).unwrap();
        let expected = M::from_real_rows(&[&[1.0, 2.0, 2.0], &[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0]]);
        assert!(e.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(matrix_exponential(&M::zeros(2, 3), c(1.0, 0.0)), Err(Error::NotSquare { .. })));
    }
}
