//! Angular momentum operators and the electron ⊗ nucleus composite space.
//!
//! Electron levels are ordered `{+1, 0, -1}`, nuclear levels `{↑, ↓}`; a
//! composite index is `2·e + n`.

use num_complex::Complex;

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Spin-1 operators in the `{+1, 0, -1}` basis.
#[derive(Clone, Debug)]
pub struct SpinOneOperators<T> {
    pub sx: Matrix<T>,
    pub sy: Matrix<T>,
    pub sz: Matrix<T>,
    pub sp: Matrix<T>,
    pub sm: Matrix<T>,
}

/// Spin-½ operators in the `{↑, ↓}` basis.
#[derive(Clone, Debug)]
pub struct SpinHalfOperators<T> {
    pub ix: Matrix<T>,
    pub iy: Matrix<T>,
    pub iz: Matrix<T>,
    pub ip: Matrix<T>,
    pub im: Matrix<T>,
}

fn from_ladder<T: Real>(sp: &Matrix<T>) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let sm = sp.adjoint();
    let half = T::lit(0.5);
    let sx = (sp + &sm).scale_real(half);
    // (S+ - S-)/2i
    let sy = (sp - &sm).scale(Complex::new(T::zero(), -half));
    (sm, sx, sy)
}

/// `S+ = √2(|0⟩⟨-1| + |+1⟩⟨0|)`, `Sz = diag(1, 0, -1)`.
pub fn spin1_operators<T: Real>() -> SpinOneOperators<T> {
    let r2 = Complex::new(T::lit(2.0).sqrt(), T::zero());
    let mut sp = Matrix::zeros(3, 3);
    sp[(0, 1)] = r2;
    sp[(1, 2)] = r2;
    let (sm, sx, sy) = from_ladder(&sp);
    let sz = Matrix::from_real_diag(&[T::one(), T::zero(), -T::one()]);
    SpinOneOperators { sx, sy, sz, sp, sm }
}

/// `I+ = |↑⟩⟨↓|`, `Iz = diag(½, -½)`.
pub fn spin_half_operators<T: Real>() -> SpinHalfOperators<T> {
    let mut ip = Matrix::zeros(2, 2);
    ip[(0, 1)] = Complex::new(T::one(), T::zero());
    let (im, ix, iy) = from_ladder(&ip);
    let half = T::lit(0.5);
    let iz = Matrix::from_real_diag(&[half, -half]);
    SpinHalfOperators { ix, iy, iz, ip, im }
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (br, bc) = (b.rows(), b.cols());
    Matrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

fn check_composite<T: Real>(rho: &Matrix<T>) -> Result<()> {
    if rho.rows() != 6 || rho.cols() != 6 {
        return Err(Error::dim("6x6", format!("{}x{}", rho.rows(), rho.cols())));
    }
    Ok(())
}

/// Traces out the nucleus, leaving the 3×3 electron marginal.
pub fn partial_trace_nucleus<T: Real>(rho: &Matrix<T>) -> Result<Matrix<T>> {
    check_composite(rho)?;
    Ok(Matrix::from_fn(3, 3, |a, b| rho[(2 * a, 2 * b)] + rho[(2 * a + 1, 2 * b + 1)]))
}

/// Traces out the electron, leaving the 2×2 nuclear marginal.
pub fn partial_trace_electron<T: Real>(rho: &Matrix<T>) -> Result<Matrix<T>> {
    check_composite(rho)?;
    Ok(Matrix::from_fn(2, 2, |m, n| (0..3).fold(Complex::new(T::zero(), T::zero()), |s, e| s + rho[(2 * e + m, 2 * e + n)])))
}
