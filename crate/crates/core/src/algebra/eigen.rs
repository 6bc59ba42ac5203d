//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.

use num_complex::Complex;

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// `A = V diag(values) V†` with eigenvalues ascending and eigenvectors in the
/// columns of `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// `V diag(f(λ)) V†`
    pub fn map(&self, f: impl Fn(T) -> Complex<T>) -> Matrix<T> {
        let n = self.values.len();
        let fv: Vec<Complex<T>> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        Matrix::from_fn(n, n, |i, j| {
            (0..n).fold(Complex::new(T::zero(), T::zero()), |s, k| s + v[(i, k)] * fv[k] * v[(j, k)].conj())
        })
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.map(|l| Complex::new(l, T::zero()))
    }
}

/// Diagonalizes a Hermitian matrix. Only the upper triangle's Hermitian part
/// is trusted; the input is symmetrized first.
pub fn hermitian_eigen<T: Real>(h: &Matrix<T>) -> Result<HermitianEigen<T>> {
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    let n = h.rows();
    let half = T::lit(0.5);
    let mut a = Matrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * half);
    let mut v = Matrix::<T>::identity(n);
    let scale = a.frobenius_norm();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= eps * scale * T::lit(0.01) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let z = a[(p, q)];
                let g = z.norm();
                if g == T::zero() || g <= eps * T::lit(1e-3) * scale {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (g + g);
                let t = if theta.abs() > T::lit(1e150) {
                    T::one() / (theta + theta)
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let ph = z / g;
                let phc = ph.conj();
                // U = [[c, s], [-s e^{-iφ}, c e^{-iφ}]] on the (p, q) plane
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * phc * s;
                    a[(k, q)] = akp * s + akq * phc * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * ph * s;
                    a[(q, k)] = apk * s + aqk * ph * c;
                }
                a[(p, q)] = Complex::new(T::zero(), T::zero());
                a[(q, p)] = Complex::new(T::zero(), T::zero());
                a[(p, p)] = Complex::new(a[(p, p)].re, T::zero());
                a[(q, q)] = Complex::new(a[(q, q)].re, T::zero());
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * phc * s;
                    v[(k, q)] = vkp * s + vkq * phc * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    fn sample(n: usize) -> M {
        let a = M::from_fn(n, n, |i, j| {
            Complex::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0)
        });
        &a + &a.adjoint()
    }

    #[test]
    fn reconstructs_input() {
        for n in [1, 2, 3, 6] {
            let h = sample(n);
            let e = hermitian_eigen(&h).unwrap();
            assert!(e.reconstruct().max_abs_diff(&h) < 1e-12, "n = {n}");
            assert!(e.vectors.is_unitary(1e-13));
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn pauli_y_eigenvalues() {
        let y = M::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => Complex::new(0.0, -1.0),
            (1, 0) => Complex::new(0.0, 1.0),
            _ => Complex::new(0.0, 0.0),
        });
        let e = hermitian_eigen(&y).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let h = Matrix::<f32>::from_fn(3, 3, |i, j| Complex::new((i + j) as f32, 0.0));
        let e = hermitian_eigen(&h).unwrap();
        assert!(e.reconstruct().max_abs_diff(&h) < 1e-5);
    }
}
