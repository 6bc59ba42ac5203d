//! Dormand–Prince 5(4) with PI step-size control and Hairer's dense output.
//!
//! The state is a flat slice of complex numbers (a ket or a row-major density
//! matrix). Output is produced only at the requested times, by interpolation
//! inside accepted steps.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

#[derive(Clone, Debug)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Initial step; estimated when `None`.
    pub h_init: Option<T>,
    /// Largest step; the whole interval when `None`.
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        OdeOptions { rtol: T::lit(1e-9), atol: T::lit(1e-12), h_init: None, h_max: None, max_steps: 50_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl OdeStats {
    pub fn steps(&self) -> usize {
        self.accepted + self.rejected
    }
}

#[derive(Clone, Debug)]
pub struct OdeSolution<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<Complex<T>>>,
    pub stats: OdeStats,
}

fn axpy<T: Real>(out: &mut [Complex<T>], y: &[Complex<T>], terms: &[(T, &[Complex<T>])]) {
    for i in 0..out.len() {
        let mut acc = y[i];
        for &(c, k) in terms {
            acc += k[i] * c;
        }
        out[i] = acc;
    }
}

fn rms_norm<T: Real>(v: &[Complex<T>], sk: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let s = v.iter().zip(sk).fold(T::zero(), |acc, (x, s)| acc + x.norm_sqr() / (*s * *s));
    (s / T::from_usize(v.len()).unwrap()).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` and returns the solution at every time
/// in `t_out` (ascending, each `>= t0`). The last entry is the end point.
pub fn integrate<T, F>(f: F, t0: T, y0: &[Complex<T>], t_out: &[T], opts: &OdeOptions<T>) -> Result<OdeSolution<T>>
where
    T: Real,
    F: FnMut(T, &[Complex<T>], &mut [Complex<T>]),
{
    integrate_projected(f, |_: &mut [Complex<T>]| {}, t0, y0, t_out, opts)
}

/// [`integrate`] followed, after every accepted step, by `project` applied to
/// the new state and to any interpolated outputs (e.g. renormalizing a ket so
/// that a quadratic invariant holds to rounding). The derivative is then
/// re-evaluated at the projected state.
pub fn integrate_projected<T, F, P>(
    mut f: F,
    mut project: P,
    t0: T,
    y0: &[Complex<T>],
    t_out: &[T],
    opts: &OdeOptions<T>,
) -> Result<OdeSolution<T>>
where
    T: Real,
    F: FnMut(T, &[Complex<T>], &mut [Complex<T>]),
    P: FnMut(&mut [Complex<T>]),
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidParameter("output times must be ascending and not before t0".into()));
    }
    if !(opts.rtol >= T::zero() && opts.atol >= T::zero()) || (opts.rtol == T::zero() && opts.atol == T::zero()) {
        return Err(Error::InvalidParameter("tolerances must be non-negative and not both zero".into()));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut times = Vec::with_capacity(t_out.len());
    let mut states = Vec::with_capacity(t_out.len());
    let mut next = 0;
    while next < t_out.len() && t_out[next] == t0 {
        times.push(t0);
        states.push(y0.to_vec());
        next += 1;
    }
    let t_end = match t_out.last() {
        Some(&t) if next < t_out.len() => t,
        _ => return Ok(OdeSolution { times, states, stats }),
    };
    let span = t_end - t0;
    let h_max = opts.h_max.unwrap_or(span).min(span);

    let zero = Complex::new(T::zero(), T::zero());
    let mut y = y0.to_vec();
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut ys = vec![zero; n];
    let mut y1 = vec![zero; n];
    let mut err = vec![zero; n];
    let mut sk = vec![T::zero(); n];
    let mut cont = vec![vec![zero; n]; 5];

    let c = |x: f64| T::lit(x);
    let mut t = t0;
    f(t, &y, &mut k1);
    stats.evaluations += 1;

    let mut h = match opts.h_init {
        Some(h) => h.min(h_max),
        None => {
            for i in 0..n {
                sk[i] = opts.atol + opts.rtol * y[i].norm();
            }
            let dnf = rms_norm(&k1, &sk);
            let dny = rms_norm(&y, &sk);
            let mut h = if dnf <= c(1e-5) || dny <= c(1e-5) { span * c(1e-6) } else { dny / dnf * c(0.01) };
            h = h.min(h_max);
            axpy(&mut ys, &y, &[(h, &k1)]);
            f(t + h, &ys, &mut k2);
            stats.evaluations += 1;
            for i in 0..n {
                err[i] = k2[i] - k1[i];
            }
            let der2 = rms_norm(&err, &sk) / h;
            let der12 = der2.max(dnf);
            let h1 = if der12 <= c(1e-15) { (h * c(1e-3)).max(span * c(1e-6)) } else { (c(0.01) / der12).powf(c(0.2)) };
            h.min(h1).min(h * c(100.0)).min(h_max)
        }
    };

    let expo1 = c(0.2 - BETA * 0.75);
    let mut facold = c(1e-4);
    let mut last_rejected = false;

    loop {
        if stats.steps() >= opts.max_steps {
            return Err(Error::TooManySteps { t: t.to_f64().unwrap_or(f64::NAN), max_steps: opts.max_steps });
        }
        if h <= T::epsilon() * c(10.0) * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow {
                t: t.to_f64().unwrap_or(f64::NAN),
                h: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        let last = t + h * c(1.01) >= t_end;
        if last {
            h = t_end - t;
        }

        axpy(&mut ys, &y, &[(h * c(A21), &k1)]);
        f(t + c(C[1]) * h, &ys, &mut k2);
        axpy(&mut ys, &y, &[(h * c(A31), &k1), (h * c(A32), &k2)]);
        f(t + c(C[2]) * h, &ys, &mut k3);
        axpy(&mut ys, &y, &[(h * c(A41), &k1), (h * c(A42), &k2), (h * c(A43), &k3)]);
        f(t + c(C[3]) * h, &ys, &mut k4);
        axpy(&mut ys, &y, &[(h * c(A51), &k1), (h * c(A52), &k2), (h * c(A53), &k3), (h * c(A54), &k4)]);
        f(t + c(C[4]) * h, &ys, &mut k5);
        axpy(
            &mut ys,
            &y,
            &[(h * c(A61), &k1), (h * c(A62), &k2), (h * c(A63), &k3), (h * c(A64), &k4), (h * c(A65), &k5)],
        );
        let t_new = if last { t_end } else { t + h };
        f(t_new, &ys, &mut k6);
        axpy(
            &mut y1,
            &y,
            &[(h * c(A71), &k1), (h * c(A73), &k3), (h * c(A74), &k4), (h * c(A75), &k5), (h * c(A76), &k6)],
        );
        f(t_new, &y1, &mut k7);
        stats.evaluations += 6;

        for i in 0..n {
            err[i] = (k1[i] * c(E1) + k3[i] * c(E3) + k4[i] * c(E4) + k5[i] * c(E5) + k6[i] * c(E6) + k7[i] * c(E7)) * h;
            sk[i] = opts.atol + opts.rtol * y[i].norm().max(y1[i].norm());
        }
        let e = rms_norm(&err, &sk);
        if !e.is_finite() {
            stats.rejected += 1;
            h = h * c(FAC_MIN);
            last_rejected = true;
            continue;
        }
        let fac11 = e.powf(expo1);

        if e <= T::one() {
            let fac = fac11 / facold.powf(c(BETA));
            let fac = c(1.0 / FAC_MAX).max(c(1.0 / FAC_MIN).min(fac / c(SAFETY)));
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            facold = e.max(c(1e-4));
            stats.accepted += 1;

            if next < t_out.len() && t_out[next] <= t_new {
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = k1[i] * h - ydiff;
                    cont[0][i] = y[i];
                    cont[1][i] = ydiff;
                    cont[2][i] = bspl;
                    cont[3][i] = ydiff - k7[i] * h - bspl;
                    cont[4][i] = (k1[i] * c(D1) + k3[i] * c(D3) + k4[i] * c(D4) + k5[i] * c(D5) + k6[i] * c(D6)
                        + k7[i] * c(D7))
                        * h;
                }
                while next < t_out.len() && (t_out[next] <= t_new || last) {
                    let s = if last && t_out[next] >= t_end { T::one() } else { (t_out[next] - t) / h };
                    let s1 = T::one() - s;
                    let mut out: Vec<Complex<T>> = if s == T::one() {
                        y1.clone()
                    } else {
                        (0..n)
                            .map(|i| cont[0][i] + (cont[1][i] + (cont[2][i] + (cont[3][i] + cont[4][i] * s1) * s) * s1) * s)
                            .collect()
                    };
                    project(&mut out);
                    times.push(t_out[next]);
                    states.push(out);
                    next += 1;
                }
            }

            ys.copy_from_slice(&y1);
            project(&mut y1);
            if y1 != ys {
                f(t_new, &y1, &mut k7);
                stats.evaluations += 1;
            }
            std::mem::swap(&mut k1, &mut k7);
            std::mem::swap(&mut y, &mut y1);
            t = t_new;
            if last {
                break;
            }
            h = h_new;
            last_rejected = false;
        } else {
            h = h / c(1.0 / FAC_MIN).min(fac11 / c(SAFETY));
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(OdeSolution { times, states, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    #[test]
    fn exponential_growth() {
        let sol = integrate(|_, y, dy| dy[0] = y[0], 0.0, &[c(1.0)], &[0.5, 1.0, 2.0], &OdeOptions::default()).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0].re - t.exp()).abs() < 1e-8 * t.exp(), "t = {t}");
        }
    }

    #[test]
    fn complex_rotation_with_dense_output() {
        // y' = -i w y
        let w = 7.0;
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.02).collect();
        let f = |_: f64, y: &[Complex<f64>], dy: &mut [Complex<f64>]| dy[0] = Complex::new(0.0, -w) * y[0];
        let sol = integrate(f, 0.0, &[c(1.0)], &grid, &OdeOptions::default()).unwrap();
        assert_eq!(sol.times.len(), grid.len());
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let exact = Complex::new(0.0, -w * t).exp();
            assert!((y[0] - exact).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let sol = integrate(|_, _, dy: &mut [Complex<f64>]| dy[0] = c(0.0), 0.0, &[c(0.3)], &[1e-9], &OdeOptions::default())
            .unwrap();
        assert_eq!(sol.states[0][0], c(0.3));
    }

    #[test]
    fn output_at_start_time() {
        let sol = integrate(|_, y, dy| dy[0] = -y[0], 0.0, &[c(1.0)], &[0.0, 0.0, 1.0], &OdeOptions::default()).unwrap();
        assert_eq!(sol.states[0][0], c(1.0));
        assert_eq!(sol.states[1][0], c(1.0));
        assert!((sol.states[2][0].re - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rejects_descending_grid() {
        let r = integrate(|_, y, dy| dy[0] = y[0], 0.0, &[c(1.0)], &[1.0, 0.5], &OdeOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn step_budget_is_enforced() {
        let opts = OdeOptions { max_steps: 3, ..OdeOptions::default() };
        let f = |_: f64, y: &[Complex<f64>], dy: &mut [Complex<f64>]| dy[0] = Complex::new(0.0, -1e3) * y[0];
        assert!(matches!(integrate(f, 0.0, &[c(1.0)], &[10.0], &opts), Err(Error::TooManySteps { .. })));
    }

    #[test]
    fn finite_time_blowup_underflows() {
        // y' = y², y(0) = 1 blows up at t = 1
        let f = |_: f64, y: &[Complex<f64>], dy: &mut [Complex<f64>]| dy[0] = y[0] * y[0];
        let r = integrate(f, 0.0, &[c(1.0)], &[2.0], &OdeOptions::default());
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. }) | Err(Error::TooManySteps { .. })), "{r:?}");
    }

    #[test]
    fn single_precision() {
        let opts = OdeOptions { rtol: 1e-5f32, atol: 1e-7, ..OdeOptions::default() };
        let sol = integrate(|_, y, dy| dy[0] = -y[0], 0.0f32, &[Complex::new(1.0f32, 0.0)], &[1.0], &opts).unwrap();
        assert!((sol.states[0][0].re - (-1f32).exp()).abs() < 1e-4);
    }
}
