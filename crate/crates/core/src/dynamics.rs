//! Time evolution: Schrödinger propagation, the Lindblad master equation, and
//! ensemble averaging over quasi-static electron dephasing noise.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::algebra::{expm_pade, hermitian_eigen, kron, matrix_exponential, spin1_operators, spin_half_operators};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::ode::{integrate, integrate_projected, OdeOptions};
use crate::{tol, CMatrix, StateVector, C64};

/// Relaxation, dephasing and classical-noise parameters. Rates in 1/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Electron relaxation Γe⁽¹⁾.
    pub gamma_e1: f64,
    /// Nuclear relaxation Γn⁽¹⁾.
    pub gamma_n1: f64,
    /// Nuclear dephasing Γn⁽²⁾.
    pub gamma_n2: f64,
    pub nbar_e: f64,
    pub nbar_n: f64,
    /// Quasi-static electron noise strength λ (rad/s).
    pub lambda_e: f64,
    pub ensemble_size: usize,
}

/// Electron T₂* behind the default λ = √2/T₂*.
pub const DEFAULT_T2_STAR: f64 = 90e-6;

impl NoiseParams {
    /// T₁ₑ = 100 s, T₁ₙ = 10 s, T₂ₙ = 1 s (Γn⁽²⁾ = 1/2 s), zero bath
    /// occupation, λ = √2/T₂* with T₂* = 90 µs, 64 trajectories.
    pub fn defaults() -> Self {
        NoiseParams {
            gamma_e1: 1.0 / 100.0,
            gamma_n1: 1.0 / 10.0,
            gamma_n2: 1.0 / 2.0,
            nbar_e: 0.0,
            nbar_n: 0.0,
            lambda_e: std::f64::consts::SQRT_2 / DEFAULT_T2_STAR,
            ensemble_size: 64,
        }
    }

    /// No dissipation and no classical noise.
    pub fn noiseless() -> Self {
        NoiseParams { gamma_e1: 0.0, gamma_n1: 0.0, gamma_n2: 0.0, nbar_e: 0.0, nbar_n: 0.0, lambda_e: 0.0, ensemble_size: 1 }
    }

    /// Defaults with the quasi-static term switched off.
    pub fn lindblad_only() -> Self {
        NoiseParams { lambda_e: 0.0, ensemble_size: 1, ..Self::defaults() }
    }

    /// Sets λ = √2/T₂*, so the free-induction envelope is `exp(−(t/T₂*)²)`.
    pub fn with_t2_star(self, t2_star: f64) -> Self {
        NoiseParams { lambda_e: std::f64::consts::SQRT_2 / t2_star, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.gamma_e1, self.gamma_n1, self.gamma_n2, self.nbar_e, self.nbar_n, self.lambda_e];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("noise rates, occupations and lambda must be finite and >= 0".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidParameter("ensemble_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_dissipative(&self) -> bool {
        self.gamma_e1 > 0.0 || self.gamma_n1 > 0.0 || self.gamma_n2 > 0.0
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::defaults()
    }
}

/// Pure or mixed state of the six-level system (or any small system).
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(CMatrix),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(psi) => psi.dim(),
            QuantumState::Mixed(rho) => rho.rows(),
        }
    }

    pub fn density(&self) -> CMatrix {
        match self {
            QuantumState::Pure(psi) => psi.density(),
            QuantumState::Mixed(rho) => rho.clone(),
        }
    }

    pub fn into_density(self) -> CMatrix {
        match self {
            QuantumState::Pure(psi) => psi.density(),
            QuantumState::Mixed(rho) => rho,
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Pure(psi) => psi.norm().powi(2),
            QuantumState::Mixed(rho) => rho.trace().re,
        }
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn overlap(&self, psi: &StateVector) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(Error::dim(self.dim(), psi.dim()));
        }
        Ok(match self {
            QuantumState::Pure(phi) => phi.inner(psi).norm_sqr(),
            QuantumState::Mixed(rho) => psi.expectation(rho),
        })
    }

    /// Diagonal of the density matrix.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(psi) => psi.as_slice().iter().map(|a| a.norm_sqr()).collect(),
            QuantumState::Mixed(rho) => rho.diag().iter().map(|x| x.re).collect(),
        }
    }

    /// Applies `U·U†`.
    pub fn transform(&self, u: &CMatrix) -> Result<QuantumState> {
        Ok(match self {
            QuantumState::Pure(psi) => QuantumState::Pure(u.apply(psi)?),
            QuantumState::Mixed(rho) => QuantumState::Mixed(u.checked_mul(rho)?.checked_mul(&u.adjoint())?),
        })
    }

    /// Conjugates by `diag(e^{i·sign·E_j t})`: `sign = +1` takes a lab-frame
    /// state into the frame rotating with `diag(E)`, `-1` goes back.
    pub fn rotate_frame(&self, energies: &[f64], t: f64, sign: f64) -> Result<QuantumState> {
        if energies.len() != self.dim() {
            return Err(Error::dim(self.dim(), energies.len()));
        }
        let ph: Vec<C64> = energies.iter().map(|e| C64::from_polar(1.0, sign * e * t)).collect();
        Ok(match self {
            QuantumState::Pure(psi) => {
                QuantumState::Pure(StateVector::new(psi.as_slice().iter().zip(&ph).map(|(a, p)| a * p).collect()))
            }
            QuantumState::Mixed(rho) => {
                let n = rho.rows();
                QuantumState::Mixed(CMatrix::from_fn(n, n, |i, j| rho[(i, j)] * ph[i] * ph[j].conj()))
            }
        })
    }

    /// Checks trace, Hermiticity and positivity at the snapshot tolerances.
    pub fn check_physical(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > tol::TRACE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        if let QuantumState::Mixed(rho) = self {
            if !rho.is_hermitian(tol::SNAPSHOT_HERMITIAN) {
                return Err(Error::InvalidState("density matrix is not Hermitian".into()));
            }
            let min = hermitian_eigen(rho)?.values[0];
            if min < tol::MIN_EIGENVALUE {
                return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(())
    }
}

impl From<StateVector> for QuantumState {
    fn from(psi: StateVector) -> Self {
        QuantumState::Pure(psi)
    }
}

impl From<CMatrix> for QuantumState {
    fn from(rho: CMatrix) -> Self {
        QuantumState::Mixed(rho)
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub step_count: usize,
    /// Largest `|tr ρ − 1|` over the snapshots.
    pub max_trace_error: f64,
}

impl EvolutionResult {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("evolution results always hold the final state")
    }

    /// Every snapshot is a valid state within the snapshot tolerances.
    pub fn check_cptp(&self) -> Result<()> {
        for (t, s) in self.times.iter().zip(&self.states) {
            s.check_physical().map_err(|e| Error::InvalidState(format!("at t = {t:e} s: {e}")))?;
        }
        Ok(())
    }
}

/// Start time and integrator settings.
#[derive(Clone, Debug)]
pub struct Integration {
    pub t0: f64,
    pub options: OdeOptions<f64>,
}

impl Default for Integration {
    fn default() -> Self {
        Integration { t0: 0.0, options: OdeOptions::default() }
    }
}

impl Integration {
    pub fn starting_at(t0: f64) -> Self {
        Integration { t0, ..Self::default() }
    }
}

fn output_grid(t0: f64, t_final: f64, snapshots: &[f64]) -> Result<Vec<f64>> {
    if !(t_final >= t0) {
        return Err(Error::InvalidParameter(format!("t_final {t_final:e} precedes t0 {t0:e}")));
    }
    if snapshots.iter().any(|&t| !(t >= t0 && t <= t_final)) || snapshots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("snapshot times must be ascending within [t0, t_final]".into()));
    }
    let mut grid = snapshots.to_vec();
    if grid.last() != Some(&t_final) {
        grid.push(t_final);
    }
    Ok(grid)
}

fn trace_error(states: &[QuantumState]) -> f64 {
    states.iter().map(|s| (s.trace() - 1.0).abs()).fold(0.0, f64::max)
}

pub fn evolve_schrodinger<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    snapshots: &[f64],
) -> Result<EvolutionResult> {
    evolve_schrodinger_with(h, psi0, t_final, snapshots, &Integration::default())
}

fn normalize(y: &mut [C64]) {
    let norm = y.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in y.iter_mut() {
            *a /= norm;
        }
    }
}

/// Integrates `iψ̇ = H(t)ψ`, renormalizing after every step (explicit
/// Runge–Kutta does not conserve the norm by itself); the snapshots are interpolated from the
/// integrator's dense output and `t_final` is always the last one.
pub fn evolve_schrodinger_with<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    snapshots: &[f64],
    int: &Integration,
) -> Result<EvolutionResult> {
    let n = h.dim();
    if psi0.dim() != n {
        return Err(Error::dim(n, psi0.dim()));
    }
    if (psi0.norm() - 1.0).abs() > tol::NORM {
        return Err(Error::InvalidState(format!("initial state has norm {}", psi0.norm())));
    }
    let grid = output_grid(int.t0, t_final, snapshots)?;
    let mut hbuf = CMatrix::zeros(n, n);
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        h.fill(t, &mut hbuf);
        let hs = hbuf.as_slice();
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += hs[i * n + j] * y[j];
            }
            dy[i] = C64::new(acc.im, -acc.re);
        }
    };
    let sol = integrate_projected(rhs, normalize, int.t0, psi0.as_slice(), &grid, &int.options)?;
    let states: Vec<QuantumState> = sol.states.into_iter().map(|v| QuantumState::Pure(StateVector::new(v))).collect();
    Ok(EvolutionResult { max_trace_error: trace_error(&states), times: sol.times, states, step_count: sol.stats.steps() })
}

/// Sparse collapse operator scaled by `sqrt(rate)`.
#[derive(Clone, Debug)]
struct Collapse {
    entries: Vec<(usize, usize, C64)>,
}

/// Collapse operators `√γ L` of the six-level master equation.
fn collapse_operators(noise: &NoiseParams) -> Vec<(f64, CMatrix)> {
    let s = spin1_operators::<f64>();
    let i = spin_half_operators::<f64>();
    let id2 = CMatrix::identity(2);
    let id3 = CMatrix::identity(3);
    let sigma_z = i.iz.scale_real(2.0);
    vec![
        (noise.gamma_n2, kron(&id3, &sigma_z)),
        (noise.gamma_e1 * (noise.nbar_e + 1.0), kron(&s.sm, &id2)),
        (noise.gamma_e1 * noise.nbar_e, kron(&s.sp, &id2)),
        (noise.gamma_n1 * (noise.nbar_n + 1.0), kron(&id3, &i.im)),
        (noise.gamma_n1 * noise.nbar_n, kron(&id3, &i.ip)),
    ]
}

pub fn evolve_lindblad<H: Hamiltonian + ?Sized>(
    h: &H,
    noise: &NoiseParams,
    rho0: &QuantumState,
    t_final: f64,
    snapshots: &[f64],
) -> Result<EvolutionResult> {
    evolve_lindblad_with(h, noise, rho0, t_final, snapshots, &Integration::default())
}

/// Integrates
/// `ρ̇ = −i[H, ρ] + Σ_k γ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})` with
/// `γL ∈ {Γn⁽²⁾σ_z, Γe⁽¹⁾(n̄e+1)S₋, Γe⁽¹⁾n̄e S₊, Γn⁽¹⁾(n̄n+1)σ₋, Γn⁽¹⁾n̄n σ₊}`.
/// The collapse operators are the fixed spin operators in whatever frame
/// `h` is written in. The quasi-static term λ is ignored here.
pub fn evolve_lindblad_with<H: Hamiltonian + ?Sized>(
    h: &H,
    noise: &NoiseParams,
    rho0: &QuantumState,
    t_final: f64,
    snapshots: &[f64],
    int: &Integration,
) -> Result<EvolutionResult> {
    noise.validate()?;
    let n = h.dim();
    if n != 6 {
        return Err(Error::dim(6, n));
    }
    if rho0.dim() != n {
        return Err(Error::dim(n, rho0.dim()));
    }
    rho0.check_physical().map_err(|e| Error::InvalidState(format!("initial state: {e}")))?;
    let grid = output_grid(int.t0, t_final, snapshots)?;

    let mut g = CMatrix::zeros(n, n);
    let mut jumps = Vec::new();
    for (rate, l) in collapse_operators(noise) {
        if rate == 0.0 {
            continue;
        }
        g += &(&l.adjoint() * &l).scale_real(0.5 * rate);
        let sq = rate.sqrt();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if l[(r, c)].norm() > 0.0 {
                    entries.push((r, c, l[(r, c)] * sq));
                }
            }
        }
        jumps.push(Collapse { entries });
    }
    let gs = g.as_slice().to_vec();

    let mut hbuf = CMatrix::zeros(n, n);
    let mut k = vec![C64::new(0.0, 0.0); n * n];
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    let rhs = |t: f64, rho: &[C64], drho: &mut [C64]| {
        h.fill(t, &mut hbuf);
        let hs = hbuf.as_slice();
        // K = −iH − G
        for idx in 0..n * n {
            k[idx] = C64::new(hs[idx].im, -hs[idx].re) - gs[idx];
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..n {
                    acc += k[i * n + l] * rho[l * n + j];
                }
                m[i * n + j] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                drho[i * n + j] = m[i * n + j] + m[j * n + i].conj();
            }
        }
        for jump in &jumps {
            for &(a, i, la) in &jump.entries {
                for &(b, j, lb) in &jump.entries {
                    drho[a * n + b] += la * rho[i * n + j] * lb.conj();
                }
            }
        }
    };
    let rho = rho0.density();
    let sol = integrate(rhs, int.t0, rho.as_slice(), &grid, &int.options)?;
    let states: Vec<QuantumState> = sol
        .states
        .into_iter()
        .map(|v| CMatrix::from_vec(n, n, v).map(QuantumState::Mixed))
        .collect::<Result<_>>()?;
    Ok(EvolutionResult { max_trace_error: trace_error(&states), times: sol.times, states, step_count: sol.stats.steps() })
}

/// Exact propagation over `duration` under a time-independent Hamiltonian
/// `h` and the collapse operators of [`evolve_lindblad_with`], both in the
/// same fixed frame: `exp(−iht)` for a pure state without dissipation, the
/// exponential of the Liouvillian otherwise. The quasi-static term λ is
/// ignored here.
pub fn propagate_static(h: &CMatrix, noise: &NoiseParams, state: &QuantumState, duration: f64) -> Result<QuantumState> {
    noise.validate()?;
    let n = h.rows();
    if !h.is_square() || state.dim() != n {
        return Err(Error::dim(format!("{n}x{n} and a {n}-dim state"), state.dim()));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration must be finite and >= 0, got {duration:e}")));
    }
    if let (QuantumState::Pure(psi), false) = (state, noise.is_dissipative()) {
        let u = matrix_exponential(h, C64::new(0.0, -duration))?;
        return Ok(QuantumState::Pure(u.apply(psi)?));
    }
    if n != 6 && noise.is_dissipative() {
        return Err(Error::dim(6, n));
    }
    // row-major vec(ρ): (AρB)_(ij) = Σ A_ik B_lj ρ_kl
    let mut g = CMatrix::zeros(n, n);
    let ops: Vec<(f64, CMatrix)> = if noise.is_dissipative() {
        collapse_operators(noise).into_iter().filter(|(r, _)| *r > 0.0).collect()
    } else {
        Vec::new()
    };
    for (rate, l) in &ops {
        g += &(&l.adjoint() * l).scale_real(0.5 * rate);
    }
    let k = h.scale(C64::new(0.0, -1.0)) - g;
    let liouvillian = CMatrix::from_fn(n * n, n * n, |r, c| {
        let (i, j, a, b) = (r / n, r % n, c / n, c % n);
        let mut v = C64::new(0.0, 0.0);
        if j == b {
            v += k[(i, a)];
        }
        if i == a {
            v += k[(j, b)].conj();
        }
        for (rate, l) in &ops {
            v += l[(i, a)] * l[(j, b)].conj() * *rate;
        }
        v
    });
    let prop = expm_pade(&liouvillian.scale_real(duration))?;
    let rho = CMatrix::from_vec(n * n, 1, state.density().into_vec())?;
    let out = prop.checked_mul(&rho)?;
    Ok(QuantumState::Mixed(CMatrix::from_vec(n, n, out.into_vec())?))
}

/// `h` plus a constant matrix.
struct Shifted<'a, H: ?Sized> {
    inner: &'a H,
    extra: CMatrix,
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for Shifted<'_, H> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn fill(&self, t: f64, out: &mut CMatrix) {
        self.inner.fill(t, out);
        *out += &self.extra;
    }
}

/// Standard-normal noise sample of trajectory `k`, from its own ChaCha stream.
pub fn noise_sample(seed: u64, k: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    StandardNormal.sample(&mut rng)
}

pub fn evolve_with_quasistatic_noise<H: Hamiltonian + ?Sized>(
    h: &H,
    noise: &NoiseParams,
    rho0: &QuantumState,
    t_final: f64,
    snapshots: &[f64],
    seed: u64,
) -> Result<EvolutionResult> {
    evolve_with_quasistatic_noise_with(h, noise, rho0, t_final, snapshots, seed, &Integration::default())
}

/// Averages `ensemble_size` master-equation runs, trajectory `k` carrying the
/// extra static term `λ f_k S_z ⊗ 1` with `f_k ~ N(0, 1)`. The term is
/// diagonal, so it reads the same in the lab and H₀ frames. Trajectories run
/// in parallel and are summed in index order, so the result depends only on
/// the seed. With λ = 0 this is a single [`evolve_lindblad`] run.
pub fn evolve_with_quasistatic_noise_with<H: Hamiltonian + ?Sized>(
    h: &H,
    noise: &NoiseParams,
    rho0: &QuantumState,
    t_final: f64,
    snapshots: &[f64],
    seed: u64,
    int: &Integration,
) -> Result<EvolutionResult> {
    noise.validate()?;
    if noise.lambda_e == 0.0 {
        return evolve_lindblad_with(h, noise, rho0, t_final, snapshots, int);
    }
    let sz = kron(&spin1_operators::<f64>().sz, &CMatrix::identity(2));
    let runs: Vec<Result<EvolutionResult>> = (0..noise.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let shifted = Shifted { inner: h, extra: sz.scale_real(noise.lambda_e * noise_sample(seed, k)) };
            evolve_lindblad_with(&shifted, noise, rho0, t_final, snapshots, int)
        })
        .collect();
    let mut runs = runs.into_iter();
    let first = runs.next().expect("ensemble_size >= 1")?;
    let mut sums: Vec<CMatrix> = first.states.iter().map(QuantumState::density).collect();
    let mut steps = first.step_count;
    for run in runs {
        let run = run?;
        steps += run.step_count;
        for (acc, s) in sums.iter_mut().zip(&run.states) {
            *acc += &s.density();
        }
    }
    let w = 1.0 / noise.ensemble_size as f64;
    let states: Vec<QuantumState> = sums.into_iter().map(|m| QuantumState::Mixed(m.scale_real(w))).collect();
    Ok(EvolutionResult { max_trace_error: trace_error(&states), times: first.times, states, step_count: steps })
}

/// Picks the cheapest engine for `noise`: Schrödinger for a pure state with no
/// dissipation and λ = 0, a single master-equation run when only λ = 0, and
/// the quasi-static ensemble otherwise.
pub fn evolve<H: Hamiltonian + ?Sized>(
    h: &H,
    noise: &NoiseParams,
    state: &QuantumState,
    t_final: f64,
    snapshots: &[f64],
    seed: u64,
    int: &Integration,
) -> Result<EvolutionResult> {
    noise.validate()?;
    match state {
        QuantumState::Pure(psi) if !noise.is_dissipative() && noise.lambda_e == 0.0 => {
            evolve_schrodinger_with(h, psi, t_final, snapshots, int)
        }
        _ => evolve_with_quasistatic_noise_with(h, noise, state, t_final, snapshots, seed, int),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_samples_are_deterministic_and_distinct() {
        assert_eq!(noise_sample(7, 3), noise_sample(7, 3));
        assert_ne!(noise_sample(7, 3), noise_sample(7, 4));
        assert_ne!(noise_sample(7, 3), noise_sample(8, 3));
    }

    #[test]
    fn output_grid_appends_final_time() {
        assert_eq!(output_grid(0.0, 1.0, &[0.5]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(output_grid(0.0, 1.0, &[]).unwrap(), vec![1.0]);
        assert!(output_grid(0.0, 1.0, &[2.0]).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        assert!(NoiseParams::defaults().validate().is_ok());
        assert!(NoiseParams { ensemble_size: 0, ..NoiseParams::defaults() }.validate().is_err());
    }
}
