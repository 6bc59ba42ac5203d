//! Gate-level experiments: ideal targets, error metrics, and full-model
//! simulations of the CZ gate and of electron and nuclear rotations.
//!
//! Rotation angles are Bloch angles θ with `R_a(θ) = cos(θ/2)·1 + i sin(θ/2)·σ_a`,
//! the Pauli matrices written in the ordered pair `(|1⟩_q, |0⟩_q)`, i.e.
//! `(|+1⟩, |0⟩)` for the electron and `(|↑⟩, |↓⟩)` for the nucleus. These are
//! the rotations a resonant drive with phase `φ = −π` (x) or `φ = −π/2` (y)
//! produces.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use crate::dynamics::{evolve, Integration, NoiseParams, QuantumState};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    basis_state, embed_qubit_state, nuclear_coupling, nuclear_rabi_rate, nuclear_rabi_rate_dressed,
    nuclear_transition_frequency, project_qubit_state, DriveParams, ElectronLevel, ModelHamiltonian, NuclearLevel,
    SystemParams, QUBIT_INDICES,
};
use crate::{kron, matrix_exponential, spin_half_operators, CMatrix, StateVector, C64};

const MINUS_ONE_BLOCK: [usize; 2] = [4, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    /// Drive phase that produces a rotation about this axis.
    pub fn drive_phase(self) -> f64 {
        match self {
            Axis::X => -PI,
            Axis::Y => -FRAC_PI_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    Cz,
    ElectronRotation(Axis, f64),
    NuclearRotation(Axis, f64),
}

/// Target unitary on the qubit subspace, in the order `|00⟩, |01⟩, |10⟩, |11⟩`
/// (electron first).
#[derive(Clone, Debug, PartialEq)]
pub struct IdealGate {
    pub kind: GateKind,
    pub unitary: CMatrix,
}

/// Single-qubit `R_a(θ)` in the `(|0⟩_q, |1⟩_q)` basis.
pub fn qubit_rotation(axis: Axis, theta: f64) -> CMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let cc = C64::new(c, 0.0);
    let data = match axis {
        Axis::X => vec![cc, C64::new(0.0, s), C64::new(0.0, s), cc],
        // σ_y in (|1⟩, |0⟩) order is −σ_y in (|0⟩, |1⟩) order
        Axis::Y => vec![cc, C64::new(-s, 0.0), C64::new(s, 0.0), cc],
    };
    CMatrix::from_vec(2, 2, data).expect("2x2")
}

/// `exp(−iθσ_z/2)` on the electron, `σ_z = diag(1, −1)` in `(|0⟩_q, |1⟩_q)`.
pub fn electron_z_rotation(theta: f64) -> CMatrix {
    let rz = CMatrix::from_diag(&[C64::from_polar(1.0, -theta / 2.0), C64::from_polar(1.0, theta / 2.0)]);
    kron(&rz, &CMatrix::identity(2))
}

/// `exp(−i(A∥/2)|1⟩⟨1|⊗σ_z·t)` on the qubit subspace.
pub fn hyperfine_phase_gate(p: &SystemParams, t: f64) -> CMatrix {
    let phase = 0.5 * p.a_par * t;
    CMatrix::from_diag(&[
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::from_polar(1.0, phase),
        C64::from_polar(1.0, -phase),
    ])
}

impl IdealGate {
    pub fn cz() -> Self {
        IdealGate { kind: GateKind::Cz, unitary: CMatrix::from_real_diag(&[1.0, 1.0, 1.0, -1.0]) }
    }

    pub fn electron_rotation(axis: Axis, theta: f64) -> Self {
        IdealGate {
            kind: GateKind::ElectronRotation(axis, theta),
            unitary: kron(&qubit_rotation(axis, theta), &CMatrix::identity(2)),
        }
    }

    pub fn nuclear_rotation(axis: Axis, theta: f64) -> Self {
        IdealGate {
            kind: GateKind::NuclearRotation(axis, theta),
            unitary: kron(&CMatrix::identity(2), &qubit_rotation(axis, theta)),
        }
    }

    /// Applies the gate to a 4-dim qubit state or a 6-dim state supported on
    /// the qubit subspace.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        match psi.dim() {
            4 => self.unitary.apply(psi),
            6 => embed_qubit_state(&self.unitary.apply(&project_qubit_state(psi)?)?),
            n => Err(Error::dim("4 or 6", n)),
        }
    }
}

/// Local correction turning the hyperfine phase gate at t_CZ into CZ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CzDecomposition {
    /// Angle of the electron `exp(−iθσ_z/2)`.
    pub electron_z_angle: f64,
}

/// At t_CZ the hyperfine phase gate is `diag(1, 1, i, −i)`; an electron
/// z rotation by −π/2, `∝ diag(1, −i)`, turns it into `diag(1, 1, 1, −1)`.
pub fn decompose_hyperfine_to_cz() -> CzDecomposition {
    CzDecomposition { electron_z_angle: -FRAC_PI_2 }
}

/// `1 − ⟨target|ρ|target⟩`; a 4-dim target is embedded in the six-level space.
pub fn error_probability(rho: &QuantumState, target: &StateVector) -> Result<f64> {
    let target = match (target.dim(), rho.dim()) {
        (4, 6) => embed_qubit_state(target)?,
        _ => target.clone(),
    };
    if (target.norm() - 1.0).abs() > crate::tol::NORM {
        return Err(Error::InvalidState(format!("target norm {} differs from 1", target.norm())));
    }
    Ok((1.0 - rho.overlap(&target)?).clamp(0.0, 1.0))
}

/// Population of the electron `|−1⟩` block.
pub fn leakage(rho: &QuantumState) -> Result<f64> {
    if rho.dim() != 6 {
        return Err(Error::dim(6, rho.dim()));
    }
    let pops = rho.populations();
    Ok(MINUS_ONE_BLOCK.iter().map(|&i| pops[i]).sum::<f64>().clamp(0.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct GateResult {
    /// Time since the start of the gate (s).
    pub duration: f64,
    pub error_probability: f64,
    pub leakage: f64,
    /// Nominal Bloch angle reached at `duration`, for rotations.
    pub rotation_angle: Option<f64>,
    pub final_state: QuantumState,
}

/// Extremes of the error around a nominal gate time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingWindow {
    pub nominal_time: f64,
    pub half_width: f64,
    /// Largest error in the window.
    pub conservative_error: f64,
    /// Smallest error in the window and where it occurs.
    pub optimal_error: f64,
    pub optimal_time: f64,
}

#[derive(Clone, Debug)]
pub struct GateSeries {
    pub points: Vec<GateResult>,
    /// Time of the `|0⟩ → |+⟩` (Bloch π/2) rotation, or t_CZ.
    pub nominal_time: Option<f64>,
    pub step_count: usize,
}

impl GateSeries {
    /// First point at or after `t`.
    pub fn at(&self, t: f64) -> Option<&GateResult> {
        self.points.iter().find(|r| r.duration >= t * (1.0 - 1e-12))
    }

    /// First point whose nominal rotation angle reaches `theta`.
    pub fn first_crossing(&self, theta: f64) -> Option<&GateResult> {
        self.points.iter().find(|r| r.rotation_angle.is_some_and(|a| a >= theta * (1.0 - 1e-12)))
    }

    pub fn max_leakage(&self, until: f64) -> f64 {
        self.points.iter().filter(|r| r.duration <= until).map(|r| r.leakage).fold(0.0, f64::max)
    }

    /// Error extremes over `[t − half_width, t + half_width]` around the nominal time.
    pub fn timing_window(&self, half_width: f64) -> Option<TimingWindow> {
        let t0 = self.nominal_time?;
        let inside: Vec<&GateResult> =
            self.points.iter().filter(|r| (r.duration - t0).abs() <= half_width * (1.0 + 1e-12)).collect();
        let worst = inside.iter().map(|r| r.error_probability).fold(f64::NAN, f64::max);
        let best = inside.iter().min_by(|a, b| a.error_probability.total_cmp(&b.error_probability))?;
        Some(TimingWindow {
            nominal_time: t0,
            half_width,
            conservative_error: worst,
            optimal_error: best.error_probability,
            optimal_time: best.duration,
        })
    }
}

/// Output grid and run settings shared by the gate simulations.
#[derive(Clone, Debug)]
pub struct GateOptions {
    /// Uniform grid points on `[0, t_final]`, both ends included.
    pub points: usize,
    /// Additional output times.
    pub extra_times: Vec<f64>,
    /// Spacing of the refined grid laid around the nominal nuclear gate time.
    pub window_spacing: f64,
    /// Half width of that refined grid; zero disables it.
    pub window_half_width: f64,
    pub seed: u64,
    pub integration: Integration,
    /// Overrides the default initial state of the experiment.
    pub initial_state: Option<StateVector>,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions {
            points: 201,
            extra_times: Vec::new(),
            window_spacing: 5e-9,
            window_half_width: 0.0,
            seed: 0,
            integration: Integration::default(),
            initial_state: None,
        }
    }
}

impl GateOptions {
    fn grid(&self, t_final: f64, nominal: &[f64], window_center: Option<f64>) -> Result<Vec<f64>> {
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_final must be finite and >= 0, got {t_final:e}")));
        }
        let n = self.points.max(2);
        let mut g: Vec<f64> =
            (0..n).map(|k| if k + 1 == n { t_final } else { t_final * k as f64 / (n - 1) as f64 }).collect();
        g.extend(self.extra_times.iter().copied());
        g.extend(nominal.iter().copied());
        if let Some(c) = window_center {
            if self.window_half_width > 0.0 && self.window_spacing > 0.0 {
                let m = (self.window_half_width / self.window_spacing).ceil() as i64;
                g.extend((-m..=m).map(|k| c + k as f64 * self.window_spacing));
            }
        }
        g.retain(|&t| (0.0..=t_final).contains(&t));
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * t_final.max(1e-300));
        Ok(g)
    }
}

fn check_qubit_state(psi: &StateVector) -> Result<()> {
    if psi.dim() != 6 {
        return Err(Error::dim(6, psi.dim()));
    }
    let outside: f64 = MINUS_ONE_BLOCK.iter().map(|&i| psi[i].norm_sqr()).sum();
    if outside > 1e-12 {
        return Err(Error::InvalidState("initial state has weight outside the qubit subspace".into()));
    }
    if (psi.norm() - 1.0).abs() > crate::tol::NORM {
        return Err(Error::InvalidState("initial state is not normalized".into()));
    }
    Ok(())
}

fn plus_nucleus(electron: ElectronLevel) -> StateVector {
    let r = 0.5f64.sqrt();
    let a = basis_state(electron, NuclearLevel::Up).scale(C64::new(r, 0.0));
    let b = basis_state(electron, NuclearLevel::Down).scale(C64::new(r, 0.0));
    &a + &b
}

/// Full six-level drive-off evolution in the H₀ frame, compared at every
/// grid time with `CZ`-corrected hyperfine phase evolution of `psi0`:
/// both the simulated state and the ideal state get the electron z correction
/// of [`decompose_hyperfine_to_cz`].
pub fn simulate_cz(
    p: &SystemParams,
    noise: &NoiseParams,
    psi0: &StateVector,
    t_final: f64,
    opts: &GateOptions,
) -> Result<GateSeries> {
    p.validate()?;
    check_qubit_state(psi0)?;
    let t_cz = p.cz_time();
    let grid = opts.grid(t_final, &[t_cz], None)?;
    let h = ModelHamiltonian::interaction(p, &DriveParams::off());
    let run = evolve(&h, noise, &QuantumState::Pure(psi0.clone()), t_final, &grid, opts.seed, &opts.integration)?;

    let corr = electron_z_rotation(decompose_hyperfine_to_cz().electron_z_angle);
    let corr6 = embed_unitary(&corr);
    let q0 = project_qubit_state(psi0)?;
    let mut points = Vec::with_capacity(run.times.len());
    for (&t, state) in run.times.iter().zip(&run.states) {
        let ideal = embed_qubit_state(&corr.apply(&hyperfine_phase_gate(p, t).apply(&q0)?)?)?;
        let corrected = state.transform(&corr6)?;
        points.push(GateResult {
            duration: t,
            error_probability: error_probability(&corrected, &ideal)?,
            leakage: leakage(state)?,
            rotation_angle: None,
            final_state: state.clone(),
        });
    }
    Ok(GateSeries { points, nominal_time: Some(t_cz), step_count: run.step_count })
}

/// 4×4 qubit unitary lifted to 6×6, identity on `|−1⟩`.
fn embed_unitary(u: &CMatrix) -> CMatrix {
    let mut out = CMatrix::identity(6);
    for (i, &fi) in QUBIT_INDICES.iter().enumerate() {
        for (j, &fj) in QUBIT_INDICES.iter().enumerate() {
            out[(fi, fj)] = u[(i, j)];
        }
    }
    out
}

/// Time for an electron Bloch rotation by `theta`, `√2·θ/Ω₀`.
pub fn electron_rotation_time(d: &DriveParams, theta: f64) -> f64 {
    SQRT_2 * theta / d.omega0
}

/// Driven full-model evolution in the H₀ frame against the ideal electron
/// rotation by the nominal angle `Ω₀t/√2`. The drive phase is set by `axis`;
/// amplitude, frequency and polarization come from `d`. Default initial state
/// `|0⟩ₑ|+⟩ₙ`.
pub fn simulate_electron_rotation(
    p: &SystemParams,
    noise: &NoiseParams,
    d: &DriveParams,
    axis: Axis,
    t_final: f64,
    opts: &GateOptions,
) -> Result<GateSeries> {
    p.validate()?;
    d.validate()?;
    if d.omega0 <= 0.0 {
        return Err(Error::InvalidParameter("electron rotation needs omega0 > 0".into()));
    }
    let d = DriveParams { phi: axis.drive_phase(), ..*d };
    let psi0 = opts.initial_state.clone().unwrap_or_else(|| plus_nucleus(ElectronLevel::Zero));
    check_qubit_state(&psi0)?;
    let quarter = electron_rotation_time(&d, FRAC_PI_2);
    let half = electron_rotation_time(&d, PI);
    let grid = opts.grid(t_final, &[quarter, half], None)?;
    let h = ModelHamiltonian::interaction(p, &d);
    let run = evolve(&h, noise, &QuantumState::Pure(psi0.clone()), t_final, &grid, opts.seed, &opts.integration)?;

    let mut points = Vec::with_capacity(run.times.len());
    for (&t, state) in run.times.iter().zip(&run.states) {
        let theta = d.omega0 * t / SQRT_2;
        let ideal = IdealGate::electron_rotation(axis, theta).apply(&psi0)?;
        points.push(GateResult {
            duration: t,
            error_probability: error_probability(state, &ideal)?,
            leakage: leakage(state)?,
            rotation_angle: Some(theta),
            final_state: state.clone(),
        });
    }
    Ok(GateSeries { points, nominal_time: Some(quarter), step_count: run.step_count })
}

/// Nominal nuclear rotation rate for the electron in `electron`: the closed
/// form [`nuclear_rabi_rate`] for `|+1⟩`, the dressed-state rate otherwise.
/// Negative when the effective coupling is, i.e. the rotation runs backwards.
pub fn nuclear_rotation_rate(p: &SystemParams, d: &DriveParams, electron: ElectronLevel) -> Result<f64> {
    let sign = nuclear_coupling(p, d.polarization, electron)?.signum();
    let rate = match electron {
        ElectronLevel::Plus => nuclear_rabi_rate(p, d)?,
        ElectronLevel::Zero => nuclear_rabi_rate_dressed(p, d, electron)?,
        ElectronLevel::Minus => {
            return Err(Error::InvalidParameter("nuclear rotations need the electron in |0> or |+1>".into()))
        }
    };
    Ok(sign * rate)
}

/// Time for a nuclear Bloch rotation by `theta`, `θ/(2Ω_eff)`.
pub fn nuclear_rotation_time(p: &SystemParams, d: &DriveParams, electron: ElectronLevel, theta: f64) -> Result<f64> {
    let rate = nuclear_rotation_rate(p, d, electron)?.abs();
    if rate == 0.0 {
        return Err(Error::Resonance("nuclear Rabi rate vanishes".into()));
    }
    Ok(theta / (2.0 * rate))
}

/// Drive amplitude giving the same ratio of Rabi rate to nuclear transition
/// frequency with the electron in `electron` as `reference` has with the
/// electron in `|+1⟩`.
pub fn matched_nuclear_amplitude(p: &SystemParams, reference: &DriveParams, electron: ElectronLevel) -> Result<f64> {
    let r_ref = nuclear_rabi_rate_dressed(p, reference, ElectronLevel::Plus)?
        / nuclear_transition_frequency(p, ElectronLevel::Plus)?.abs();
    let unit = DriveParams { omega0: 1.0, ..*reference };
    let per_amp = nuclear_rabi_rate_dressed(p, &unit, electron)?;
    if per_amp == 0.0 {
        return Err(Error::Resonance("nuclear coupling vanishes".into()));
    }
    Ok(r_ref * nuclear_transition_frequency(p, electron)?.abs() / per_amp)
}

/// Diagonal of `ω_r I_z` on the six-level space.
fn nuclear_frame_energies(omega_r: f64) -> Vec<f64> {
    (0..6).map(|j| if j % 2 == 0 { 0.5 * omega_r } else { -0.5 * omega_r }).collect()
}

fn nuclear_setup(
    p: &SystemParams,
    d: &DriveParams,
    electron: ElectronLevel,
    axis: Axis,
    opts: &GateOptions,
) -> Result<(DriveParams, StateVector, f64)> {
    p.validate()?;
    d.validate()?;
    if electron == ElectronLevel::Minus {
        return Err(Error::InvalidParameter("nuclear rotations need the electron in |0> or |+1>".into()));
    }
    if d.omega0 <= 0.0 {
        return Err(Error::InvalidParameter("nuclear rotation needs omega0 > 0".into()));
    }
    let d = DriveParams { phi: axis.drive_phase(), ..*d };
    let psi0 = opts.initial_state.clone().unwrap_or_else(|| basis_state(electron, NuclearLevel::Down));
    check_qubit_state(&psi0)?;
    let rate = nuclear_rotation_rate(p, &d, electron)?;
    Ok((d, psi0, rate))
}

/// Full-model evolution with an RF drive at `d.omega`, compared in the frame
/// rotating with the drive against the ideal nuclear rotation by the nominal
/// angle `2Ω_eff·t` (electron unchanged). The drive phase is set by `axis`.
/// Default initial state `|e⟩|↓⟩`. If `opts.window_half_width > 0`, a grid of
/// spacing `opts.window_spacing` is laid around the π/2 time.
pub fn simulate_nuclear_rotation(
    p: &SystemParams,
    noise: &NoiseParams,
    d: &DriveParams,
    electron: ElectronLevel,
    axis: Axis,
    t_final: f64,
    opts: &GateOptions,
) -> Result<GateSeries> {
    let (d, psi0, rate) = nuclear_setup(p, d, electron, axis, opts)?;
    let quarter = FRAC_PI_2 / (2.0 * rate.abs());
    let grid = opts.grid(t_final, &[quarter], Some(quarter))?;
    let h = ModelHamiltonian::interaction(p, &d);
    let run = evolve(&h, noise, &QuantumState::Pure(psi0.clone()), t_final, &grid, opts.seed, &opts.integration)?;
    // H₀ already removes −Bγn I_z; rotate the rest of the way to the drive
    let frame = nuclear_frame_energies(d.omega + p.b * p.gamma_n);

    let mut points = Vec::with_capacity(run.times.len());
    for (&t, state) in run.times.iter().zip(&run.states) {
        let theta = 2.0 * rate * t;
        let ideal = IdealGate::nuclear_rotation(axis, theta).apply(&psi0)?;
        let moved = state.rotate_frame(&frame, t, 1.0)?;
        points.push(GateResult {
            duration: t,
            error_probability: error_probability(&moved, &ideal)?,
            leakage: leakage(state)?,
            rotation_angle: Some(theta.abs()),
            final_state: moved,
        });
    }
    Ok(GateSeries { points, nominal_time: Some(quarter), step_count: run.step_count })
}

/// Rotating-wave two-level model of the nuclear drive, the fast cross-check of
/// [`simulate_nuclear_rotation`]: in the frame of the drive,
/// `H = (ν_e − ω)I_z + Ω₀c(cos φ I_x + sin φ I_y)` with ν_e the dressed
/// nuclear splitting and c the [`nuclear_coupling`]. Coherent only.
pub fn simulate_nuclear_rotation_rwa(
    p: &SystemParams,
    d: &DriveParams,
    electron: ElectronLevel,
    axis: Axis,
    t_final: f64,
    opts: &GateOptions,
) -> Result<GateSeries> {
    let (d, psi0, rate) = nuclear_setup(p, d, electron, axis, opts)?;
    let quarter = FRAC_PI_2 / (2.0 * rate.abs());
    let grid = opts.grid(t_final, &[quarter], Some(quarter))?;
    let i = spin_half_operators::<f64>();
    let c = nuclear_coupling(p, d.polarization, electron)?;
    let detuning = nuclear_transition_frequency(p, electron)? - d.omega;
    let h2 = i.iz.scale_real(detuning)
        + (i.ix.scale_real(d.phi.cos()) + i.iy.scale_real(d.phi.sin())).scale_real(d.omega0 * c);
    let q0 = project_qubit_state(&psi0)?;

    let mut points = Vec::with_capacity(grid.len());
    for &t in &grid {
        // qubit order has the nucleus as (|↓⟩, |↑⟩); h2 is in (|↑⟩, |↓⟩)
        let u2 = matrix_exponential(&h2, C64::new(0.0, -t))?;
        let swap = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let u = kron(&CMatrix::identity(2), &(&(&swap * &u2) * &swap));
        let state = QuantumState::Pure(embed_qubit_state(&u.apply(&q0)?)?);
        let theta = 2.0 * rate * t;
        let ideal = IdealGate::nuclear_rotation(axis, theta).apply(&psi0)?;
        points.push(GateResult {
            duration: t,
            error_probability: error_probability(&state, &ideal)?,
            leakage: 0.0,
            rotation_angle: Some(theta.abs()),
            final_state: state,
        });
    }
    Ok(GateSeries { points, nominal_time: Some(quarter), step_count: 0 })
}

/// Largest difference of the error curves of the full and RWA nuclear models
/// over `[0, segment]`.
pub fn nuclear_rwa_discrepancy(
    p: &SystemParams,
    d: &DriveParams,
    electron: ElectronLevel,
    axis: Axis,
    segment: f64,
    opts: &GateOptions,
) -> Result<f64> {
    let opts = GateOptions { window_half_width: 0.0, ..opts.clone() };
    let full = simulate_nuclear_rotation(p, &NoiseParams::noiseless(), d, electron, axis, segment, &opts)?;
    let rwa = simulate_nuclear_rotation_rwa(p, d, electron, axis, segment, &opts)?;
    Ok(full
        .points
        .iter()
        .zip(&rwa.points)
        .map(|(a, b)| (a.error_probability - b.error_probability).abs())
        .fold(0.0, f64::max))
}
