//! Pulse sequences on the six-level model, and the characterization,
//! nuclear readout and nuclear initialization circuits built from them.
//!
//! A circuit runs on an absolute clock in the H₀ frame: every pulse is a
//! full-model driven evolution whose drive phase is referenced to t = 0, and
//! every wait is a drive-off evolution. Electron measurements are ideal
//! projections onto the `|0⟩ₑ` block, optionally followed by a classical
//! confusion of the recorded outcome. Since states are density matrices, the
//! two outcomes are carried as weighted branches, and a conditional step acts
//! on the branch whose last recorded outcome matches.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::algebra::{hermitian_eigen, kron, partial_trace_electron, partial_trace_nucleus, spin1_operators};
use crate::dynamics::{evolve, noise_sample, propagate_static, Integration, NoiseParams, QuantumState};
use crate::error::{Error, Result};
use crate::gates::{electron_rotation_time, nuclear_rotation_rate, nuclear_rotation_time, Axis};
use crate::hamiltonian::{
    basis_state, h0, h_static, DriveParams, ElectronLevel, ModelHamiltonian, NuclearLevel, Polarization, SystemParams,
};
use crate::ode::OdeOptions;
use crate::{CMatrix, StateVector, C64};

const ZERO_BLOCK: [usize; 2] = [2, 3];

#[derive(Clone, Debug, PartialEq)]
pub enum PulseStep {
    /// Electron rotation by the Bloch angle `angle`; the duration follows from
    /// the drive amplitude unless overridden.
    ElectronPulse { axis: Axis, angle: f64, drive: DriveParams, duration: Option<f64> },
    /// Nuclear rotation calibrated for the electron in `electron`.
    NuclearPulse { axis: Axis, angle: f64, drive: DriveParams, electron: ElectronLevel, duration: Option<f64> },
    Wait(f64),
    /// Records the probability of reading `|0⟩ₑ`; with `project` the state is
    /// split into the two outcome branches.
    MeasureElectronZ { project: bool },
    /// Instantaneous reset of the electron to a 3-dim state, nucleus kept.
    PrepareElectron(StateVector),
    /// Instantaneous reset of the nucleus to a 2-dim state `(|↑⟩, |↓⟩)`, electron kept.
    PrepareNucleus(StateVector),
    /// Runs `steps` on the branch whose last recorded outcome is `|0⟩ₑ` when
    /// `on_zero`, `|1⟩ₑ` otherwise; the other branch idles for as long.
    Conditional { on_zero: bool, steps: Vec<PulseStep> },
}

impl PulseStep {
    pub fn electron(axis: Axis, angle: f64, drive: DriveParams) -> Self {
        PulseStep::ElectronPulse { axis, angle, drive, duration: None }
    }

    pub fn nuclear(axis: Axis, angle: f64, drive: DriveParams, electron: ElectronLevel) -> Self {
        PulseStep::NuclearPulse { axis, angle, drive, electron, duration: None }
    }

    pub fn measure() -> Self {
        PulseStep::MeasureElectronZ { project: true }
    }

    pub fn prepare_electron(level: ElectronLevel) -> Self {
        PulseStep::PrepareElectron(StateVector::basis(3, level.index()))
    }

    pub fn prepare_nucleus(level: NuclearLevel) -> Self {
        PulseStep::PrepareNucleus(StateVector::basis(2, level.index()))
    }

    /// Replaces the nominal duration of a pulse; other steps are unchanged.
    pub fn with_duration(self, t: f64) -> Self {
        match self {
            PulseStep::ElectronPulse { axis, angle, drive, .. } => {
                PulseStep::ElectronPulse { axis, angle, drive, duration: Some(t) }
            }
            PulseStep::NuclearPulse { axis, angle, drive, electron, .. } => {
                PulseStep::NuclearPulse { axis, angle, drive, electron, duration: Some(t) }
            }
            other => other,
        }
    }

    fn validate(&self, p: &SystemParams, nested: bool) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedCircuit(m));
        let check_angle = |a: f64| {
            if a.is_finite() && a > -2.0 * PI && a <= 2.0 * PI {
                Ok(())
            } else {
                bad(format!("rotation angle {a} outside (-2pi, 2pi]"))
            }
        };
        let check_duration = |t: Option<f64>| match t {
            Some(t) if !(t.is_finite() && t >= 0.0) => bad(format!("duration {t:e} must be finite and >= 0")),
            _ => Ok(()),
        };
        match self {
            PulseStep::ElectronPulse { angle, drive, duration, .. } => {
                check_angle(*angle)?;
                check_duration(*duration)?;
                drive.validate()?;
                if duration.is_none() && drive.omega0 <= 0.0 {
                    return bad("electron pulse without duration needs omega0 > 0".into());
                }
            }
            PulseStep::NuclearPulse { angle, drive, electron, duration, .. } => {
                check_angle(*angle)?;
                check_duration(*duration)?;
                drive.validate()?;
                if duration.is_none() {
                    nuclear_rotation_rate(p, drive, *electron)?;
                }
            }
            PulseStep::Wait(t) => check_duration(Some(*t))?,
            PulseStep::MeasureElectronZ { .. } if nested => {
                return bad("measurements inside a conditional block are not supported".into())
            }
            PulseStep::MeasureElectronZ { .. } => {}
            PulseStep::PrepareElectron(s) => check_local_state(s, 3)?,
            PulseStep::PrepareNucleus(s) => check_local_state(s, 2)?,
            PulseStep::Conditional { .. } if nested => return bad("conditional blocks cannot be nested".into()),
            PulseStep::Conditional { steps, .. } => {
                for s in steps {
                    s.validate(p, true)?;
                }
            }
        }
        Ok(())
    }

    /// Wall-clock duration of the step.
    pub fn duration(&self, p: &SystemParams) -> Result<f64> {
        Ok(match self {
            PulseStep::ElectronPulse { duration: Some(t), .. } | PulseStep::NuclearPulse { duration: Some(t), .. } => *t,
            PulseStep::ElectronPulse { angle, drive, .. } => electron_rotation_time(drive, angle.abs()),
            PulseStep::NuclearPulse { angle, drive, electron, .. } => {
                nuclear_rotation_time(p, drive, *electron, angle.abs())?
            }
            PulseStep::Wait(t) => *t,
            PulseStep::Conditional { steps, .. } => {
                steps.iter().map(|s| s.duration(p)).sum::<Result<f64>>()?
            }
            _ => 0.0,
        })
    }

    fn describe(&self) -> String {
        let axis = |a: &Axis| match a {
            Axis::X => "x",
            Axis::Y => "y",
        };
        match self {
            PulseStep::ElectronPulse { axis: a, angle, .. } => format!("electron {} {angle:.6} rad", axis(a)),
            PulseStep::NuclearPulse { axis: a, angle, .. } => format!("nuclear {} {angle:.6} rad", axis(a)),
            PulseStep::Wait(t) => format!("wait {:.3} ns", t * 1e9),
            PulseStep::MeasureElectronZ { project: true } => "measure electron z".into(),
            PulseStep::MeasureElectronZ { project: false } => "electron z probability".into(),
            PulseStep::PrepareElectron(_) => "prepare electron".into(),
            PulseStep::PrepareNucleus(_) => "prepare nucleus".into(),
            PulseStep::Conditional { on_zero, .. } => {
                format!("if outcome {} then", if *on_zero { 0 } else { 1 })
            }
        }
    }
}

fn check_local_state(s: &StateVector, dim: usize) -> Result<()> {
    if s.dim() != dim {
        return Err(Error::MalformedCircuit(format!("prepared state has dimension {}, expected {dim}", s.dim())));
    }
    if (s.norm() - 1.0).abs() > crate::tol::NORM {
        return Err(Error::MalformedCircuit("prepared state is not normalized".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CircuitOptions {
    pub initial_state: QuantumState,
    /// Clock reading at the start of the circuit.
    pub t0: f64,
    /// Probability that a measurement records the wrong outcome.
    pub readout_error: f64,
    pub seed: u64,
    pub ode: OdeOptions<f64>,
}

impl Default for CircuitOptions {
    fn default() -> Self {
        CircuitOptions {
            initial_state: QuantumState::Pure(basis_state(ElectronLevel::Zero, NuclearLevel::Down)),
            t0: 0.0,
            readout_error: 0.0,
            seed: 0,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CircuitResult {
    /// Probability of recording `|0⟩ₑ` at the last measurement, or the Born
    /// probability of the final state when nothing was measured.
    pub p_electron_zero: f64,
    /// Recorded-`|0⟩ₑ` probability of every measurement, in order.
    pub measurements: Vec<f64>,
    /// Outcome-averaged state at the end.
    pub final_state: QuantumState,
    /// Start time and description of every step.
    pub timeline: Vec<(f64, String)>,
    pub t_end: f64,
}

/// Born probability of the electron `|0⟩` block.
pub fn electron_zero_probability(state: &QuantumState) -> f64 {
    let pops = state.populations();
    ZERO_BLOCK.iter().map(|&i| pops[i]).sum::<f64>().clamp(0.0, 1.0)
}

/// Projects onto the electron `|0⟩` block (`zero`) or its complement.
/// Returns the block probability `Tr(PρP)` and the renormalized state, `None`
/// when the probability vanishes.
pub fn project_electron(state: &QuantumState, zero: bool) -> Result<(f64, Option<QuantumState>)> {
    if state.dim() != 6 {
        return Err(Error::dim(6, state.dim()));
    }
    let keep = |i: usize| ZERO_BLOCK.contains(&i) == zero;
    let projected = match state {
        QuantumState::Pure(psi) => QuantumState::Pure(StateVector::new(
            psi.as_slice()
                .iter()
                .enumerate()
                .map(|(i, a)| if keep(i) { *a } else { C64::new(0.0, 0.0) })
                .collect(),
        )),
        QuantumState::Mixed(rho) => QuantumState::Mixed(CMatrix::from_fn(6, 6, |i, j| {
            if keep(i) && keep(j) {
                rho[(i, j)]
            } else {
                C64::new(0.0, 0.0)
            }
        })),
    };
    let prob = projected.trace();
    if prob <= 0.0 {
        return Ok((0.0, None));
    }
    Ok((prob, Some(scale_state(&projected, 1.0 / prob))))
}

fn scale_state(s: &QuantumState, w: f64) -> QuantumState {
    match s {
        QuantumState::Pure(psi) => QuantumState::Pure(psi.scale(C64::new(w.sqrt(), 0.0))),
        QuantumState::Mixed(rho) => QuantumState::Mixed(rho.scale_real(w)),
    }
}

/// Convex combination; stays pure when a single pure term carries all weight.
fn mixture(terms: &[(f64, &QuantumState)]) -> Option<QuantumState> {
    let live: Vec<_> = terms.iter().filter(|(w, _)| *w > 0.0).collect();
    let total: f64 = live.iter().map(|(w, _)| w).sum();
    match live.as_slice() {
        [] => None,
        [(_, s)] => Some((*s).clone()),
        _ => {
            let mut acc = CMatrix::zeros(6, 6);
            for (w, s) in &live {
                acc += &s.density().scale_real(w / total);
            }
            Some(QuantumState::Mixed(acc))
        }
    }
}

/// Nuclear marginal `Tr_e ρ` in `(|↑⟩, |↓⟩)` order.
pub fn nuclear_state(state: &QuantumState) -> Result<CMatrix> {
    partial_trace_electron(&state.density())
}

/// `⟨target|Tr_e ρ|target⟩` for a 2-dim nuclear target.
pub fn nuclear_fidelity(state: &QuantumState, target: &StateVector) -> Result<f64> {
    if target.dim() != 2 {
        return Err(Error::dim(2, target.dim()));
    }
    Ok(target.expectation(&nuclear_state(state)?))
}

/// Pure state of a rank-one 2×2 or 3×3 marginal, if it is one.
fn pure_marginal(rho: &CMatrix) -> Result<Option<StateVector>> {
    let eig = hermitian_eigen(rho)?;
    let n = rho.rows();
    if eig.values[n - 1] < 1.0 - 1e-12 {
        return Ok(None);
    }
    Ok(Some(StateVector::new((0..n).map(|i| eig.vectors[(i, n - 1)]).collect())))
}

fn replace_electron(state: &QuantumState, e: &StateVector) -> Result<QuantumState> {
    let rho_n = partial_trace_electron(&state.density())?;
    Ok(match (state, pure_marginal(&rho_n)?) {
        (QuantumState::Pure(_), Some(n)) => QuantumState::Pure(e.kron(&n)),
        _ => QuantumState::Mixed(kron(&e.density(), &rho_n)),
    })
}

fn replace_nucleus(state: &QuantumState, n: &StateVector) -> Result<QuantumState> {
    let rho_e = partial_trace_nucleus(&state.density())?;
    Ok(match (state, pure_marginal(&rho_e)?) {
        (QuantumState::Pure(_), Some(e)) => QuantumState::Pure(e.kron(n)),
        _ => QuantumState::Mixed(kron(&rho_e, &n.density())),
    })
}

/// Drive realizing a pulse step: the axis sets the phase, shifted by π when
/// the requested angle and the rotation rate have opposite signs.
fn pulse_drive(p: &SystemParams, step: &PulseStep) -> Result<DriveParams> {
    let (axis, reverse, drive) = match step {
        PulseStep::ElectronPulse { axis, angle, drive, .. } => (axis, *angle < 0.0, drive),
        PulseStep::NuclearPulse { axis, angle, drive, electron, .. } => {
            (axis, angle * nuclear_rotation_rate(p, drive, *electron)? < 0.0, drive)
        }
        _ => return Err(Error::InvalidParameter("not a pulse".into())),
    };
    Ok(DriveParams { phi: axis.drive_phase() + if reverse { PI } else { 0.0 }, ..*drive })
}

struct Branch {
    last: Option<bool>,
    weight: f64,
    state: QuantumState,
}

#[derive(Clone)]
struct Runner<'a> {
    p: &'a SystemParams,
    noise: NoiseParams,
    shift: Option<CMatrix>,
    readout_error: f64,
    seed: u64,
    ode: &'a OdeOptions<f64>,
}

impl Runner<'_> {
    fn evolve(&self, d: &DriveParams, t0: f64, dur: f64, state: &QuantumState) -> Result<QuantumState> {
        if dur == 0.0 {
            return Ok(state.clone());
        }
        let mut h = ModelHamiltonian::interaction(self.p, d);
        if let Some(s) = &self.shift {
            h.add_static(s);
        }
        let int = Integration { t0, options: self.ode.clone() };
        let mut run = evolve(&h, &self.noise, state, t0 + dur, &[], self.seed, &int)?;
        Ok(run.states.pop().expect("final state"))
    }

    /// Drive-off evolution is time independent in the lab frame, so it is
    /// propagated exactly there and rotated back into the H₀ frame.
    fn wait(&self, t0: f64, dur: f64, state: &QuantumState) -> Result<QuantumState> {
        if dur == 0.0 {
            return Ok(state.clone());
        }
        let h = h_static(self.p);
        let energies: Vec<f64> = h0(self.p).diag().iter().map(|x| x.re).collect();
        let h = match &self.shift {
            Some(s) => h + s.clone(),
            None => h,
        };
        let lab = state.rotate_frame(&energies, t0, -1.0)?;
        propagate_static(&h, &self.noise, &lab, dur)?.rotate_frame(&energies, t0 + dur, 1.0)
    }

    /// Applies a step that does not branch; returns the new state.
    fn apply(&self, step: &PulseStep, t0: f64, state: &QuantumState) -> Result<QuantumState> {
        let dur = step.duration(self.p)?;
        match step {
            PulseStep::ElectronPulse { .. } | PulseStep::NuclearPulse { .. } => {
                self.evolve(&pulse_drive(self.p, step)?, t0, dur, state)
            }
            PulseStep::Wait(_) => self.wait(t0, dur, state),
            PulseStep::PrepareElectron(e) => replace_electron(state, e),
            PulseStep::PrepareNucleus(n) => replace_nucleus(state, n),
            PulseStep::MeasureElectronZ { .. } | PulseStep::Conditional { .. } => {
                unreachable!("branching steps are handled by the runner")
            }
        }
    }

    fn measure(&self, branches: &[Branch]) -> Result<(f64, Vec<Branch>)> {
        let eps = self.readout_error;
        let mut parts: [Vec<(f64, QuantumState)>; 2] = [Vec::new(), Vec::new()];
        for b in branches {
            let (p0, s0) = project_electron(&b.state, true)?;
            let (p1, s1) = project_electron(&b.state, false)?;
            for (slot, zero) in [(0, true), (1, false)] {
                let (right, wrong) = if zero { ((p0, &s0), (p1, &s1)) } else { ((p1, &s1), (p0, &s0)) };
                for (w, s) in [((1.0 - eps) * right.0, right.1), (eps * wrong.0, wrong.1)] {
                    if let (true, Some(s)) = (w > 0.0, s) {
                        parts[slot].push((b.weight * w, s.clone()));
                    }
                }
            }
        }
        let mut out = Vec::new();
        let mut p_zero = 0.0;
        for (slot, terms) in parts.iter().enumerate() {
            let total: f64 = terms.iter().map(|(w, _)| w).sum();
            if slot == 0 {
                p_zero = total;
            }
            let refs: Vec<(f64, &QuantumState)> = terms.iter().map(|(w, s)| (*w, s)).collect();
            if let Some(state) = mixture(&refs) {
                out.push(Branch { last: Some(slot == 0), weight: total, state });
            }
        }
        Ok((p_zero.clamp(0.0, 1.0), out))
    }

    fn run(&self, steps: &[PulseStep], initial: &QuantumState, t0: f64) -> Result<CircuitResult> {
        let mut branches = vec![Branch { last: None, weight: 1.0, state: initial.clone() }];
        let mut clock = t0;
        let mut timeline = Vec::with_capacity(steps.len());
        let mut measurements = Vec::new();
        for step in steps {
            timeline.push((clock, step.describe()));
            match step {
                PulseStep::MeasureElectronZ { project } => {
                    let (p_zero, split) = self.measure(&branches)?;
                    measurements.push(p_zero);
                    if *project {
                        branches = split;
                    }
                }
                PulseStep::Conditional { on_zero, steps: inner } => {
                    if branches.iter().all(|b| b.last.is_none()) {
                        return Err(Error::MalformedCircuit("conditional block before any projective measurement".into()));
                    }
                    let total = step.duration(self.p)?;
                    for b in branches.iter_mut() {
                        if b.last == Some(*on_zero) {
                            let mut t = clock;
                            for s in inner {
                                b.state = self.apply(s, t, &b.state)?;
                                t += s.duration(self.p)?;
                            }
                        } else {
                            b.state = self.apply(&PulseStep::Wait(total), clock, &b.state)?;
                        }
                    }
                    clock += total;
                }
                _ => {
                    for b in branches.iter_mut() {
                        b.state = self.apply(step, clock, &b.state)?;
                    }
                    clock += step.duration(self.p)?;
                }
            }
        }
        let refs: Vec<(f64, &QuantumState)> = branches.iter().map(|b| (b.weight, &b.state)).collect();
        let final_state = mixture(&refs).ok_or_else(|| Error::InvalidState("circuit lost all weight".into()))?;
        let p_electron_zero = measurements.last().copied().unwrap_or_else(|| electron_zero_probability(&final_state));
        Ok(CircuitResult { p_electron_zero, measurements, final_state, timeline, t_end: clock })
    }
}

fn average(results: Vec<CircuitResult>) -> CircuitResult {
    let m = results.len() as f64;
    let mut iter = results.into_iter();
    let first = iter.next().expect("at least one trajectory");
    let mut rho = first.final_state.density();
    let mut measurements = first.measurements.clone();
    for r in iter {
        rho += &r.final_state.density();
        for (a, b) in measurements.iter_mut().zip(&r.measurements) {
            *a += b;
        }
    }
    let final_state = QuantumState::Mixed(rho.scale_real(1.0 / m));
    measurements.iter_mut().for_each(|x| *x /= m);
    let p_electron_zero = measurements.last().copied().unwrap_or_else(|| electron_zero_probability(&final_state));
    CircuitResult { p_electron_zero, measurements, final_state, timeline: first.timeline, t_end: first.t_end }
}

/// Runs `steps` from `opts.initial_state`. With quasi-static noise each
/// trajectory runs the whole circuit under its own constant detuning, and the
/// trajectories are averaged at the end.
pub fn run_circuit(
    steps: &[PulseStep],
    p: &SystemParams,
    noise: &NoiseParams,
    opts: &CircuitOptions,
) -> Result<CircuitResult> {
    p.validate()?;
    noise.validate()?;
    for s in steps {
        s.validate(p, false)?;
    }
    if !(0.0..=1.0).contains(&opts.readout_error) {
        return Err(Error::InvalidParameter(format!("readout error {} outside [0, 1]", opts.readout_error)));
    }
    if opts.initial_state.dim() != 6 {
        return Err(Error::dim(6, opts.initial_state.dim()));
    }
    opts.initial_state.check_physical()?;
    let base = Runner {
        p,
        noise: NoiseParams { lambda_e: 0.0, ensemble_size: 1, ..*noise },
        shift: None,
        readout_error: opts.readout_error,
        seed: opts.seed,
        ode: &opts.ode,
    };
    // the quasi-static term only acts while the state evolves
    let evolves = steps.iter().any(|s| s.duration(p).map_or(true, |t| t > 0.0));
    if noise.lambda_e == 0.0 || !evolves {
        return base.run(steps, &opts.initial_state, opts.t0);
    }
    let sz = kron(&spin1_operators::<f64>().sz, &CMatrix::identity(2));
    let runs: Vec<Result<CircuitResult>> = (0..noise.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let r = Runner { shift: Some(sz.scale_real(noise.lambda_e * noise_sample(opts.seed, k))), ..base.clone() };
            r.run(steps, &opts.initial_state, opts.t0)
        })
        .collect();
    Ok(average(runs.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Drives used by the canned circuits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitDrives {
    pub electron: DriveParams,
    pub nuclear: DriveParams,
}

impl CircuitDrives {
    /// Circularly polarized 125 MHz electron drive at the bare electron
    /// transition; 140 MHz nuclear drive for the electron in `|+1⟩`.
    pub fn defaults(p: &SystemParams) -> Result<Self> {
        let mhz = 2.0 * PI * 1e6;
        Ok(CircuitDrives {
            electron: DriveParams::electron_resonant(p, 125.0 * mhz, 0.0, Polarization::CircularPlus),
            nuclear: DriveParams::nuclear_resonant(p, 140.0 * mhz, 0.0, ElectronLevel::Plus)?,
        })
    }
}

/// Electron x(π/2), wait, y(π/2), read out. From `|0⟩ₑ` with the nucleus in
/// `m` the readout gives `(1 − sin δt)/2`, δ ≈ A∥·m plus a common shift.
pub fn hyperfine_steps(drives: &CircuitDrives, wait: f64) -> Vec<PulseStep> {
    vec![
        PulseStep::prepare_electron(ElectronLevel::Zero),
        PulseStep::electron(Axis::X, FRAC_PI_2, drives.electron),
        PulseStep::Wait(wait),
        PulseStep::electron(Axis::Y, FRAC_PI_2, drives.electron),
        PulseStep::MeasureElectronZ { project: false },
    ]
}

/// Readout curve `(wait, P(|0⟩ₑ))` of [`hyperfine_steps`] with the nucleus
/// prepared in `nucleus`.
pub fn characterize_hyperfine(
    p: &SystemParams,
    noise: &NoiseParams,
    nucleus: NuclearLevel,
    waits: &[f64],
    drives: &CircuitDrives,
    opts: &CircuitOptions,
) -> Result<Vec<(f64, f64)>> {
    waits
        .iter()
        .map(|&w| {
            let mut steps = vec![PulseStep::prepare_nucleus(nucleus)];
            steps.extend(hyperfine_steps(drives, w));
            Ok((w, run_circuit(&steps, p, noise, opts)?.p_electron_zero))
        })
        .collect()
}

/// Least-squares fit of `offset + a cos ωt + b sin ωt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidFit {
    pub omega: f64,
    pub offset: f64,
    pub cos_amp: f64,
    pub sin_amp: f64,
    pub rms_residual: f64,
}

fn linear_fit(ts: &[f64], ys: &[f64], omega: f64) -> Option<([f64; 3], f64)> {
    let mut a = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let f = [1.0, (omega * t).cos(), (omega * t).sin()];
        for i in 0..3 {
            r[i] += f[i] * y;
            for j in 0..3 {
                a[i][j] += f[i] * f[j];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut c = [0.0; 3];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = r[i];
        }
        *ck = det(&m) / d;
    }
    let ssr = ts
        .iter()
        .zip(ys)
        .map(|(&t, &y)| (y - c[0] - c[1] * (omega * t).cos() - c[2] * (omega * t).sin()).powi(2))
        .sum::<f64>();
    Some((c, ssr))
}

/// Fits a single sinusoid to samples on an ascending grid: a scan from a
/// quarter cycle over the record up to the Nyquist rate of the mean spacing,
/// refined by golden-section search.
pub fn fit_sinusoid(ts: &[f64], ys: &[f64]) -> Result<SinusoidFit> {
    if ts.len() != ys.len() || ts.len() < 5 {
        return Err(Error::InvalidParameter("sinusoid fit needs at least 5 paired samples".into()));
    }
    let span = ts[ts.len() - 1] - ts[0];
    if !(span > 0.0) {
        return Err(Error::InvalidParameter("sample times must span a positive interval".into()));
    }
    let lo = 0.5 * PI / span;
    let hi = PI * (ts.len() - 1) as f64 / span;
    let ssr = |w: f64| linear_fit(ts, ys, w).map_or(f64::INFINITY, |(_, s)| s);
    let n_scan = 4000;
    let step = (hi - lo) / n_scan as f64;
    let best = (0..=n_scan)
        .map(|k| lo + k as f64 * step)
        .min_by(|a, b| ssr(*a).total_cmp(&ssr(*b)))
        .expect("non-empty scan");
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (ssr(x1), ssr(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = ssr(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = ssr(x2);
        }
    }
    let omega = 0.5 * (a + b);
    let (c, s) = linear_fit(ts, ys, omega).ok_or_else(|| Error::InvalidParameter("degenerate sample grid".into()))?;
    Ok(SinusoidFit { omega, offset: c[0], cos_amp: c[1], sin_amp: c[2], rms_residual: (s / ts.len() as f64).sqrt() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperfineFit {
    pub up: SinusoidFit,
    pub down: SinusoidFit,
    /// Signed phase rates δ with the nucleus in `|↑⟩` and `|↓⟩`.
    pub rate_up: f64,
    pub rate_down: f64,
    /// `δ↑ − δ↓`; the common shift of the electron transition cancels.
    pub a_par: f64,
}

/// Runs [`characterize_hyperfine`] for both nuclear polarizations and fits
/// `(1 − sin δt)/2` to each. The sign of δ comes from the sine coefficient.
pub fn fit_hyperfine(
    p: &SystemParams,
    noise: &NoiseParams,
    waits: &[f64],
    drives: &CircuitDrives,
    opts: &CircuitOptions,
) -> Result<HyperfineFit> {
    let fit = |n: NuclearLevel| -> Result<(SinusoidFit, f64)> {
        let curve = characterize_hyperfine(p, noise, n, waits, drives, opts)?;
        let (ts, ys): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
        let f = fit_sinusoid(&ts, &ys)?;
        Ok((f, -f.sin_amp.signum() * f.omega))
    };
    let (up, rate_up) = fit(NuclearLevel::Up)?;
    let (down, rate_down) = fit(NuclearLevel::Down)?;
    Ok(HyperfineFit { up, down, rate_up, rate_down, a_par: rate_up - rate_down })
}

/// Nuclear z readout: electron to `|+1⟩`, optional basis rotation, then
/// electron x(π/2), wait, y(π/2) and a projective measurement. With the wait
/// at t_CZ, `|↑⟩` reads `|0⟩ₑ` and `|↓⟩` reads `|+1⟩`.
pub fn nucleus_readout_steps(
    drives: &CircuitDrives,
    wait: f64,
    basis_rotation: Option<PulseStep>,
) -> Result<Vec<PulseStep>> {
    let mut steps = vec![PulseStep::prepare_electron(ElectronLevel::Plus)];
    match basis_rotation {
        Some(r @ PulseStep::NuclearPulse { .. }) => steps.push(r),
        Some(_) => return Err(Error::InvalidParameter("basis rotation must be a nuclear pulse".into())),
        None => {}
    }
    steps.extend([
        PulseStep::electron(Axis::X, FRAC_PI_2, drives.electron),
        PulseStep::Wait(wait),
        PulseStep::electron(Axis::Y, FRAC_PI_2, drives.electron),
        PulseStep::measure(),
    ]);
    Ok(steps)
}

/// Runs [`nucleus_readout_steps`] on `opts.initial_state`; `wait` defaults to t_CZ.
pub fn measure_nucleus_z(
    p: &SystemParams,
    noise: &NoiseParams,
    basis_rotation: Option<PulseStep>,
    drives: &CircuitDrives,
    wait: Option<f64>,
    opts: &CircuitOptions,
) -> Result<CircuitResult> {
    let steps = nucleus_readout_steps(drives, wait.unwrap_or_else(|| p.cz_time()), basis_rotation)?;
    run_circuit(&steps, p, noise, opts)
}

fn drive_frame(p: &SystemParams, d: &DriveParams) -> Vec<f64> {
    let rate = d.omega + p.b * p.gamma_n;
    (0..6).map(|j| if j % 2 == 0 { 0.5 * rate } else { -0.5 * rate }).collect()
}

/// Nuclear block `(|↑⟩, |↓⟩)` of the propagator of `d` from `t0` over `dur`
/// with the electron in `e`, in the frame rotating with the drive.
fn nuclear_block(
    p: &SystemParams,
    d: &DriveParams,
    e: ElectronLevel,
    t0: f64,
    dur: f64,
    ode: &OdeOptions<f64>,
) -> Result<[[C64; 2]; 2]> {
    let h = ModelHamiltonian::interaction(p, d);
    let frame = drive_frame(p, d);
    let mut u = [[C64::new(0.0, 0.0); 2]; 2];
    for (col, n) in [NuclearLevel::Up, NuclearLevel::Down].into_iter().enumerate() {
        let psi = QuantumState::Pure(basis_state(e, n));
        let int = Integration { t0, options: ode.clone() };
        let run = evolve(&h, &NoiseParams::noiseless(), &psi, t0 + dur, &[], 0, &int)?;
        let start = psi.rotate_frame(&frame, t0, 1.0)?;
        let end = run.final_state().rotate_frame(&frame, t0 + dur, 1.0)?;
        let (QuantumState::Pure(a), QuantumState::Pure(b)) = (start, end) else { unreachable!() };
        let phase = a[basis_state_index(e, n)].conj();
        for (row, m) in [NuclearLevel::Up, NuclearLevel::Down].into_iter().enumerate() {
            u[row][col] = b[basis_state_index(e, m)] * phase;
        }
    }
    Ok(u)
}

fn basis_state_index(e: ElectronLevel, n: NuclearLevel) -> usize {
    crate::hamiltonian::basis_index(e, n)
}

/// Calibrates a nuclear pulse for a start at `t0`, as one would with
/// spectroscopy: a full-model run from each nuclear basis state gives the
/// effective rotation axis, whose z tilt moves the drive frequency onto the
/// driven resonance (which the strong drive shifts away from the static
/// splitting); the duration is then chosen on a grid of `spacing` within
/// `half_width` of the nominal one, against the ideal rotation in the frame
/// of the drive. Returns the pulse with both set.
pub fn calibrate_nuclear_pulse(
    p: &SystemParams,
    step: &PulseStep,
    t0: f64,
    half_width: f64,
    spacing: f64,
    ode: &OdeOptions<f64>,
) -> Result<PulseStep> {
    let PulseStep::NuclearPulse { axis, angle, drive, electron, .. } = step else {
        return Err(Error::InvalidParameter("calibration needs a nuclear pulse".into()));
    };
    if !(spacing > 0.0 && half_width >= 0.0) {
        return Err(Error::InvalidParameter("calibration window needs spacing > 0 and half_width >= 0".into()));
    }
    step.validate(p, false)?;
    let nominal = step.duration(p)?;
    if nominal == 0.0 {
        return Ok(step.clone());
    }

    // V = exp(−iΘ/2 n·σ) up to phase; the ideal R_a(θ) has n = −a
    let d = pulse_drive(p, step)?;
    let u = nuclear_block(p, &d, *electron, t0, nominal, ode)?;
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    let mut v = u.map(|r| r.map(|x| x / det.sqrt()));
    let i = C64::new(0.0, 1.0);
    let in_plane = match axis {
        Axis::X => i * (v[0][1] + v[1][0]) * 0.5,
        Axis::Y => (v[1][0] - v[0][1]) * 0.5,
    };
    if in_plane.re > 0.0 {
        v = v.map(|r| r.map(|x| -x));
    }
    let cos_half = (0.5 * (v[0][0] + v[1][1])).re;
    let sn = [i * (v[0][1] + v[1][0]) * 0.5, (v[1][0] - v[0][1]) * 0.5, i * (v[0][0] - v[1][1]) * 0.5].map(|x| x.re);
    let sin_half = sn.iter().map(|x| x * x).sum::<f64>().sqrt();
    let theta = 2.0 * sin_half.atan2(cos_half);
    let detuning = if sin_half > 0.0 { sn[2] / sin_half * theta / nominal } else { 0.0 };
    let tuned = DriveParams { omega: drive.omega + detuning, ..*drive };

    let retuned = PulseStep::NuclearPulse { axis: *axis, angle: *angle, drive: tuned, electron: *electron, duration: None };
    let d = pulse_drive(p, &retuned)?;
    let m = (half_width / spacing).floor() as i64;
    let snaps: Vec<f64> =
        (-m..=m).map(|k| nominal + k as f64 * spacing).filter(|&t| t >= 0.0).map(|t| t0 + t).collect();
    let psi0 = basis_state(*electron, NuclearLevel::Down);
    let ideal = crate::gates::IdealGate::nuclear_rotation(*axis, *angle).apply(&psi0)?;
    let h = ModelHamiltonian::interaction(p, &d);
    let end = *snaps.last().expect("non-empty window");
    let int = Integration { t0, options: ode.clone() };
    let run = evolve(&h, &NoiseParams::noiseless(), &QuantumState::Pure(psi0), end, &snaps, 0, &int)?;
    let frame = drive_frame(p, &d);
    let mut best = (f64::INFINITY, nominal);
    for (&t, state) in run.times.iter().zip(&run.states) {
        let err = 1.0 - state.rotate_frame(&frame, t, 1.0)?.overlap(&ideal)?;
        if err < best.0 {
            best = (err, t - t0);
        }
    }
    Ok(retuned.with_duration(best.1))
}

/// Readout, electron reset to `|+1⟩`, and a nuclear π rotation on the branch
/// that read the other nuclear state; `flip` replaces the nominal π pulse.
pub fn initialization_steps(
    drives: &CircuitDrives,
    wait: f64,
    target: NuclearLevel,
    flip: Option<PulseStep>,
) -> Result<Vec<PulseStep>> {
    let mut steps = nucleus_readout_steps(drives, wait, None)?;
    steps.push(PulseStep::prepare_electron(ElectronLevel::Plus));
    let flip = flip.unwrap_or_else(|| PulseStep::nuclear(Axis::X, PI, drives.nuclear, ElectronLevel::Plus));
    steps.push(PulseStep::Conditional {
        // reading |0⟩ₑ means the nucleus was |↑⟩
        on_zero: target == NuclearLevel::Down,
        steps: vec![flip],
    });
    Ok(steps)
}

/// Runs [`initialization_steps`] on `opts.initial_state`; `wait` defaults to
/// t_CZ. The π flip is calibrated with [`calibrate_nuclear_pulse`] for its
/// actual start time, within 3% of the nominal duration on a 1 ns grid.
pub fn initialize_nucleus(
    p: &SystemParams,
    noise: &NoiseParams,
    target: NuclearLevel,
    drives: &CircuitDrives,
    wait: Option<f64>,
    opts: &CircuitOptions,
) -> Result<CircuitResult> {
    let wait = wait.unwrap_or_else(|| p.cz_time());
    let steps = initialization_steps(drives, wait, target, None)?;
    let n = steps.len();
    let start = opts.t0 + steps[..n - 1].iter().map(|s| s.duration(p)).sum::<Result<f64>>()?;
    let PulseStep::Conditional { steps: flip, .. } = &steps[n - 1] else { unreachable!() };
    let nominal = flip[0].duration(p)?;
    let tuned = calibrate_nuclear_pulse(p, &flip[0], start, 0.03 * nominal, 1e-9, &opts.ode)?;
    run_circuit(&initialization_steps(drives, wait, target, Some(tuned))?, p, noise, opts)
}
