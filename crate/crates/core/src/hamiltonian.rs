//! Lab-frame and interaction-picture Hamiltonians of the ¹⁵NV⁻ ground state,
//! effective qubit-subspace models, and closed-form resonance conditions.
//!
//! Everything is in units of ħ: matrices carry angular frequencies (rad/s).

use std::f64::consts::{PI, SQRT_2};

use crate::algebra::{hermitian_eigen, kron, spin1_operators, spin_half_operators};
use crate::error::{Error, Result};
use crate::{CMatrix, StateVector, C64};

const TWO_PI: f64 = 2.0 * PI;

/// Electron spin projection, in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElectronLevel {
    Plus,
    Zero,
    Minus,
}

impl ElectronLevel {
    pub fn index(self) -> usize {
        match self {
            ElectronLevel::Plus => 0,
            ElectronLevel::Zero => 1,
            ElectronLevel::Minus => 2,
        }
    }

    pub fn m(self) -> f64 {
        match self {
            ElectronLevel::Plus => 1.0,
            ElectronLevel::Zero => 0.0,
            ElectronLevel::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NuclearLevel {
    Up,
    Down,
}

impl NuclearLevel {
    pub fn index(self) -> usize {
        match self {
            NuclearLevel::Up => 0,
            NuclearLevel::Down => 1,
        }
    }

    pub fn m(self) -> f64 {
        match self {
            NuclearLevel::Up => 0.5,
            NuclearLevel::Down => -0.5,
        }
    }
}

/// Composite index `2·e + n`.
pub fn basis_index(e: ElectronLevel, n: NuclearLevel) -> usize {
    2 * e.index() + n.index()
}

pub fn basis_state(e: ElectronLevel, n: NuclearLevel) -> StateVector {
    StateVector::basis(6, basis_index(e, n))
}

/// Full-space indices of the computational states `|e_q n_q⟩`, in the order
/// `|00⟩, |01⟩, |10⟩, |11⟩`. Electron `|0⟩_q = |0⟩`, `|1⟩_q = |+1⟩`; nucleus
/// `|0⟩_q = |↓⟩`, `|1⟩_q = |↑⟩`.
pub const QUBIT_INDICES: [usize; 4] = [3, 2, 1, 0];

/// Lifts a 4×4 operator on the qubit subspace to 6×6, zero on `|−1⟩`.
pub fn embed_qubit_operator(op: &CMatrix) -> Result<CMatrix> {
    if op.rows() != 4 || op.cols() != 4 {
        return Err(Error::dim("4x4", format!("{}x{}", op.rows(), op.cols())));
    }
    let mut out = CMatrix::zeros(6, 6);
    for (i, &fi) in QUBIT_INDICES.iter().enumerate() {
        for (j, &fj) in QUBIT_INDICES.iter().enumerate() {
            out[(fi, fj)] = op[(i, j)];
        }
    }
    Ok(out)
}

/// Restricts a 6×6 operator to the qubit subspace.
pub fn project_qubit_operator(op: &CMatrix) -> Result<CMatrix> {
    if op.rows() != 6 || op.cols() != 6 {
        return Err(Error::dim("6x6", format!("{}x{}", op.rows(), op.cols())));
    }
    Ok(op.submatrix(&QUBIT_INDICES, &QUBIT_INDICES))
}

pub fn embed_qubit_state(psi: &StateVector) -> Result<StateVector> {
    if psi.dim() != 4 {
        return Err(Error::dim(4, psi.dim()));
    }
    let mut out = StateVector::new(vec![C64::new(0.0, 0.0); 6]);
    for (i, &fi) in QUBIT_INDICES.iter().enumerate() {
        out[fi] = psi[i];
    }
    Ok(out)
}

pub fn project_qubit_state(psi: &StateVector) -> Result<StateVector> {
    if psi.dim() != 6 {
        return Err(Error::dim(6, psi.dim()));
    }
    Ok(StateVector::new(QUBIT_INDICES.iter().map(|&i| psi[i]).collect()))
}

/// Physical constants and the static field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Zero-field splitting D (rad/s).
    pub d: f64,
    /// Strain splitting E (rad/s).
    pub e: f64,
    /// Parallel hyperfine A∥ (rad/s).
    pub a_par: f64,
    /// Perpendicular hyperfine A⊥ (rad/s).
    pub a_perp: f64,
    /// Axial field (T).
    pub b: f64,
    /// Electron gyromagnetic ratio (rad/s/T).
    pub gamma_e: f64,
    /// Nuclear gyromagnetic ratio (rad/s/T), negative for ¹⁵N.
    pub gamma_n: f64,
}

/// Bohr magneton over h, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 14.0e9;
/// Nuclear magneton over h, Hz/T.
pub const NUCLEAR_MAGNETON_HZ_PER_T: f64 = 7.63e6;
pub const G_ELECTRON: f64 = 2.00;
pub const G_N15: f64 = -0.566;

impl SystemParams {
    pub fn defaults() -> Self {
        SystemParams {
            d: TWO_PI * 2.87e9,
            e: TWO_PI * 7.0e6,
            a_par: TWO_PI * 3.03e6,
            a_perp: TWO_PI * 3.65e6,
            b: 0.05,
            gamma_e: TWO_PI * BOHR_MAGNETON_HZ_PER_T * G_ELECTRON,
            gamma_n: TWO_PI * NUCLEAR_MAGNETON_HZ_PER_T * G_N15,
        }
    }

    pub fn with_b(self, b: f64) -> Self {
        SystemParams { b, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.d, self.e, self.a_par, self.a_perp, self.b, self.gamma_e, self.gamma_n];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("system parameters must be finite".into()));
        }
        if self.d <= 0.0 || self.a_par <= 0.0 || self.a_perp < 0.0 || self.gamma_e <= 0.0 || self.e < 0.0 {
            return Err(Error::InvalidParameter(
                "need D > 0, A_par > 0, A_perp >= 0, E >= 0 and gamma_e > 0".into(),
            ));
        }
        Ok(())
    }

    /// Δ₊ = D + Bγe + Bγn
    pub fn delta_plus(&self) -> f64 {
        self.d + self.b * self.gamma_e + self.b * self.gamma_n
    }

    /// Δ₋ = D − Bγe − Bγn
    pub fn delta_minus(&self) -> f64 {
        self.d - self.b * self.gamma_e - self.b * self.gamma_n
    }

    /// `|0⟩ ↔ |+1⟩` electron transition, D + Bγe.
    pub fn electron_transition(&self) -> f64 {
        self.d + self.b * self.gamma_e
    }

    /// t_CZ = π/A∥
    pub fn cz_time(&self) -> f64 {
        PI / self.a_par
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::defaults()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Polarization {
    #[default]
    Unpolarized,
    /// Drives only the `|0⟩ ↔ |+1⟩` electron transition.
    CircularPlus,
}

/// Microwave drive `Ω₀ cos(ωt + φ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveParams {
    pub omega0: f64,
    pub omega: f64,
    pub phi: f64,
    pub polarization: Polarization,
}

impl DriveParams {
    pub fn off() -> Self {
        DriveParams { omega0: 0.0, omega: 0.0, phi: 0.0, polarization: Polarization::Unpolarized }
    }

    pub fn new(omega0: f64, omega: f64, phi: f64, polarization: Polarization) -> Self {
        DriveParams { omega0, omega, phi, polarization }
    }

    /// Resonant electron drive; `φ = −π` gives an x rotation, `φ = −π/2` a y rotation.
    pub fn electron_resonant(p: &SystemParams, omega0: f64, phi: f64, polarization: Polarization) -> Self {
        DriveParams { omega0, omega: p.electron_transition(), phi, polarization }
    }

    /// Nuclear drive: at [`nuclear_drive_frequency`] with the electron in
    /// `|+1⟩`, otherwise at the dressed `|e,↑⟩ ↔ |e,↓⟩` splitting.
    pub fn nuclear_resonant(p: &SystemParams, omega0: f64, phi: f64, electron: ElectronLevel) -> Result<Self> {
        let omega = match electron {
            ElectronLevel::Plus => nuclear_drive_frequency(p)?,
            _ => nuclear_transition_frequency(p, electron)?,
        };
        Ok(DriveParams { omega0, omega, phi, polarization: Polarization::Unpolarized })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 >= 0.0) || !self.omega.is_finite() || !self.phi.is_finite() || !self.omega0.is_finite() {
            return Err(Error::InvalidParameter("drive needs finite omega, phi and omega0 >= 0".into()));
        }
        Ok(())
    }
}

impl Default for DriveParams {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lineshape {
    Lorentzian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resonance {
    /// Field at the line centre (T).
    pub center: f64,
    /// Full width at half maximum (T).
    pub fwhm: f64,
    pub lineshape: Lineshape,
}

/// `H₀ = D S_z² + Bγe S_z − Bγn I_z`
pub fn h0(p: &SystemParams) -> CMatrix {
    let mut diag = [0.0; 6];
    for e in [ElectronLevel::Plus, ElectronLevel::Zero, ElectronLevel::Minus] {
        for n in [NuclearLevel::Up, NuclearLevel::Down] {
            diag[basis_index(e, n)] = p.d * e.m() * e.m() + p.b * p.gamma_e * e.m() - p.b * p.gamma_n * n.m();
        }
    }
    CMatrix::from_real_diag(&diag)
}

/// `H_S = (E/2)(S₊² + S₋²)`
pub fn h_strain(p: &SystemParams) -> CMatrix {
    let s = spin1_operators::<f64>();
    let ss = &(&s.sp * &s.sp) + &(&s.sm * &s.sm);
    kron(&ss, &CMatrix::identity(2)).scale_real(p.e / 2.0)
}

/// `H_HF = A∥ S_z I_z + ½A⊥(S₊I₋ + S₋I₊)`
pub fn h_hyperfine(p: &SystemParams) -> CMatrix {
    let s = spin1_operators::<f64>();
    let i = spin_half_operators::<f64>();
    let par = kron(&s.sz, &i.iz).scale_real(p.a_par);
    let perp = (kron(&s.sp, &i.im) + kron(&s.sm, &i.ip)).scale_real(0.5 * p.a_perp);
    par + perp
}

/// Static part `H₀ + H_S + H_HF`.
pub fn h_static(p: &SystemParams) -> CMatrix {
    h0(p) + h_strain(p) + h_hyperfine(p)
}

/// Operator multiplying `Ω₀ cos(ωt + φ)`: `S_x − (γn/γe) I_x`, with the
/// `|0⟩ ↔ |−1⟩` elements of `S_x` removed under circular polarization.
pub fn drive_operator(p: &SystemParams, polarization: Polarization) -> CMatrix {
    let mut sx = spin1_operators::<f64>().sx;
    if polarization == Polarization::CircularPlus {
        sx[(1, 2)] = C64::new(0.0, 0.0);
        sx[(2, 1)] = C64::new(0.0, 0.0);
    }
    let ix = spin_half_operators::<f64>().ix;
    kron(&sx, &CMatrix::identity(2)) - kron(&CMatrix::identity(3), &ix).scale_real(p.gamma_n / p.gamma_e)
}

/// `H_D(t) = Ω₀ cos(ωt + φ)(S_x − (γn/γe) I_x)`
pub fn h_drive(p: &SystemParams, d: &DriveParams, t: f64) -> CMatrix {
    drive_operator(p, d.polarization).scale_real(d.omega0 * (d.omega * t + d.phi).cos())
}

pub fn h_total(p: &SystemParams, d: &DriveParams, t: f64) -> CMatrix {
    h_static(p) + h_drive(p, d, t)
}

/// `H̄(t) = e^{iH₀t}(H − H₀)e^{−iH₀t}`. H₀ is diagonal, so every element just
/// picks up the phase `e^{i(E_j − E_k)t}`; e.g. the flip-flop element
/// `⟨+1,↓|H̄|0,↑⟩` carries `e^{iΔ₊t}` and `⟨0,↓|H̄|−1,↑⟩` carries `e^{−iΔ₋t}`.
pub fn interaction_picture_h(p: &SystemParams, d: &DriveParams, t: f64) -> CMatrix {
    let mut out = CMatrix::zeros(6, 6);
    ModelHamiltonian::interaction(p, d).fill(t, &mut out);
    out
}

/// A time-dependent Hamiltonian as consumed by the evolution engines.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    /// Writes `H(t)` into `out` (already `dim × dim`).
    fn fill(&self, t: f64, out: &mut CMatrix);

    fn at(&self, t: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        self.fill(t, &mut out);
        out
    }
}

impl Hamiltonian for CMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn fill(&self, _t: f64, out: &mut CMatrix) {
        out.as_mut_slice().copy_from_slice(self.as_slice());
    }
}

/// Wraps a closure `t ↦ H(t)`.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> CMatrix + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnHamiltonian { dim, f }
    }
}

impl<F: Fn(f64) -> CMatrix + Sync> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fill(&self, t: f64, out: &mut CMatrix) {
        let h = (self.f)(t);
        out.as_mut_slice().copy_from_slice(h.as_slice());
    }
}

/// Reference frame of a [`ModelHamiltonian`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Lab,
    /// Co-rotating with H₀.
    Interaction,
}

/// The full six-level model in either frame, evaluated without allocating.
#[derive(Clone, Debug)]
pub struct ModelHamiltonian {
    frame: Frame,
    energies: Vec<f64>,
    static_part: CMatrix,
    drive_op: CMatrix,
    drive: DriveParams,
}

impl ModelHamiltonian {
    pub fn lab(p: &SystemParams, d: &DriveParams) -> Self {
        ModelHamiltonian {
            frame: Frame::Lab,
            energies: vec![0.0; 6],
            static_part: h_static(p),
            drive_op: drive_operator(p, d.polarization),
            drive: *d,
        }
    }

    pub fn interaction(p: &SystemParams, d: &DriveParams) -> Self {
        let h0 = h0(p);
        ModelHamiltonian {
            frame: Frame::Interaction,
            energies: h0.diag().iter().map(|x| x.re).collect(),
            static_part: h_strain(p) + h_hyperfine(p),
            drive_op: drive_operator(p, d.polarization),
            drive: *d,
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Diagonal of H₀ defining the interaction frame (zeros in the lab frame).
    pub fn frame_energies(&self) -> &[f64] {
        &self.energies
    }

    /// Adds a time-independent lab-frame term (rotated into the frame if needed).
    pub fn add_static(&mut self, extra: &CMatrix) {
        self.static_part += extra;
    }
}

impl Hamiltonian for ModelHamiltonian {
    fn dim(&self) -> usize {
        6
    }

    fn fill(&self, t: f64, out: &mut CMatrix) {
        let amp = self.drive.omega0 * (self.drive.omega * t + self.drive.phi).cos();
        let s = self.static_part.as_slice();
        let v = self.drive_op.as_slice();
        let o = out.as_mut_slice();
        match self.frame {
            Frame::Lab => {
                for k in 0..36 {
                    o[k] = s[k] + v[k] * amp;
                }
            }
            Frame::Interaction => {
                let ph: [C64; 6] = std::array::from_fn(|j| C64::from_polar(1.0, self.energies[j] * t));
                for j in 0..6 {
                    for k in 0..6 {
                        let idx = 6 * j + k;
                        o[idx] = (s[idx] + v[idx] * amp) * (ph[j] * ph[k].conj());
                    }
                }
            }
        }
    }
}

fn resonance_error(what: &str) -> Error {
    Error::Resonance(format!("{what} vanishes"))
}

/// Second-order effective Hamiltonian on the qubit subspace for free
/// evolution far from the strain and exchange resonances, in the H₀ frame:
///
/// `(A∥ − A⊥²/2Δ₊)|+1⟩⟨+1|I_z + (A⊥²/2Δ₋ − A⊥²/2Δ₊)|0⟩⟨0|I_z
///  + (E²/2Bγe + A⊥²/4Δ₊)|+1⟩⟨+1| − (A⊥²/4Δ₊ + A⊥²/4Δ₋)|0⟩⟨0|`
///
/// Each shift is the second-order energy correction of one basis level from
/// the flip-flop (`|+1,↓⟩ ↔ |0,↑⟩`, `|0,↓⟩ ↔ |−1,↑⟩`) and strain couplings.
pub fn effective_cz_h(p: &SystemParams) -> Result<CMatrix> {
    let (dp, dm) = (p.delta_plus(), p.delta_minus());
    if dp.abs() <= 1e-12 * p.d || dm.abs() <= 1e-12 * p.d {
        return Err(resonance_error("Δ±"));
    }
    let bz = p.b * p.gamma_e;
    if bz == 0.0 && p.e != 0.0 {
        return Err(resonance_error("Bγe"));
    }
    let a2 = p.a_perp * p.a_perp;
    let strain = if p.e == 0.0 { 0.0 } else { p.e * p.e / (2.0 * bz) };
    let plus_z = p.a_par - a2 / (2.0 * dp);
    let zero_z = a2 / (2.0 * dm) - a2 / (2.0 * dp);
    let plus_c = strain + a2 / (4.0 * dp);
    let zero_c = -(a2 / (4.0 * dp) + a2 / (4.0 * dm));
    // qubit order |0↓⟩, |0↑⟩, |+1↓⟩, |+1↑⟩
    Ok(CMatrix::from_real_diag(&[
        zero_c - 0.5 * zero_z,
        zero_c + 0.5 * zero_z,
        plus_c - 0.5 * plus_z,
        plus_c + 0.5 * plus_z,
    ]))
}

/// Rotating-wave model of a resonant electron drive on the qubit subspace,
/// `A∥|+1⟩⟨+1|I_z + (Ω₀/2√2)(e^{−iφ}|+1⟩⟨0| + h.c.)`; at `φ = −π` this is
/// `A∥|+1⟩⟨+1|I_z − (Ω₀/2√2)(|0⟩⟨+1| + |+1⟩⟨0|)`.
pub fn effective_driven_h(p: &SystemParams, d: &DriveParams) -> CMatrix {
    let mut h = CMatrix::from_real_diag(&[0.0, 0.0, -0.5 * p.a_par, 0.5 * p.a_par]);
    let c = C64::from_polar(d.omega0 / (2.0 * SQRT_2), -d.phi);
    for n in 0..2 {
        h[(2 + n, n)] = c;
        h[(n, 2 + n)] = c.conj();
    }
    h
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Energy gap between the two eigenstates of the static Hamiltonian with the
/// largest weight on `|a⟩` and `|b⟩`.
pub fn level_gap(p: &SystemParams, a: usize, b: usize) -> Result<f64> {
    let eig = hermitian_eigen(&h_static(p))?;
    let weight = |col: usize| eig.vectors[(a, col)].norm_sqr() + eig.vectors[(b, col)].norm_sqr();
    let mut cols: Vec<usize> = (0..6).collect();
    cols.sort_by(|&x, &y| weight(y).total_cmp(&weight(x)));
    Ok((eig.values[cols[0]] - eig.values[cols[1]]).abs())
}

/// Pair of strain anti-crossings (`|+1,n⟩ ↔ |−1,n⟩`) near zero field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrainResonances {
    /// Nucleus ↑, centred near `−A∥/2γe`.
    pub up: Resonance,
    /// Nucleus ↓, centred near `+A∥/2γe`.
    pub down: Resonance,
    /// Mean magnitude of the displacement of the numeric centres from `∓A∥/2γe` (T).
    pub shift: f64,
}

/// Strain resonances with numerically located centres (minimum gap of the
/// full static Hamiltonian) and Lorentzian width `2E/γe`.
pub fn strain_resonance(p: &SystemParams) -> Result<StrainResonances> {
    if p.gamma_e == 0.0 {
        return Err(resonance_error("γe"));
    }
    let b0 = p.a_par / (2.0 * p.gamma_e);
    let fwhm = 2.0 * p.e / p.gamma_e;
    let window = (fwhm.max(b0 * 0.1)).max(1e-6);
    let locate = |n: NuclearLevel, guess: f64| -> Result<f64> {
        let a = basis_index(ElectronLevel::Plus, n);
        let b = basis_index(ElectronLevel::Minus, n);
        // the eigensolver cannot fail on a 6x6 Hermitian input
        let gap = |x: f64| level_gap(&p.with_b(x), a, b).unwrap_or(f64::INFINITY);
        let c = golden_min(gap, guess - window, guess + window, 1e-13);
        if !c.is_finite() {
            return Err(Error::Resonance("strain resonance locator did not converge".into()));
        }
        Ok(c)
    };
    let up = locate(NuclearLevel::Up, -b0)?;
    let down = locate(NuclearLevel::Down, b0)?;
    let shift = 0.5 * ((up + b0).abs() + (down - b0).abs());
    let res = |center| Resonance { center, fwhm, lineshape: Lineshape::Lorentzian };
    Ok(StrainResonances { up: res(up), down: res(down), shift })
}

/// The two exchange-resonance branches, `B_ex = (A∥/2 ∓ D)/(γe ± γn)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeResonances {
    /// `(A∥/2 − D)/(γe + γn)`, negative field.
    pub lower: Resonance,
    /// `(A∥/2 + D)/(γe − γn)`, positive field.
    pub upper: Resonance,
}

/// Exchange resonances with Lorentzian width `2√2 A⊥/(γe + γn)`.
pub fn exchange_resonance(p: &SystemParams) -> Result<ExchangeResonances> {
    let sum = p.gamma_e + p.gamma_n;
    let diff = p.gamma_e - p.gamma_n;
    if sum == 0.0 || diff == 0.0 {
        return Err(resonance_error("γe ± γn"));
    }
    let fwhm = (2.0 * SQRT_2 * p.a_perp / sum).abs();
    let res = |center| Resonance { center, fwhm, lineshape: Lineshape::Lorentzian };
    Ok(ExchangeResonances {
        lower: res((p.a_par / 2.0 - p.d) / sum),
        upper: res((p.a_par / 2.0 + p.d) / diff),
    })
}

/// Nuclear drive frequency with the electron in `|+1⟩`,
/// `ν = A∥ − Bγn + A⊥²/(2D + 2Bγe)`.
pub fn nuclear_drive_frequency(p: &SystemParams) -> Result<f64> {
    let den = 2.0 * p.d + 2.0 * p.b * p.gamma_e;
    if den == 0.0 {
        return Err(resonance_error("2D + 2Bγe"));
    }
    Ok(p.a_par - p.b * p.gamma_n + p.a_perp * p.a_perp / den)
}

/// `E(e,↑) − E(e,↓)` between the dressed eigenstates of the static Hamiltonian.
pub fn nuclear_transition_frequency(p: &SystemParams, electron: ElectronLevel) -> Result<f64> {
    let eig = hermitian_eigen(&h_static(p))?;
    let energy = |n: NuclearLevel| {
        let idx = basis_index(electron, n);
        let col = (0..6)
            .max_by(|&x, &y| eig.vectors[(idx, x)].norm_sqr().total_cmp(&eig.vectors[(idx, y)].norm_sqr()))
            .unwrap_or(0);
        eig.values[col]
    };
    Ok(energy(NuclearLevel::Up) - energy(NuclearLevel::Down))
}

/// Signed drive matrix element `⟨e,↑|V|e,↓⟩` between the dressed eigenstates
/// of the static Hamiltonian, per unit `Ω₀`, with `V` the drive operator. Each
/// eigenvector is phased so its dominant bare component is real and positive.
/// To leading order this is `(A⊥/(D + Bγe) − γn/γe)/2` for `e = +1`.
pub fn nuclear_coupling(p: &SystemParams, polarization: Polarization, electron: ElectronLevel) -> Result<f64> {
    let eig = hermitian_eigen(&h_static(p))?;
    let dressed = |n: NuclearLevel| -> StateVector {
        let idx = basis_index(electron, n);
        let col = (0..6)
            .max_by(|&x, &y| eig.vectors[(idx, x)].norm_sqr().total_cmp(&eig.vectors[(idx, y)].norm_sqr()))
            .unwrap_or(0);
        let lead = eig.vectors[(idx, col)];
        let gauge = lead.conj() / lead.norm();
        StateVector::new((0..6).map(|r| eig.vectors[(r, col)] * gauge).collect())
    };
    let up = dressed(NuclearLevel::Up);
    let down = dressed(NuclearLevel::Down);
    let v = drive_operator(p, polarization);
    Ok(up.inner(&v.apply(&down)?).re)
}

/// Nuclear Rabi rate from [`nuclear_coupling`], `Ω₀|c|/2`, in the convention of
/// [`nuclear_rabi_rate`] (Bloch angle `2·Ω_eff·t`). Unlike the closed form it
/// also covers the electron in `|0⟩`.
pub fn nuclear_rabi_rate_dressed(p: &SystemParams, d: &DriveParams, electron: ElectronLevel) -> Result<f64> {
    Ok(d.omega0 * nuclear_coupling(p, d.polarization, electron)?.abs() / 2.0)
}

/// Effective nuclear Rabi rate `Ω_eff = (Ω₀/4)|A⊥/(D + Bγe) − γn/γe|`; the
/// Bloch rotation angle after time t is `2·Ω_eff·t`.
pub fn nuclear_rabi_rate(p: &SystemParams, d: &DriveParams) -> Result<f64> {
    let den = p.electron_transition();
    if den == 0.0 {
        return Err(resonance_error("D + Bγe"));
    }
    Ok(d.omega0 / 4.0 * (p.a_perp / den - p.gamma_n / p.gamma_e).abs())
}

/// Field where the direct and hyperfine-mediated nuclear drive cancel,
/// `A⊥/(D + Bγe) = γn/γe`.
pub fn nuclear_null_field(p: &SystemParams) -> Result<f64> {
    if p.gamma_n == 0.0 || p.gamma_e == 0.0 {
        return Err(Error::InvalidParameter("null field needs γn ≠ 0 and γe ≠ 0".into()));
    }
    Ok((p.a_perp * p.gamma_e / p.gamma_n - p.d) / p.gamma_e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_constants() {
        let p = SystemParams::defaults();
        assert!((p.gamma_n / TWO_PI + 4.31858e6).abs() < 1.0);
        assert!((p.gamma_e / TWO_PI - 28.0e9).abs() < 1.0);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn qubit_embedding_round_trip() {
        let op = CMatrix::from_fn(4, 4, |i, j| C64::new((4 * i + j) as f64, 0.0));
        let full = embed_qubit_operator(&op).unwrap();
        assert_eq!(project_qubit_operator(&full).unwrap(), op);
        assert_eq!(full[(3, 3)], op[(0, 0)]);
        assert_eq!(full[(4, 4)], C64::new(0.0, 0.0));
        let psi = StateVector::basis(4, 3);
        assert_eq!(embed_qubit_state(&psi).unwrap(), basis_state(ElectronLevel::Plus, NuclearLevel::Up));
    }

    #[test]
    fn interaction_picture_at_zero_is_h_minus_h0() {
        let p = SystemParams::defaults();
        let d = DriveParams::new(TWO_PI * 1e8, 1.0, 0.3, Polarization::Unpolarized);
        let diff = &h_total(&p, &d, 0.0) - &h0(&p);
        assert!(interaction_picture_h(&p, &d, 0.0).max_abs_diff(&diff) < 1e-15 * h0(&p).max_abs());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_min(|x| (x - 0.3) * (x - 0.3), -1.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }
}
