//! Experiment configuration: TOML sections with dimensioned string values.
//!
//! Every key is optional; an empty file is a `cz` run with all defaults.
//! Unknown keys, missing units and type mismatches are rejected with the
//! line and column of the offending value. See `docs/config.md` for the
//! grammar.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::ops::Range;

use nvgatesim::circuits::CircuitDrives;
use nvgatesim::dynamics::NoiseParams;
use nvgatesim::gates::Axis;
use nvgatesim::hamiltonian::{
    DriveParams, ElectronLevel, Polarization, SystemParams, BOHR_MAGNETON_HZ_PER_T, G_ELECTRON, G_N15,
    NUCLEAR_MAGNETON_HZ_PER_T,
};
use serde::Deserialize;
use toml::Spanned;

use crate::steps::{electron_name, parse_electron, StepSpec};
use crate::units::{format_quantity, parse_quantity, Dimension};

const TWO_PI: f64 = 2.0 * PI;

/// Configuration error with its position in the source, if known.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, span: Range<usize>, key: &str, message: impl std::fmt::Display) -> ConfigError {
        let (line, column) = position(self.text, span.start);
        ConfigError { message: format!("`{key}`: {message}"), line: Some(line), column: Some(column) }
    }

    fn quantity(&self, v: &Spanned<String>, key: &str, dim: Dimension) -> Result<f64, ConfigError> {
        parse_quantity(v.get_ref(), dim).map_err(|e| self.error(v.span(), key, e))
    }

    fn positive(&self, v: &Spanned<String>, key: &str, dim: Dimension) -> Result<f64, ConfigError> {
        let x = self.quantity(v, key, dim)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.error(v.span(), key, "must be > 0"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Cz,
    ElectronRotation,
    NuclearRotation,
    CharacterizeHyperfine,
    MeasureNucleus,
    Resonances,
    CustomCircuit,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Cz => "cz",
            Experiment::ElectronRotation => "electron_rotation",
            Experiment::NuclearRotation => "nuclear_rotation",
            Experiment::CharacterizeHyperfine => "characterize_hyperfine",
            Experiment::MeasureNucleus => "measure_nucleus",
            Experiment::Resonances => "resonances",
            Experiment::CustomCircuit => "custom_circuit",
        }
    }

    fn is_circuit(self) -> bool {
        matches!(self, Experiment::CharacterizeHyperfine | Experiment::MeasureNucleus | Experiment::CustomCircuit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Full,
    Rwa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AxisName {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolarizationName {
    Unpolarized,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NucleusSpec {
    Up,
    Down,
    Mixed,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    workers: Option<usize>,
    output: Option<String>,
    model: Option<Model>,
    system: Option<RawSystem>,
    drive: Option<RawDrive>,
    noise: Option<RawNoise>,
    grid: Option<RawGrid>,
    sweep: Option<RawSweep>,
    circuit: Option<RawCircuit>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "B")]
    b: Option<Spanned<String>>,
    #[serde(rename = "D")]
    d: Option<Spanned<String>>,
    #[serde(rename = "E")]
    e: Option<Spanned<String>>,
    #[serde(rename = "A_par")]
    a_par: Option<Spanned<String>>,
    #[serde(rename = "A_perp")]
    a_perp: Option<Spanned<String>>,
    gamma_e: Option<Spanned<String>>,
    gamma_n: Option<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    amplitude: Option<Spanned<String>>,
    nuclear_amplitude: Option<Spanned<String>>,
    frequency: Option<Spanned<String>>,
    axis: Option<AxisName>,
    polarization: Option<PolarizationName>,
    electron: Option<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    #[serde(rename = "T1e")]
    t1e: Option<Spanned<String>>,
    #[serde(rename = "T1n")]
    t1n: Option<Spanned<String>>,
    #[serde(rename = "T2n")]
    t2n: Option<Spanned<String>>,
    #[serde(rename = "T2star")]
    t2_star: Option<Spanned<String>>,
    nbar_e: Option<Spanned<f64>>,
    nbar_n: Option<Spanned<f64>>,
    quasistatic: Option<bool>,
    ensemble: Option<Spanned<i64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_final: Option<Spanned<String>>,
    t_min: Option<Spanned<String>>,
    points: Option<Spanned<i64>>,
    spacing: Option<Spacing>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Spanned<String>,
    values: Option<Vec<Spanned<toml::Value>>>,
    from: Option<Spanned<toml::Value>>,
    to: Option<Spanned<toml::Value>>,
    points: Option<Spanned<i64>>,
    spacing: Option<Spacing>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    steps: Option<Vec<Spanned<String>>>,
    electron: Option<Spanned<String>>,
    nucleus: Option<NucleusSpec>,
    readout_error: Option<Spanned<f64>>,
    basis_rotation: Option<Spanned<String>>,
}

/// Static-Hamiltonian parameters in Hz, T and Hz/T.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub b: f64,
    pub d: f64,
    pub e: f64,
    pub a_par: f64,
    pub a_perp: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            b: 0.05,
            d: 2.87e9,
            e: 7.0e6,
            a_par: 3.03e6,
            a_perp: 3.65e6,
            gamma_e: BOHR_MAGNETON_HZ_PER_T * G_ELECTRON,
            gamma_n: NUCLEAR_MAGNETON_HZ_PER_T * G_N15,
        }
    }
}

impl SystemConfig {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            d: TWO_PI * self.d,
            e: TWO_PI * self.e,
            a_par: TWO_PI * self.a_par,
            a_perp: TWO_PI * self.a_perp,
            b: self.b,
            gamma_e: TWO_PI * self.gamma_e,
            gamma_n: TWO_PI * self.gamma_n,
        }
    }
}

/// Drive settings; amplitudes are Ω₀/2π in Hz. `frequency = None` drives on
/// resonance.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveConfig {
    pub amplitude: f64,
    pub nuclear_amplitude: f64,
    pub frequency: Option<f64>,
    pub axis: Axis,
    pub polarization: Polarization,
    pub electron: ElectronLevel,
}

impl DriveConfig {
    fn defaults(experiment: Experiment) -> Self {
        let (amplitude, axis, polarization) = match experiment {
            Experiment::ElectronRotation => (250e6, Axis::X, Polarization::Unpolarized),
            Experiment::NuclearRotation => (140e6, Axis::Y, Polarization::Unpolarized),
            _ => (125e6, Axis::X, Polarization::CircularPlus),
        };
        DriveConfig {
            amplitude,
            nuclear_amplitude: 140e6,
            frequency: None,
            axis,
            polarization,
            electron: ElectronLevel::Plus,
        }
    }

    /// Electron drive for electron-rotation and circuit experiments.
    pub fn electron_drive(&self, p: &SystemParams) -> DriveParams {
        let mut d = DriveParams::electron_resonant(p, TWO_PI * self.amplitude, 0.0, self.polarization);
        if let Some(f) = self.frequency {
            d.omega = TWO_PI * f;
        }
        d
    }

    /// RF drive of the nuclear-rotation experiment.
    pub fn nuclear_drive(&self, p: &SystemParams) -> nvgatesim::Result<DriveParams> {
        let mut d = DriveParams::nuclear_resonant(p, TWO_PI * self.amplitude, 0.0, self.electron)?;
        d.polarization = self.polarization;
        if let Some(f) = self.frequency {
            d.omega = TWO_PI * f;
        }
        Ok(d)
    }

    pub fn circuit_drives(&self, p: &SystemParams) -> nvgatesim::Result<CircuitDrives> {
        Ok(CircuitDrives {
            electron: self.electron_drive(p),
            nuclear: DriveParams::nuclear_resonant(p, TWO_PI * self.nuclear_amplitude, 0.0, ElectronLevel::Plus)?,
        })
    }
}

/// Relaxation times in seconds (`inf` switches a channel off).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    pub t1e: f64,
    pub t1n: f64,
    pub t2n: f64,
    pub t2_star: f64,
    pub nbar_e: f64,
    pub nbar_n: f64,
    pub quasistatic: bool,
    pub ensemble: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            t1e: 100.0,
            t1n: 10.0,
            t2n: 1.0,
            t2_star: nvgatesim::dynamics::DEFAULT_T2_STAR,
            nbar_e: 0.0,
            nbar_n: 0.0,
            quasistatic: true,
            ensemble: 64,
        }
    }
}

impl NoiseConfig {
    /// Γe⁽¹⁾ = 1/T1e, Γn⁽¹⁾ = 1/T1n, Γn⁽²⁾ = 1/(2 T2n), λ = √2/T2*.
    pub fn params(&self) -> NoiseParams {
        NoiseParams {
            gamma_e1: 1.0 / self.t1e,
            gamma_n1: 1.0 / self.t1n,
            gamma_n2: 0.5 / self.t2n,
            nbar_e: self.nbar_e,
            nbar_n: self.nbar_n,
            lambda_e: if self.quasistatic { SQRT_2 / self.t2_star } else { 0.0 },
            ensemble_size: self.ensemble,
        }
    }
}

/// Output times. `t_final = None` picks the experiment's natural span.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub t_final: Option<f64>,
    pub t_min: Option<f64>,
    pub points: usize,
    pub spacing: Spacing,
}

impl GridConfig {
    fn defaults(experiment: Experiment) -> Self {
        let points = match experiment {
            Experiment::CharacterizeHyperfine | Experiment::CustomCircuit => 25,
            Experiment::MeasureNucleus => 1,
            _ => 201,
        };
        GridConfig { t_final: None, t_min: None, points, spacing: Spacing::Linear }
    }

    /// `points` times ending at `t_final`: linear from 0 (just `t_final` for
    /// a single point), or logarithmic from `t_min` (default `t_final`/1000).
    pub fn times(&self, t_final: f64) -> Vec<f64> {
        let n = self.points;
        if n <= 1 {
            return vec![t_final];
        }
        match self.spacing {
            Spacing::Linear => {
                (0..n).map(|k| if k + 1 == n { t_final } else { t_final * k as f64 / (n - 1) as f64 }).collect()
            }
            Spacing::Log => {
                let lo = self.t_min.unwrap_or(t_final * 1e-3);
                let r = (t_final / lo).ln();
                (0..n).map(|k| if k + 1 == n { t_final } else { lo * (r * k as f64 / (n - 1) as f64).exp() }).collect()
            }
        }
    }
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    B,
    D,
    E,
    APar,
    APerp,
    GammaE,
    GammaN,
    Amplitude,
    NuclearAmplitude,
    Frequency,
    T1e,
    T1n,
    T2n,
    T2Star,
    NbarE,
    NbarN,
    ReadoutError,
    TFinal,
}

const SWEEP_PARAMETERS: [(SweepParameter, &str); 18] = [
    (SweepParameter::B, "system.B"),
    (SweepParameter::D, "system.D"),
    (SweepParameter::E, "system.E"),
    (SweepParameter::APar, "system.A_par"),
    (SweepParameter::APerp, "system.A_perp"),
    (SweepParameter::GammaE, "system.gamma_e"),
    (SweepParameter::GammaN, "system.gamma_n"),
    (SweepParameter::Amplitude, "drive.amplitude"),
    (SweepParameter::NuclearAmplitude, "drive.nuclear_amplitude"),
    (SweepParameter::Frequency, "drive.frequency"),
    (SweepParameter::T1e, "noise.T1e"),
    (SweepParameter::T1n, "noise.T1n"),
    (SweepParameter::T2n, "noise.T2n"),
    (SweepParameter::T2Star, "noise.T2star"),
    (SweepParameter::NbarE, "noise.nbar_e"),
    (SweepParameter::NbarN, "noise.nbar_n"),
    (SweepParameter::ReadoutError, "circuit.readout_error"),
    (SweepParameter::TFinal, "grid.t_final"),
];

impl SweepParameter {
    pub fn path(self) -> &'static str {
        SWEEP_PARAMETERS.iter().find(|(p, _)| *p == self).map(|(_, s)| *s).expect("listed")
    }

    fn from_path(path: &str) -> Option<Self> {
        SWEEP_PARAMETERS.iter().find(|(_, s)| *s == path).map(|(p, _)| *p)
    }

    /// `None` for dimensionless parameters.
    pub fn dimension(self) -> Option<Dimension> {
        use SweepParameter::*;
        match self {
            B => Some(Dimension::Field),
            D | E | APar | APerp | Amplitude | NuclearAmplitude | Frequency => Some(Dimension::Frequency),
            GammaE | GammaN => Some(Dimension::GyromagneticRatio),
            T1e | T1n | T2n | T2Star | TFinal => Some(Dimension::Time),
            NbarE | NbarN | ReadoutError => None,
        }
    }

    /// Unit and factor used for the value column of the sweep index.
    pub fn display_unit(self) -> (&'static str, f64) {
        match self.dimension() {
            Some(Dimension::Field) => ("mT", 1e3),
            Some(Dimension::Frequency) => ("MHz", 1e-6),
            Some(Dimension::GyromagneticRatio) => ("MHz/T", 1e-6),
            Some(Dimension::Time) => ("ns", 1e9),
            Some(Dimension::Angle) => ("rad", 1.0),
            None => ("", 1.0),
        }
    }
}

/// Values in the parameter's base unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitConfig {
    pub steps: Vec<StepSpec>,
    pub electron: ElectronLevel,
    pub nucleus: NucleusSpec,
    pub readout_error: f64,
    pub basis_rotation: Option<StepSpec>,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        CircuitConfig {
            steps: Vec::new(),
            electron: ElectronLevel::Zero,
            nucleus: NucleusSpec::Up,
            readout_error: 0.0,
            basis_rotation: None,
        }
    }
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Sweep worker threads; 0 uses every core.
    pub workers: usize,
    /// CSV file name, relative to the output directory.
    pub output: String,
    pub model: Model,
    pub system: SystemConfig,
    pub drive: DriveConfig,
    pub noise: NoiseConfig,
    pub grid: GridConfig,
    pub sweep: Option<SweepConfig>,
    pub circuit: CircuitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults(Experiment::Cz)
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            seed: 0,
            workers: 0,
            output: format!("{}.csv", experiment.name()),
            model: Model::Full,
            system: SystemConfig::default(),
            drive: DriveConfig::defaults(experiment),
            noise: NoiseConfig::default(),
            grid: GridConfig::defaults(experiment),
            sweep: None,
            circuit: CircuitConfig::default(),
        }
    }

    /// Copy with `parameter` set to `value` (base units).
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Self {
        use SweepParameter::*;
        let mut c = self.clone();
        match parameter {
            B => c.system.b = value,
            D => c.system.d = value,
            E => c.system.e = value,
            APar => c.system.a_par = value,
            APerp => c.system.a_perp = value,
            GammaE => c.system.gamma_e = value,
            GammaN => c.system.gamma_n = value,
            Amplitude => c.drive.amplitude = value,
            NuclearAmplitude => c.drive.nuclear_amplitude = value,
            Frequency => c.drive.frequency = Some(value),
            T1e => c.noise.t1e = value,
            T1n => c.noise.t1n = value,
            T2n => c.noise.t2n = value,
            T2Star => c.noise.t2_star = value,
            NbarE => c.noise.nbar_e = value,
            NbarN => c.noise.nbar_n = value,
            ReadoutError => c.circuit.readout_error = value,
            TFinal => c.grid.t_final = Some(value),
        }
        c
    }

    /// Checks that every parameter set the run will use is accepted by the
    /// library.
    pub fn check(&self) -> Result<(), String> {
        let values: Vec<f64> = match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec![f64::NAN],
        };
        for v in values {
            let c = match &self.sweep {
                Some(s) => self.with_parameter(s.parameter, v),
                None => self.clone(),
            };
            let label = match &self.sweep {
                Some(s) => format!(" (sweep {} = {v:?})", s.parameter.path()),
                None => String::new(),
            };
            c.check_one().map_err(|e| format!("{e}{label}"))?;
        }
        Ok(())
    }

    fn check_one(&self) -> Result<(), String> {
        let p = self.system.params();
        p.validate().map_err(|e| e.to_string())?;
        self.noise.params().validate().map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&self.circuit.readout_error) {
            return Err("circuit.readout_error must lie in [0, 1]".into());
        }
        if let Some(t) = self.grid.t_final {
            if !(t >= 0.0 && t.is_finite()) {
                return Err("grid.t_final must be finite and >= 0".into());
            }
        }
        if self.grid.spacing == Spacing::Log {
            if let Some(t) = self.grid.t_min {
                if !(t > 0.0) {
                    return Err("grid.t_min must be > 0".into());
                }
            }
        }
        match self.experiment {
            Experiment::ElectronRotation => {
                self.drive.electron_drive(&p).validate().map_err(|e| e.to_string())?;
                if self.drive.amplitude <= 0.0 {
                    return Err("drive.amplitude must be > 0".into());
                }
            }
            Experiment::NuclearRotation => {
                if self.drive.electron == ElectronLevel::Minus {
                    return Err("drive.electron must be +1 or 0 for nuclear rotations".into());
                }
                if self.drive.amplitude <= 0.0 {
                    return Err("drive.amplitude must be > 0".into());
                }
                self.drive.nuclear_drive(&p).and_then(|d| d.validate()).map_err(|e| e.to_string())?;
            }
            e if e.is_circuit() => {
                let drives = self.drive.circuit_drives(&p).map_err(|e| e.to_string())?;
                drives.electron.validate().map_err(|e| e.to_string())?;
                for s in self.circuit.steps.iter().chain(&self.circuit.basis_rotation) {
                    s.to_pulse(&p, &drives, TWO_PI * self.drive.nuclear_amplitude, 0.0).map_err(|e| e.to_string())?;
                }
                if e == Experiment::CharacterizeHyperfine && self.circuit.nucleus == NucleusSpec::Mixed {
                    return Err("characterize_hyperfine needs circuit.nucleus = up or down".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The configuration as text that [`parse_config`] reads back to an
    /// identical value.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let q = format_quantity;
        let str_ = |x: &str| format!("{x:?}");
        let _ = writeln!(s, "experiment = {}", str_(self.experiment.name()));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "output = {}", str_(&self.output));
        let _ = writeln!(s, "model = {}", str_(if self.model == Model::Full { "full" } else { "rwa" }));

        let sy = &self.system;
        let _ = writeln!(s, "\n[system]");
        let _ = writeln!(s, "B = {}", str_(&q(sy.b, Dimension::Field)));
        let _ = writeln!(s, "D = {}", str_(&q(sy.d, Dimension::Frequency)));
        let _ = writeln!(s, "E = {}", str_(&q(sy.e, Dimension::Frequency)));
        let _ = writeln!(s, "A_par = {}", str_(&q(sy.a_par, Dimension::Frequency)));
        let _ = writeln!(s, "A_perp = {}", str_(&q(sy.a_perp, Dimension::Frequency)));
        let _ = writeln!(s, "gamma_e = {}", str_(&q(sy.gamma_e, Dimension::GyromagneticRatio)));
        let _ = writeln!(s, "gamma_n = {}", str_(&q(sy.gamma_n, Dimension::GyromagneticRatio)));

        let d = &self.drive;
        let _ = writeln!(s, "\n[drive]");
        let _ = writeln!(s, "amplitude = {}", str_(&q(d.amplitude, Dimension::Frequency)));
        let _ = writeln!(s, "nuclear_amplitude = {}", str_(&q(d.nuclear_amplitude, Dimension::Frequency)));
        let freq = d.frequency.map(|f| q(f, Dimension::Frequency)).unwrap_or_else(|| "resonant".into());
        let _ = writeln!(s, "frequency = {}", str_(&freq));
        let _ = writeln!(s, "axis = {}", str_(if d.axis == Axis::X { "x" } else { "y" }));
        let pol = if d.polarization == Polarization::Unpolarized { "unpolarized" } else { "circular" };
        let _ = writeln!(s, "polarization = {}", str_(pol));
        let _ = writeln!(s, "electron = {}", str_(electron_name(d.electron)));

        let n = &self.noise;
        let _ = writeln!(s, "\n[noise]");
        let _ = writeln!(s, "T1e = {}", str_(&q(n.t1e, Dimension::Time)));
        let _ = writeln!(s, "T1n = {}", str_(&q(n.t1n, Dimension::Time)));
        let _ = writeln!(s, "T2n = {}", str_(&q(n.t2n, Dimension::Time)));
        let _ = writeln!(s, "T2star = {}", str_(&q(n.t2_star, Dimension::Time)));
        let _ = writeln!(s, "nbar_e = {:?}", n.nbar_e);
        let _ = writeln!(s, "nbar_n = {:?}", n.nbar_n);
        let _ = writeln!(s, "quasistatic = {}", n.quasistatic);
        let _ = writeln!(s, "ensemble = {}", n.ensemble);

        let g = &self.grid;
        let _ = writeln!(s, "\n[grid]");
        let tf = g.t_final.map(|t| q(t, Dimension::Time)).unwrap_or_else(|| "auto".into());
        let _ = writeln!(s, "t_final = {}", str_(&tf));
        if let Some(t) = g.t_min {
            let _ = writeln!(s, "t_min = {}", str_(&q(t, Dimension::Time)));
        }
        let _ = writeln!(s, "points = {}", g.points);
        let _ = writeln!(s, "spacing = {}", str_(if g.spacing == Spacing::Linear { "linear" } else { "log" }));

        if let Some(sw) = &self.sweep {
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "parameter = {}", str_(sw.parameter.path()));
            let vals: Vec<String> = sw
                .values
                .iter()
                .map(|&v| match sw.parameter.dimension() {
                    Some(dim) => str_(&q(v, dim)),
                    None => format!("{v:?}"),
                })
                .collect();
            let _ = writeln!(s, "values = [{}]", vals.join(", "));
        }

        let c = &self.circuit;
        let _ = writeln!(s, "\n[circuit]");
        let steps: Vec<String> = c.steps.iter().map(|st| str_(&st.to_string())).collect();
        let _ = writeln!(s, "steps = [{}]", steps.join(", "));
        let _ = writeln!(s, "electron = {}", str_(electron_name(c.electron)));
        let nuc = match c.nucleus {
            NucleusSpec::Up => "up",
            NucleusSpec::Down => "down",
            NucleusSpec::Mixed => "mixed",
        };
        let _ = writeln!(s, "nucleus = {}", str_(nuc));
        let _ = writeln!(s, "readout_error = {:?}", c.readout_error);
        if let Some(r) = &c.basis_rotation {
            let _ = writeln!(s, "basis_rotation = {}", str_(&r.to_string()));
        }
        s
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let (line, column) = match e.span() {
        Some(span) => {
            let (l, c) = position(text, span.start);
            (Some(l), Some(c))
        }
        None => (None, None),
    };
    ConfigError { message: e.message().to_string(), line, column }
}

fn count(src: &Source, v: &Spanned<i64>, key: &str, min: i64) -> Result<usize, ConfigError> {
    let n = *v.get_ref();
    if n < min {
        return Err(src.error(v.span(), key, format!("must be >= {min}, got {n}")));
    }
    usize::try_from(n).map_err(|_| src.error(v.span(), key, "too large"))
}

fn sweep_value(src: &Source, v: &Spanned<toml::Value>, key: &str, param: SweepParameter) -> Result<f64, ConfigError> {
    match (v.get_ref(), param.dimension()) {
        (toml::Value::String(s), Some(dim)) => parse_quantity(s, dim).map_err(|e| src.error(v.span(), key, e)),
        (toml::Value::Float(x), None) => Ok(*x),
        (toml::Value::Integer(x), None) => Ok(*x as f64),
        (_, Some(dim)) => Err(src.error(v.span(), key, format!("expected a string with a {dim} unit, e.g. \"1 {}\"", dim.base_unit()))),
        (_, None) => Err(src.error(v.span(), key, format!("{} is dimensionless; expected a number", param.path()))),
    }
}

fn parse_sweep(src: &Source, raw: RawSweep) -> Result<SweepConfig, ConfigError> {
    let parameter = SweepParameter::from_path(raw.parameter.get_ref()).ok_or_else(|| {
        let known: Vec<&str> = SWEEP_PARAMETERS.iter().map(|(_, s)| *s).collect();
        src.error(raw.parameter.span(), "sweep.parameter", format!("unknown parameter (use one of {})", known.join(", ")))
    })?;
    let range = raw.from.is_some() || raw.to.is_some() || raw.points.is_some() || raw.spacing.is_some();
    let values = match (raw.values, range) {
        (Some(vs), false) => {
            if vs.is_empty() {
                return Err(src.error(raw.parameter.span(), "sweep.values", "needs at least one value"));
            }
            vs.iter().map(|v| sweep_value(src, v, "sweep.values", parameter)).collect::<Result<Vec<_>, _>>()?
        }
        (None, true) => {
            let missing = |k: &str| src.error(raw.parameter.span(), k, "a sweep range needs from, to and points");
            let from = raw.from.as_ref().ok_or_else(|| missing("sweep.from"))?;
            let to = raw.to.as_ref().ok_or_else(|| missing("sweep.to"))?;
            let pts = raw.points.as_ref().ok_or_else(|| missing("sweep.points"))?;
            let a = sweep_value(src, from, "sweep.from", parameter)?;
            let b = sweep_value(src, to, "sweep.to", parameter)?;
            let n = count(src, pts, "sweep.points", 1)?;
            let spacing = raw.spacing.unwrap_or(Spacing::Linear);
            if spacing == Spacing::Log && !(a > 0.0 && b > 0.0) {
                return Err(src.error(from.span(), "sweep.from", "log spacing needs positive end points"));
            }
            (0..n)
                .map(|k| {
                    if n == 1 {
                        return a;
                    }
                    let f = k as f64 / (n - 1) as f64;
                    match spacing {
                        Spacing::Linear => a + (b - a) * f,
                        Spacing::Log => a * (b / a).powf(f),
                    }
                })
                .collect()
        }
        (Some(_), true) => {
            return Err(src.error(raw.parameter.span(), "sweep", "give either values or from/to/points, not both"))
        }
        (None, false) => return Err(src.error(raw.parameter.span(), "sweep", "needs values or from/to/points")),
    };
    Ok(SweepConfig { parameter, values })
}

/// Strict parse of a configuration file, with defaults applied.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let src = Source { text };
    let experiment = raw.experiment.unwrap_or(Experiment::Cz);
    let mut c = ExperimentConfig::defaults(experiment);
    if let Some(s) = raw.seed {
        c.seed = s;
    }
    if let Some(w) = raw.workers {
        c.workers = w;
    }
    if let Some(o) = raw.output {
        if o.trim().is_empty() {
            return Err(ConfigError { message: "`output` must not be empty".into(), line: None, column: None });
        }
        c.output = o;
    }
    if let Some(m) = raw.model {
        c.model = m;
    }

    let sys = raw.system.unwrap_or_default();
    let set = |slot: &mut f64, v: &Option<Spanned<String>>, key: &str, dim| -> Result<(), ConfigError> {
        if let Some(v) = v {
            *slot = src.quantity(v, key, dim)?;
        }
        Ok(())
    };
    set(&mut c.system.b, &sys.b, "system.B", Dimension::Field)?;
    set(&mut c.system.d, &sys.d, "system.D", Dimension::Frequency)?;
    set(&mut c.system.e, &sys.e, "system.E", Dimension::Frequency)?;
    set(&mut c.system.a_par, &sys.a_par, "system.A_par", Dimension::Frequency)?;
    set(&mut c.system.a_perp, &sys.a_perp, "system.A_perp", Dimension::Frequency)?;
    set(&mut c.system.gamma_e, &sys.gamma_e, "system.gamma_e", Dimension::GyromagneticRatio)?;
    set(&mut c.system.gamma_n, &sys.gamma_n, "system.gamma_n", Dimension::GyromagneticRatio)?;

    let dr = raw.drive.unwrap_or_default();
    set(&mut c.drive.amplitude, &dr.amplitude, "drive.amplitude", Dimension::Frequency)?;
    set(&mut c.drive.nuclear_amplitude, &dr.nuclear_amplitude, "drive.nuclear_amplitude", Dimension::Frequency)?;
    if let Some(f) = &dr.frequency {
        c.drive.frequency = match f.get_ref().trim() {
            "resonant" => None,
            _ => Some(src.quantity(f, "drive.frequency", Dimension::Frequency)?),
        };
    }
    if let Some(a) = dr.axis {
        c.drive.axis = if a == AxisName::X { Axis::X } else { Axis::Y };
    }
    if let Some(pol) = dr.polarization {
        c.drive.polarization =
            if pol == PolarizationName::Unpolarized { Polarization::Unpolarized } else { Polarization::CircularPlus };
    }
    if let Some(e) = &dr.electron {
        c.drive.electron = parse_electron(e.get_ref()).map_err(|m| src.error(e.span(), "drive.electron", m))?;
    }

    let no = raw.noise.unwrap_or_default();
    if let Some(v) = &no.t1e {
        c.noise.t1e = src.positive(v, "noise.T1e", Dimension::Time)?;
    }
    if let Some(v) = &no.t1n {
        c.noise.t1n = src.positive(v, "noise.T1n", Dimension::Time)?;
    }
    if let Some(v) = &no.t2n {
        c.noise.t2n = src.positive(v, "noise.T2n", Dimension::Time)?;
    }
    if let Some(v) = &no.t2_star {
        c.noise.t2_star = src.positive(v, "noise.T2star", Dimension::Time)?;
    }
    for (slot, v, key) in [(&mut c.noise.nbar_e, &no.nbar_e, "noise.nbar_e"), (&mut c.noise.nbar_n, &no.nbar_n, "noise.nbar_n")] {
        if let Some(v) = v {
            if !(*v.get_ref() >= 0.0 && v.get_ref().is_finite()) {
                return Err(src.error(v.span(), key, "must be finite and >= 0"));
            }
            *slot = *v.get_ref();
        }
    }
    if let Some(q) = no.quasistatic {
        c.noise.quasistatic = q;
    }
    if let Some(m) = &no.ensemble {
        c.noise.ensemble = count(&src, m, "noise.ensemble", 1)?;
    }

    let gr = raw.grid.unwrap_or_default();
    if let Some(t) = &gr.t_final {
        c.grid.t_final = match t.get_ref().trim() {
            "auto" => None,
            _ => Some(src.quantity(t, "grid.t_final", Dimension::Time)?),
        };
    }
    if let Some(t) = &gr.t_min {
        c.grid.t_min = Some(src.positive(t, "grid.t_min", Dimension::Time)?);
    }
    if let Some(n) = &gr.points {
        c.grid.points = count(&src, n, "grid.points", 1)?;
    }
    if let Some(sp) = gr.spacing {
        c.grid.spacing = sp;
    }

    if let Some(sw) = raw.sweep {
        c.sweep = Some(parse_sweep(&src, sw)?);
    }

    let ci = raw.circuit.unwrap_or_default();
    if let Some(steps) = &ci.steps {
        c.circuit.steps = steps
            .iter()
            .map(|s| StepSpec::parse(s.get_ref()).map_err(|m| src.error(s.span(), "circuit.steps", m)))
            .collect::<Result<_, _>>()?;
    }
    if let Some(e) = &ci.electron {
        c.circuit.electron = parse_electron(e.get_ref()).map_err(|m| src.error(e.span(), "circuit.electron", m))?;
    }
    if let Some(n) = ci.nucleus {
        c.circuit.nucleus = n;
    }
    if let Some(r) = &ci.readout_error {
        c.circuit.readout_error = *r.get_ref();
    }
    if let Some(r) = &ci.basis_rotation {
        let step = StepSpec::parse(r.get_ref()).map_err(|m| src.error(r.span(), "circuit.basis_rotation", m))?;
        if !matches!(step, StepSpec::Nuclear { .. }) {
            return Err(src.error(r.span(), "circuit.basis_rotation", "must be a nuclear pulse"));
        }
        c.circuit.basis_rotation = Some(step);
    }
    if experiment == Experiment::CustomCircuit && c.circuit.steps.is_empty() {
        return Err(ConfigError {
            message: "`circuit.steps`: custom_circuit needs at least one step".into(),
            line: None,
            column: None,
        });
    }

    c.check().map_err(|message| ConfigError { message, line: None, column: None })?;
    Ok(c)
}
