//! One-line circuit step syntax.
//!
//! ```text
//! prepare electron (+1|0|-1)
//! prepare nucleus (up|down)
//! electron (x|y) <angle> [for <time>]
//! nuclear (x|y) <angle> [on (+1|0)] [for <time>]
//! wait (<time>|grid)
//! measure [keep]
//! if (0|1): <step>; <step>; ...
//! ```
//!
//! Angles are Bloch angles. `measure keep` records the outcome without
//! projecting. `wait grid` takes its duration from the time grid, one circuit
//! per grid point.

use std::fmt;

use nvgatesim::circuits::{CircuitDrives, PulseStep};
use nvgatesim::gates::Axis;
use nvgatesim::hamiltonian::{DriveParams, ElectronLevel, NuclearLevel, SystemParams};

use crate::units::{format_quantity, parse_quantity, Dimension};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WaitSpec {
    Time(f64),
    Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepSpec {
    PrepareElectron(ElectronLevel),
    PrepareNucleus(NuclearLevel),
    Electron { axis: Axis, angle: f64, duration: Option<f64> },
    Nuclear { axis: Axis, angle: f64, electron: ElectronLevel, duration: Option<f64> },
    Wait(WaitSpec),
    Measure { project: bool },
    If { on_zero: bool, steps: Vec<StepSpec> },
}

pub(crate) fn electron_name(e: ElectronLevel) -> &'static str {
    match e {
        ElectronLevel::Plus => "+1",
        ElectronLevel::Zero => "0",
        ElectronLevel::Minus => "-1",
    }
}

pub(crate) fn parse_electron(s: &str) -> Result<ElectronLevel, String> {
    match s {
        "+1" | "1" => Ok(ElectronLevel::Plus),
        "0" => Ok(ElectronLevel::Zero),
        "-1" => Ok(ElectronLevel::Minus),
        _ => Err(format!("unknown electron level {s:?} (use +1, 0 or -1)")),
    }
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::X => "x",
        Axis::Y => "y",
    }
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    match s {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        _ => Err(format!("unknown axis {s:?} (use x or y)")),
    }
}

/// Consumes an optional `for <time>` tail.
fn duration_tail(words: &[&str]) -> Result<Option<f64>, String> {
    match words {
        [] => Ok(None),
        ["for", rest @ ..] if !rest.is_empty() => {
            let t = parse_quantity(&rest.join(" "), Dimension::Time)?;
            if !(t >= 0.0 && t.is_finite()) {
                return Err(format!("pulse duration must be finite and >= 0, got {t:e} s"));
            }
            Ok(Some(t))
        }
        _ => Err(format!("unexpected {:?}", words.join(" "))),
    }
}

/// Number and unit may be one word ("90deg") or two ("90 deg").
fn angle_and_rest<'a>(words: &'a [&'a str]) -> Result<(f64, &'a [&'a str]), String> {
    let first = words.first().ok_or("missing angle")?;
    if let Ok(a) = parse_quantity(first, Dimension::Angle) {
        return Ok((a, &words[1..]));
    }
    if words.len() >= 2 {
        if let Ok(a) = parse_quantity(&format!("{} {}", words[0], words[1]), Dimension::Angle) {
            return Ok((a, &words[2..]));
        }
    }
    parse_quantity(first, Dimension::Angle).map(|a| (a, &words[1..]))
}

impl StepSpec {
    pub fn parse(text: &str) -> Result<StepSpec, String> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("if") {
            let (cond, body) = rest.split_once(':').ok_or("conditional needs `if 0:` or `if 1:`")?;
            let on_zero = match cond.trim() {
                "0" => true,
                "1" => false,
                c => return Err(format!("conditional outcome must be 0 or 1, got {c:?}")),
            };
            let steps = body
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| match StepSpec::parse(s)? {
                    StepSpec::If { .. } => Err("conditionals cannot be nested".to_string()),
                    StepSpec::Measure { .. } => Err("measurements are not allowed inside a conditional".to_string()),
                    step => Ok(step),
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(StepSpec::If { on_zero, steps });
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["prepare", "electron", level] => Ok(StepSpec::PrepareElectron(parse_electron(level)?)),
            ["prepare", "nucleus", "up"] => Ok(StepSpec::PrepareNucleus(NuclearLevel::Up)),
            ["prepare", "nucleus", "down"] => Ok(StepSpec::PrepareNucleus(NuclearLevel::Down)),
            ["prepare", ..] => Err(format!("cannot parse {text:?} (prepare electron +1|0|-1 or prepare nucleus up|down)")),
            ["electron", axis, rest @ ..] => {
                let axis = parse_axis(axis)?;
                let (angle, rest) = angle_and_rest(rest)?;
                Ok(StepSpec::Electron { axis, angle, duration: duration_tail(rest)? })
            }
            ["nuclear", axis, rest @ ..] => {
                let axis = parse_axis(axis)?;
                let (angle, mut rest) = angle_and_rest(rest)?;
                let mut electron = ElectronLevel::Plus;
                if let ["on", level, tail @ ..] = rest {
                    electron = parse_electron(level)?;
                    rest = tail;
                }
                Ok(StepSpec::Nuclear { axis, angle, electron, duration: duration_tail(rest)? })
            }
            ["wait", "grid"] => Ok(StepSpec::Wait(WaitSpec::Grid)),
            ["wait", rest @ ..] if !rest.is_empty() => {
                let t = parse_quantity(&rest.join(" "), Dimension::Time)?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(format!("wait must be finite and >= 0, got {t:e} s"));
                }
                Ok(StepSpec::Wait(WaitSpec::Time(t)))
            }
            ["measure"] => Ok(StepSpec::Measure { project: true }),
            ["measure", "keep"] => Ok(StepSpec::Measure { project: false }),
            _ => Err(format!("cannot parse circuit step {text:?}")),
        }
    }

    pub fn uses_grid(&self) -> bool {
        match self {
            StepSpec::Wait(WaitSpec::Grid) => true,
            StepSpec::If { steps, .. } => steps.iter().any(StepSpec::uses_grid),
            _ => false,
        }
    }

    /// Library step, with `wait grid` set to `grid_wait` and drives at the
    /// configured amplitudes.
    pub fn to_pulse(
        &self,
        p: &SystemParams,
        drives: &CircuitDrives,
        nuclear_amplitude: f64,
        grid_wait: f64,
    ) -> nvgatesim::Result<PulseStep> {
        let with = |step: PulseStep, d: Option<f64>| match d {
            Some(t) => step.with_duration(t),
            None => step,
        };
        Ok(match self {
            StepSpec::PrepareElectron(e) => PulseStep::prepare_electron(*e),
            StepSpec::PrepareNucleus(n) => PulseStep::prepare_nucleus(*n),
            StepSpec::Electron { axis, angle, duration } => {
                with(PulseStep::electron(*axis, *angle, drives.electron), *duration)
            }
            StepSpec::Nuclear { axis, angle, electron, duration } => {
                let drive = if *electron == ElectronLevel::Plus {
                    drives.nuclear
                } else {
                    DriveParams::nuclear_resonant(p, nuclear_amplitude, 0.0, *electron)?
                };
                with(PulseStep::nuclear(*axis, *angle, drive, *electron), *duration)
            }
            StepSpec::Wait(WaitSpec::Time(t)) => PulseStep::Wait(*t),
            StepSpec::Wait(WaitSpec::Grid) => PulseStep::Wait(grid_wait),
            StepSpec::Measure { project } => PulseStep::MeasureElectronZ { project: *project },
            StepSpec::If { on_zero, steps } => PulseStep::Conditional {
                on_zero: *on_zero,
                steps: steps
                    .iter()
                    .map(|s| s.to_pulse(p, drives, nuclear_amplitude, grid_wait))
                    .collect::<nvgatesim::Result<_>>()?,
            },
        })
    }
}

impl fmt::Display for StepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tail = |d: &Option<f64>| d.map(|t| format!(" for {}", format_quantity(t, Dimension::Time))).unwrap_or_default();
        match self {
            StepSpec::PrepareElectron(e) => write!(f, "prepare electron {}", electron_name(*e)),
            StepSpec::PrepareNucleus(n) => {
                write!(f, "prepare nucleus {}", if *n == NuclearLevel::Up { "up" } else { "down" })
            }
            StepSpec::Electron { axis, angle, duration } => {
                write!(f, "electron {} {}{}", axis_name(*axis), format_quantity(*angle, Dimension::Angle), tail(duration))
            }
            StepSpec::Nuclear { axis, angle, electron, duration } => write!(
                f,
                "nuclear {} {} on {}{}",
                axis_name(*axis),
                format_quantity(*angle, Dimension::Angle),
                electron_name(*electron),
                tail(duration)
            ),
            StepSpec::Wait(WaitSpec::Time(t)) => write!(f, "wait {}", format_quantity(*t, Dimension::Time)),
            StepSpec::Wait(WaitSpec::Grid) => write!(f, "wait grid"),
            StepSpec::Measure { project: true } => write!(f, "measure"),
            StepSpec::Measure { project: false } => write!(f, "measure keep"),
            StepSpec::If { on_zero, steps } => {
                let body: Vec<String> = steps.iter().map(ToString::to_string).collect();
                write!(f, "if {}: {}", if *on_zero { 0 } else { 1 }, body.join("; "))
            }
        }
    }
}
