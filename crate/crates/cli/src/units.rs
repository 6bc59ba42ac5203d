//! Dimensioned values: `"<number> <unit>"`, unit mandatory.
//!
//! Values are stored in the base unit of their dimension (Hz, T, s, rad,
//! Hz/T). Decimal prefixes are applied by shifting the exponent of the
//! literal, so `"102.5 mT"` parses to exactly the double nearest 0.1025.

use std::f64::consts::PI;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Field,
    Time,
    Angle,
    GyromagneticRatio,
}

enum Scale {
    Decimal(i32),
    Factor(f64),
}

impl Dimension {
    pub fn base_unit(self) -> &'static str {
        match self {
            Dimension::Frequency => "Hz",
            Dimension::Field => "T",
            Dimension::Time => "s",
            Dimension::Angle => "rad",
            Dimension::GyromagneticRatio => "Hz/T",
        }
    }

    fn accepted(self) -> &'static str {
        match self {
            Dimension::Frequency => "Hz, kHz, MHz, GHz",
            Dimension::Field => "T, mT, uT",
            Dimension::Time => "s, ms, us, ns, ps",
            Dimension::Angle => "rad, deg, pi",
            Dimension::GyromagneticRatio => "Hz/T, kHz/T, MHz/T, GHz/T, kHz/mT, MHz/mT",
        }
    }

    fn scale(self, unit: &str) -> Option<Scale> {
        use Scale::*;
        let s = match (self, unit) {
            (Dimension::Frequency, "Hz") => Decimal(0),
            (Dimension::Frequency, "kHz") => Decimal(3),
            (Dimension::Frequency, "MHz") => Decimal(6),
            (Dimension::Frequency, "GHz") => Decimal(9),
            (Dimension::Field, "T") => Decimal(0),
            (Dimension::Field, "mT") => Decimal(-3),
            (Dimension::Field, "uT" | "µT") => Decimal(-6),
            (Dimension::Time, "s") => Decimal(0),
            (Dimension::Time, "ms") => Decimal(-3),
            (Dimension::Time, "us" | "µs") => Decimal(-6),
            (Dimension::Time, "ns") => Decimal(-9),
            (Dimension::Time, "ps") => Decimal(-12),
            (Dimension::Angle, "rad") => Decimal(0),
            (Dimension::Angle, "deg") => Factor(PI / 180.0),
            (Dimension::Angle, "pi") => Factor(PI),
            (Dimension::GyromagneticRatio, "Hz/T") => Decimal(0),
            (Dimension::GyromagneticRatio, "kHz/T") => Decimal(3),
            (Dimension::GyromagneticRatio, "MHz/T" | "kHz/mT") => Decimal(6),
            (Dimension::GyromagneticRatio, "GHz/T" | "MHz/mT") => Decimal(9),
            _ => return None,
        };
        Some(s)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Frequency => "frequency",
            Dimension::Field => "magnetic field",
            Dimension::Time => "time",
            Dimension::Angle => "angle",
            Dimension::GyromagneticRatio => "gyromagnetic ratio",
        };
        f.write_str(name)
    }
}

/// Splits `text` into its numeric literal and unit.
fn split(text: &str) -> Option<(&str, &str)> {
    let t = text.trim();
    let body = t.strip_prefix(['+', '-']).unwrap_or(t);
    let sign_len = t.len() - body.len();
    let num_len = if body.starts_with("inf") {
        3
    } else {
        let b = body.as_bytes();
        let mut i = 0;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i == 0 {
            return None;
        }
        // exponent only if digits follow
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            let digits = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j > digits {
                i = j;
            }
        }
        i
    };
    let (num, unit) = t.split_at(sign_len + num_len);
    Some((num, unit.trim()))
}

/// Parses a dimensioned value into the base unit of `dim`.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let (num, unit) = split(text).ok_or_else(|| format!("expected a number with a {dim} unit, got {text:?}"))?;
    if unit.is_empty() {
        return Err(format!(
            "missing unit in {text:?}: {dim} values need one of {} (e.g. \"{} {}\")",
            dim.accepted(),
            num,
            dim.base_unit()
        ));
    }
    let scale = dim
        .scale(unit)
        .ok_or_else(|| format!("unit {unit:?} in {text:?} is not a {dim} unit (use {})", dim.accepted()))?;
    let bad = || format!("malformed number {num:?} in {text:?}");
    let value = match scale {
        Scale::Decimal(k) => {
            if num.trim_start_matches(['+', '-']) == "inf" {
                num.parse::<f64>().map_err(|_| bad())?
            } else {
                let (mantissa, exp) = match num.find(['e', 'E']) {
                    Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| bad())?),
                    None => (num, 0),
                };
                format!("{mantissa}e{}", exp + k).parse::<f64>().map_err(|_| bad())?
            }
        }
        Scale::Factor(f) => num.parse::<f64>().map_err(|_| bad())? * f,
    };
    if value.is_nan() {
        return Err(bad());
    }
    Ok(value)
}

/// Formats a base-unit value so that [`parse_quantity`] returns it exactly.
pub fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{value:?} {}", dim.base_unit())
}
