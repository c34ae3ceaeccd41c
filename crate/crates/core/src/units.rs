//! Unit-suffixed quantity parsing for configuration files.
//!
//! Quantities are written as `"<number> <unit>"`, e.g. `"0.74 pF/cm"`,
//! `"2.2 V*cm"`, `"0.2 dB/m/GHz"` or `"10 dBm"`. A unit expression is a
//! product of prefixed base units in the numerator, optionally followed by
//! `/`-separated denominators. Values are converted into the unit the caller
//! asks for, which is how everything ends up in SI at ingestion.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("cannot parse a number from `{0}`")]
    BadNumber(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("`{text}` has no unit suffix (expected {expected})")]
    MissingUnit { text: String, expected: String },
    #[error("unit `{given}` is not convertible to `{expected}`")]
    Incompatible { given: String, expected: String },
}

const BASES: usize = 11;

// m F H K Ohm V W Hz s rad dB ; bit/s is folded into Hz-like "bit rate" below
const BASE_UNITS: &[(&str, usize, f64)] = &[
    ("m", 0, 1.0),
    ("F", 1, 1.0),
    ("H", 2, 1.0),
    ("K", 3, 1.0),
    ("Ohm", 4, 1.0),
    ("ohm", 4, 1.0),
    ("Ω", 4, 1.0),
    ("V", 5, 1.0),
    ("W", 6, 1.0),
    ("Hz", 7, 1.0),
    ("s", 8, 1.0),
    ("rad", 9, 1.0),
    ("deg", 9, std::f64::consts::PI / 180.0),
    ("dB", 10, 1.0),
];

const PREFIXES: &[(&str, f64)] = &[
    ("f", 1e-15),
    ("p", 1e-12),
    ("n", 1e-9),
    ("u", 1e-6),
    ("µ", 1e-6),
    ("μ", 1e-6),
    ("m", 1e-3),
    ("c", 1e-2),
    ("k", 1e3),
    ("M", 1e6),
    ("G", 1e9),
    ("T", 1e12),
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Unit {
    scale: f64,
    dims: [i8; BASES],
}

impl Unit {
    const ONE: Unit = Unit {
        scale: 1.0,
        dims: [0; BASES],
    };

    fn mul(mut self, other: Unit, sign: i8) -> Unit {
        if sign > 0 {
            self.scale *= other.scale;
        } else {
            self.scale /= other.scale;
        }
        for (d, o) in self.dims.iter_mut().zip(other.dims) {
            *d += sign * o;
        }
        self
    }
}

fn base_unit(token: &str) -> Option<Unit> {
    // bit rates: "bps", "Gbps", "bit/s" (the latter handled by the expression parser)
    if token == "bps" || token == "bit" {
        let mut dims = [0; BASES];
        if token == "bps" {
            dims[7] = 1;
        }
        // a bare "bit" is dimensionless so that "bit/s" composes to 1/s; map 1/s onto Hz
        return Some(Unit { scale: 1.0, dims });
    }
    BASE_UNITS
        .iter()
        .find(|(sym, _, _)| *sym == token)
        .map(|&(_, idx, scale)| {
            let mut dims = [0; BASES];
            dims[idx] = 1;
            Unit { scale, dims }
        })
}

fn token_unit(token: &str) -> Result<Unit, UnitError> {
    if let Some(u) = base_unit(token) {
        return Ok(u);
    }
    for (prefix, factor) in PREFIXES {
        if let Some(rest) = token.strip_prefix(prefix) {
            if rest.is_empty() {
                continue;
            }
            if let Some(mut u) = base_unit(rest) {
                u.scale *= factor;
                return Ok(u);
            }
        }
    }
    Err(UnitError::UnknownUnit(token.to_string()))
}

fn parse_unit(expr: &str) -> Result<Unit, UnitError> {
    let expr = expr.trim();
    if expr.is_empty() || expr == "1" {
        return Ok(Unit::ONE);
    }
    let mut unit = Unit::ONE;
    for (i, segment) in expr.split('/').enumerate() {
        let sign = if i == 0 { 1 } else { -1 };
        let segment = segment.trim();
        if segment.is_empty() {
            return Err(UnitError::UnknownUnit(expr.to_string()));
        }
        if i == 0 && segment == "1" {
            continue;
        }
        for factor in segment.split(['*', '·', ' ']).filter(|s| !s.is_empty()) {
            unit = unit.mul(token_unit(factor)?, sign);
        }
    }
    // seconds in a denominator are frequencies: fold s^-n into Hz^n
    if unit.dims[8] < 0 {
        unit.dims[7] -= unit.dims[8];
        unit.dims[8] = 0;
    }
    Ok(unit)
}

/// Splits `"1.5e-3 mV"` into its number and unit parts.
fn split_number(text: &str) -> Result<(f64, &str), UnitError> {
    let text = text.trim();
    let end = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && text[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let value = text[..end]
        .parse::<f64>()
        .map_err(|_| UnitError::BadNumber(text.to_string()))?;
    Ok((value, text[end..].trim()))
}

/// Parses `text` and returns its value expressed in `expected` units.
///
/// `expected` is itself a unit expression, e.g. `"F/m"`, `"dB/m/GHz"`, `"V*m"`.
/// Powers may also be given in `dBm` when `expected` is a power unit.
pub fn parse_quantity(text: &str, expected: &str) -> Result<f64, UnitError> {
    let (value, unit_text) = split_number(text)?;
    let target = parse_unit(expected)?;
    if unit_text.is_empty() {
        if target.dims == [0; BASES] {
            return Ok(value / target.scale);
        }
        return Err(UnitError::MissingUnit {
            text: text.to_string(),
            expected: expected.to_string(),
        });
    }
    if unit_text == "dBm" {
        let mut watt = [0; BASES];
        watt[6] = 1;
        if target.dims != watt {
            return Err(UnitError::Incompatible {
                given: unit_text.to_string(),
                expected: expected.to_string(),
            });
        }
        return Ok(1e-3 * 10f64.powf(value / 10.0) / target.scale);
    }
    let given = parse_unit(unit_text)?;
    if given.dims != target.dims {
        return Err(UnitError::Incompatible {
            given: unit_text.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(value * given.scale / target.scale)
}
