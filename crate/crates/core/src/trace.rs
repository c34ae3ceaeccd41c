//! Two-column CSV traces with unit-bearing headers, e.g. `freq_GHz,s21_dB`
//! or `temperature (K),n_m`. Lines starting with `#` are comments.

use std::path::Path;

use crate::error::{Error, Result};
use crate::units::parse_quantity;

/// Unit named by a column header: `name (unit)`, `name [unit]` or `name_unit`.
pub fn header_unit(header: &str) -> Option<String> {
    let h = header.trim();
    for (open, close) in [('(', ')'), ('[', ']')] {
        if let (Some(a), Some(b)) = (h.rfind(open), h.rfind(close)) {
            if a < b {
                return Some(h[a + 1..b].trim().to_string());
            }
        }
    }
    h.rsplit_once('_').map(|(_, u)| u.to_string())
}

fn canonical_unit(u: &str) -> String {
    match u.to_ascii_lowercase().as_str() {
        "hz" => "Hz".into(),
        "khz" => "kHz".into(),
        "mhz" => "MHz".into(),
        "ghz" => "GHz".into(),
        "thz" => "THz".into(),
        "k" => "K".into(),
        "mk" => "mK".into(),
        "db" => "dB".into(),
        _ => u.to_string(),
    }
}

/// Scale converting values in the header's unit to `expected`.
fn column_scale(header: &str, expected: &str) -> Result<f64> {
    let unit = header_unit(header)
        .ok_or_else(|| Error::InvalidInput(format!("column `{header}` does not name a unit (expected {expected})")))?;
    parse_quantity(&format!("1 {}", canonical_unit(&unit)), expected)
        .map_err(|e| Error::InvalidInput(format!("column `{header}`: {e}")))
}

/// Parses trace text. The x column is converted to `x_unit`; the y column
/// must be in `y_unit` (`None` for dimensionless data, no unit needed).
pub fn parse_trace(text: &str, x_unit: &str, y_unit: Option<&str>) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 {
        return Err(Error::InvalidInput(format!("expected two columns, found {}", headers.len())));
    }
    let sx = column_scale(&headers[0], x_unit)?;
    let sy = match y_unit {
        Some(u) => column_scale(&headers[1], u)?,
        None => 1.0,
    };
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let num = |j: usize| -> Result<f64> {
            record[j]
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("row {}: `{}` is not a number", i + 1, &record[j])))
        };
        out.push((num(0)? * sx, num(1)? * sy));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("trace has no data rows".into()));
    }
    Ok(out)
}

pub fn read_trace(path: &Path, x_unit: &str, y_unit: Option<&str>) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text, x_unit, y_unit).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })
}
