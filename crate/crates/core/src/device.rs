//! Device description and superconducting transmission-line physics.
//!
//! Line parameters are per unit length and supplied by the user; nothing here
//! solves for them electromagnetically. Kinetic inductance follows the
//! two-fluid temperature law `L_k(T) = L_k(0) / sqrt(1 - (T/Tc)^4)`.

use serde::{Deserialize, Serialize};

use crate::constants::C0;
use crate::error::{invalid, Error, Result};

/// Per-unit-length description of a superconducting coplanar line (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperconductingLine {
    /// Capacitance per unit length (F/m).
    pub cap_per_len: f64,
    /// Geometric inductance per unit length (H/m).
    pub l_geo: f64,
    /// Zero-temperature kinetic inductance per unit length (H/m).
    pub l_kin0: f64,
    /// Transition temperature (K).
    pub t_c: f64,
    /// Microwave loss slope (dB/m per GHz).
    pub alpha_m_coef: f64,
    /// Normal-state signal electrode resistance per unit length (Ω/m).
    pub r_normal: f64,
    /// Optional tabulated loss `(frequency Hz, dB/m)` overriding the linear law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_table: Option<Vec<(f64, f64)>>,
}

impl SuperconductingLine {
    pub fn new(
        cap_per_len: f64,
        l_geo: f64,
        l_kin0: f64,
        t_c: f64,
        alpha_m_coef: f64,
        r_normal: f64,
    ) -> Result<Self> {
        let line = Self {
            cap_per_len,
            l_geo,
            l_kin0,
            t_c,
            alpha_m_coef,
            r_normal,
            loss_table: None,
        };
        line.validate()?;
        Ok(line)
    }

    pub fn with_loss_table(mut self, table: Vec<(f64, f64)>) -> Result<Self> {
        if table.is_empty() {
            return Err(invalid("loss_table", "table is empty"));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("loss_table", "frequencies must be strictly ascending"));
        }
        if table.iter().any(|&(f, a)| !(f >= 0.0 && a >= 0.0 && a.is_finite())) {
            return Err(invalid("loss_table", "frequencies and losses must be non-negative"));
        }
        self.loss_table = Some(table);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        positive("cap_per_len", self.cap_per_len)?;
        positive("l_geo", self.l_geo)?;
        non_negative("l_kin0", self.l_kin0)?;
        positive("t_c", self.t_c)?;
        non_negative("alpha_m_coef", self.alpha_m_coef)?;
        non_negative("r_normal", self.r_normal)?;
        Ok(())
    }

    /// Total inductance per unit length at temperature `t`.
    pub fn total_inductance(&self, t: f64) -> Result<f64> {
        Ok(self.l_geo + kinetic_inductance(self, t)?)
    }
}

/// Optical waveguide parameters (SI units, loss in dB/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalWaveguide {
    /// Optical group index.
    pub n_g_opt: f64,
    /// Optical power propagation loss (dB/m).
    pub alpha_opt: f64,
    /// Vacuum carrier wavelength (m).
    pub wavelength: f64,
}

impl OpticalWaveguide {
    pub fn new(n_g_opt: f64, alpha_opt: f64, wavelength: f64) -> Result<Self> {
        let wg = Self {
            n_g_opt,
            alpha_opt,
            wavelength,
        };
        wg.validate()?;
        Ok(wg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_g_opt > 1.0 && self.n_g_opt.is_finite()) {
            return Err(invalid("n_g_opt", format!("must exceed 1, got {}", self.n_g_opt)));
        }
        non_negative("alpha_opt", self.alpha_opt)?;
        positive("wavelength", self.wavelength)
    }

    /// Optical group velocity (m/s).
    pub fn group_velocity(&self) -> f64 {
        C0 / self.n_g_opt
    }

    /// Optical carrier angular frequency (rad/s).
    pub fn angular_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * C0 / self.wavelength
    }
}

/// Modulator geometry and figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorDesign {
    /// Modulation length per MZI arm (m).
    pub arm_length: f64,
    /// Voltage-length product (V·m).
    pub vpi_l: f64,
    /// Termination impedance (Ω).
    pub z_term: f64,
}

impl ModulatorDesign {
    pub fn new(arm_length: f64, vpi_l: f64, z_term: f64) -> Result<Self> {
        let d = Self {
            arm_length,
            vpi_l,
            z_term,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        positive("arm_length", self.arm_length)?;
        positive("vpi_l", self.vpi_l)?;
        positive("z_term", self.z_term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Temperature (K).
    pub temperature: f64,
    /// Optical power entering the modulator (W).
    pub p_opt_in: f64,
    /// Static MZI phase difference (rad); zero is the transmission null.
    pub bias_phase: f64,
    /// Peak-to-peak drive voltage (V).
    pub v_pp: f64,
    /// Data rate (bit/s).
    pub bit_rate: f64,
    /// Analog microwave frequency (Hz).
    pub f_mod: f64,
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        non_negative("temperature", self.temperature)?;
        non_negative("p_opt_in", self.p_opt_in)?;
        non_negative("v_pp", self.v_pp)?;
        positive("bit_rate", self.bit_rate)?;
        non_negative("f_mod", self.f_mod)?;
        if !self.bias_phase.is_finite() {
            return Err(invalid("bias_phase", "must be finite"));
        }
        Ok(())
    }

    /// Microwave angular frequency Ω (rad/s).
    pub fn omega_mod(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_mod
    }
}

/// A complete modulator: line, waveguide and geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub line: SuperconductingLine,
    pub waveguide: OpticalWaveguide,
    pub design: ModulatorDesign,
}

impl Device {
    pub fn validate(&self) -> Result<()> {
        self.line.validate()?;
        self.waveguide.validate()?;
        self.design.validate()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be > 0, got {v}")))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be >= 0, got {v}")))
    }
}

/// Kinetic inductance per unit length at temperature `t` (H/m).
pub fn kinetic_inductance(line: &SuperconductingLine, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("temperature", format!("must be >= 0, got {t}")));
    }
    if t >= line.t_c {
        return Err(Error::NormalState {
            temperature: t,
            t_c: line.t_c,
        });
    }
    let x = (t / line.t_c).powi(4);
    Ok(line.l_kin0 / (1.0 - x).sqrt())
}

/// Microwave index `c0 * sqrt(L_total * C)` at temperature `t`.
///
/// The group index stands in for the phase index (dispersionless line).
pub fn microwave_index(line: &SuperconductingLine, t: f64) -> Result<f64> {
    Ok(C0 * (line.total_inductance(t)? * line.cap_per_len).sqrt())
}

/// Microwave phase velocity (m/s).
pub fn microwave_velocity(line: &SuperconductingLine, t: f64) -> Result<f64> {
    Ok(1.0 / (line.total_inductance(t)? * line.cap_per_len).sqrt())
}

/// Characteristic impedance `sqrt(L_total / C)` (Ω).
pub fn char_impedance(line: &SuperconductingLine, t: f64) -> Result<f64> {
    Ok((line.total_inductance(t)? / line.cap_per_len).sqrt())
}

/// Microwave power propagation loss at `f` (dB/m).
///
/// Linear in frequency unless the line carries a tabulated override, which is
/// interpolated linearly and held constant outside its range.
pub fn microwave_loss(line: &SuperconductingLine, f: f64) -> f64 {
    match &line.loss_table {
        Some(table) => interpolate_clamped(table, f),
        None => line.alpha_m_coef * (f / 1e9),
    }
}

pub(crate) fn interpolate_clamped(table: &[(f64, f64)], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let idx = table.partition_point(|&(tx, _)| tx <= x);
    let (x0, y0) = table[idx - 1];
    let (x1, y1) = table[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Lumped RC bandwidth `1 / (2π R C)` for a normal-metal electrode of the given
/// total length. Order-of-magnitude only; distributed effects are ignored.
pub fn normal_rc_bandwidth(line: &SuperconductingLine, total_length: f64) -> Result<f64> {
    if line.r_normal == 0.0 {
        return Err(Error::RcNotApplicable);
    }
    positive("total_length", total_length)?;
    let r = line.r_normal * total_length;
    let c = line.cap_per_len * total_length;
    Ok(1.0 / (2.0 * std::f64::consts::PI * r * c))
}

/// Bandwidth reachable by a normal-metal modulator at a given Vπ:
/// `f_3dB = 20 GHz * (Vπ / 1 V)^2`.
pub fn ohmic_tradeoff_bandwidth(v_pi: f64) -> Result<f64> {
    positive("v_pi", v_pi)?;
    Ok(20e9 * v_pi * v_pi)
}
