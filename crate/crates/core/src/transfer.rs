//! Electro-optic coupling, transduction efficiency and energy accounting.
//!
//! Two equivalent routes to the out-of-chip microwave-to-optical efficiency
//! are provided: one through the traveling-wave coupling strength `g0` and
//! the pump amplitude, the other through Vπ directly. They agree identically
//! because `g0` is itself expressed through VπL.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{db_to_np, HBAR};
use crate::device::{
    char_impedance, microwave_velocity, ModulatorDesign, OperatingPoint, OpticalWaveguide,
    SuperconductingLine,
};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    /// Out-of-chip power transduction efficiency at the design length.
    pub eta: f64,
    /// Length maximizing efficiency for the waveguide loss (m).
    pub optimal_length: f64,
    /// Vπ at the design length (V).
    pub vpi_effective: f64,
}

/// Half-wave voltage of one arm: `VπL / L`.
pub fn vpi_from_length(design: &ModulatorDesign) -> f64 {
    design.vpi_l / design.arm_length
}

/// Traveling-wave vacuum coupling strength `g0` expressed through VπL.
///
/// `g0 = π v_o sqrt(ħ Ω v_m Z0) / (sqrt(2) VπL)`, with the line's own
/// velocity and impedance at temperature `t`.
pub fn g0_from_vpil(
    design: &ModulatorDesign,
    wg: &OpticalWaveguide,
    line: &SuperconductingLine,
    f_mod: f64,
    t: f64,
) -> Result<f64> {
    let v_o = wg.group_velocity();
    let v_m = microwave_velocity(line, t)?;
    let z0 = char_impedance(line, t)?;
    let omega = 2.0 * PI * f_mod;
    Ok(PI * v_o * (HBAR * omega * v_m * z0).sqrt() / (2f64.sqrt() * design.vpi_l))
}

/// Efficiency from the coupling strength: `(g0 P0)^2 / (v_o v_m) e^{-α_o L} L^2`
/// where `P0^2 = P_opt / (v_o ħ ω)` is the pump photon linear density.
///
/// `alpha_opt_np` is the optical power loss in Np/m.
pub fn efficiency_from_g0(
    g0: f64,
    p_opt: f64,
    wg: &OpticalWaveguide,
    v_m: f64,
    length: f64,
    alpha_opt_np: f64,
) -> f64 {
    let v_o = wg.group_velocity();
    let pump_density = p_opt / (v_o * HBAR * wg.angular_frequency());
    g0 * g0 * pump_density / (v_o * v_m) * (-alpha_opt_np * length).exp() * length * length
}

fn efficiency_prefactor(p_opt: f64, f_mod: f64, wavelength: f64, z0: f64) -> f64 {
    let omega_ratio = f_mod * wavelength / crate::constants::C0;
    p_opt * (PI * PI / 2.0) * omega_ratio * z0
}

/// Short-length, lossless efficiency `P (π²/2)(Ω/ω) Z0 / Vπ²`.
///
/// Z0 is the line impedance at the operating temperature. Results above unity
/// are outside the linearized model and are capped at 1 with a warning.
pub fn small_signal_efficiency(
    op: &OperatingPoint,
    design: &ModulatorDesign,
    wg: &OpticalWaveguide,
    line: &SuperconductingLine,
) -> Result<f64> {
    let vpi = vpi_from_length(design);
    let z0 = char_impedance(line, op.temperature)?;
    let eta = efficiency_prefactor(op.p_opt_in, op.f_mod, wg.wavelength, z0) / (vpi * vpi);
    Ok(cap_unity(eta))
}

fn cap_unity(eta: f64) -> f64 {
    if eta > 1.0 {
        log::warn!("small-signal efficiency {eta:.3} exceeds unity; capping at 1");
        1.0
    } else {
        eta
    }
}

/// Arguments of the length-dependent efficiency, all SI (loss in dB/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyInputs {
    /// Optical input power (W).
    pub p_opt: f64,
    /// Voltage-length product (V·m).
    pub vpi_l: f64,
    /// Optical power loss (dB/m).
    pub alpha_opt: f64,
    /// Line impedance (Ω).
    pub z0: f64,
    /// Microwave frequency (Hz).
    pub f_mod: f64,
    /// Optical wavelength (m).
    pub wavelength: f64,
}

impl EfficiencyInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_opt", self.p_opt),
            ("vpi_l", self.vpi_l),
            ("z0", self.z0),
            ("f_mod", self.f_mod),
            ("wavelength", self.wavelength),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.alpha_opt >= 0.0) {
            return Err(invalid("alpha_opt", "must be >= 0"));
        }
        Ok(())
    }
}

/// `η(L) = P (π²/2)(Ω/ω) Z0/(VπL)² · e^{-α_o L} · L²`.
pub fn length_dependent_efficiency(inputs: &EfficiencyInputs, length: f64) -> f64 {
    let alpha = db_to_np(inputs.alpha_opt);
    let eta = efficiency_prefactor(inputs.p_opt, inputs.f_mod, inputs.wavelength, inputs.z0)
        / (inputs.vpi_l * inputs.vpi_l)
        * (-alpha * length).exp()
        * length
        * length;
    cap_unity(eta)
}

/// Length maximizing `L² e^{-α L}`: `2 / α` with α in Np/m.
pub fn optimal_length(alpha_opt_db_per_m: f64) -> Result<f64> {
    if alpha_opt_db_per_m == 0.0 {
        return Err(Error::NoInteriorOptimum);
    }
    if !(alpha_opt_db_per_m > 0.0 && alpha_opt_db_per_m.is_finite()) {
        return Err(invalid("alpha_opt", format!("must be > 0, got {alpha_opt_db_per_m}")));
    }
    Ok(2.0 / db_to_np(alpha_opt_db_per_m))
}

/// Applies a link insertion loss (dB) to an out-of-chip efficiency.
pub fn with_insertion_loss(eta: f64, insertion_loss_db: f64) -> f64 {
    eta * 10f64.powf(-insertion_loss_db / 10.0)
}

/// Dissipated drive energy per bit, `(V_pp/2)² / Z0 / bit_rate` (J).
pub fn energy_per_bit(v_pp: f64, z0: f64, bit_rate: f64) -> Result<f64> {
    if !(z0 > 0.0) {
        return Err(invalid("z0", "must be > 0"));
    }
    if !(bit_rate > 0.0) {
        return Err(invalid("bit_rate", "must be > 0"));
    }
    if !(v_pp >= 0.0) {
        return Err(invalid("v_pp", "must be >= 0"));
    }
    let amplitude = v_pp / 2.0;
    Ok(amplitude * amplitude / z0 / bit_rate)
}

/// Efficiency summary at the design length of a device.
pub fn evaluate_design(
    op: &OperatingPoint,
    design: &ModulatorDesign,
    wg: &OpticalWaveguide,
    z0: f64,
) -> Result<EfficiencyResult> {
    let inputs = EfficiencyInputs {
        p_opt: op.p_opt_in,
        vpi_l: design.vpi_l,
        alpha_opt: wg.alpha_opt,
        z0,
        f_mod: op.f_mod,
        wavelength: wg.wavelength,
    };
    inputs.validate()?;
    Ok(EfficiencyResult {
        eta: length_dependent_efficiency(&inputs, design.arm_length),
        optimal_length: optimal_length(wg.alpha_opt)?,
        vpi_effective: vpi_from_length(design),
    })
}
