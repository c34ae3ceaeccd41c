//! Design-space sweeps: efficiency vs length, response vs index mismatch and
//! the normal-metal Vπ/bandwidth trade-off.
//!
//! Rows are produced lazily and handed to a caller-supplied sink in grid
//! order, so memory use does not grow with the grid.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{microwave_index, ohmic_tradeoff_bandwidth, Device, OperatingPoint};
use crate::error::{Error, Result};
use crate::response::{bandwidth_3db, response_curve, Bandwidth};
use crate::transfer::{length_dependent_efficiency, optimal_length, EfficiencyInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ArmLength,
    AlphaOpt,
    DeltaN,
    AlphaMCoef,
    Frequency,
    VPi,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 6] = [
        SweepParameter::ArmLength,
        SweepParameter::AlphaOpt,
        SweepParameter::DeltaN,
        SweepParameter::AlphaMCoef,
        SweepParameter::Frequency,
        SweepParameter::VPi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::ArmLength => "arm_length",
            SweepParameter::AlphaOpt => "alpha_opt",
            SweepParameter::DeltaN => "delta_n",
            SweepParameter::AlphaMCoef => "alpha_m_coef",
            SweepParameter::Frequency => "frequency",
            SweepParameter::VPi => "v_pi",
        }
    }

    /// Internal unit of the parameter's grid values.
    pub fn si_unit(self) -> &'static str {
        match self {
            SweepParameter::ArmLength => "m",
            SweepParameter::AlphaOpt => "dB/m",
            SweepParameter::DeltaN => "",
            SweepParameter::AlphaMCoef => "dB/m/GHz",
            SweepParameter::Frequency => "Hz",
            SweepParameter::VPi => "V",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::InvalidInput(format!(
                    "unknown sweep parameter `{name}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    /// Unit the grid was written in (for provenance); values are SI.
    pub unit: String,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepContext {
    pub device: Device,
    pub operating: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub context: SweepContext,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.context.device.validate()?;
        self.context.operating.validate()?;
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.grid.is_empty() {
                return Err(Error::InvalidInput(format!("axis `{}` has an empty grid", axis.parameter.name())));
            }
            let increasing = axis.grid.windows(2).all(|w| w[1] > w[0]);
            let decreasing = axis.grid.windows(2).all(|w| w[1] < w[0]);
            if !(increasing || decreasing) || axis.grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "axis `{}` grid must be finite and strictly monotone",
                    axis.parameter.name()
                )));
            }
            if self.axes[..i].iter().any(|a| a.parameter == axis.parameter) {
                return Err(Error::InvalidInput(format!("axis `{}` given twice", axis.parameter.name())));
            }
        }
        Ok(())
    }

    pub fn axis(&self, parameter: SweepParameter) -> Option<&SweepAxis> {
        self.axes.iter().find(|a| a.parameter == parameter)
    }

    /// SHA-256 over the canonical JSON form of the spec.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("sweep spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn only(&self, allowed: &[SweepParameter], kind: &str) -> Result<()> {
        match self.axes.iter().find(|a| !allowed.contains(&a.parameter)) {
            Some(a) => Err(Error::InvalidInput(format!(
                "parameter `{}` cannot be swept in {kind}",
                a.parameter.name()
            ))),
            None => Ok(()),
        }
    }
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn logspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let (a, b) = (start.log10(), stop.log10());
    linspace(a, b, n).into_iter().map(|e| 10f64.powf(e)).collect()
}

/// Modulation lengths 1 cm .. 10 m, log spaced.
pub fn default_length_grid() -> Vec<f64> {
    logspace(0.01, 10.0, 301)
}

/// Frequencies 0.1 .. 100 GHz.
pub fn default_frequency_grid() -> Vec<f64> {
    linspace(0.1e9, 100e9, 1000)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    /// dB/m
    pub alpha_opt: f64,
    pub length: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPeak {
    /// dB/m
    pub alpha_opt: f64,
    pub grid_argmax_length: f64,
    pub grid_max_eta: f64,
    /// Closed-form optimum `2/α`; `None` for a lossless waveguide.
    pub optimal_length: Option<f64>,
    pub optimal_eta: Option<f64>,
}

/// Efficiency inputs for a sweep context. The line is assumed matched to the
/// design impedance, so `z_term` is used as Z0.
pub fn efficiency_inputs(ctx: &SweepContext) -> EfficiencyInputs {
    EfficiencyInputs {
        p_opt: ctx.operating.p_opt_in,
        vpi_l: ctx.device.design.vpi_l,
        alpha_opt: ctx.device.waveguide.alpha_opt,
        z0: ctx.device.design.z_term,
        f_mod: ctx.operating.f_mod,
        wavelength: ctx.device.waveguide.wavelength,
    }
}

/// Rows `(α_o, L, η)` with α outer and L inner; returns per-α peaks.
pub fn efficiency_vs_length<S>(spec: &SweepSpec, mut sink: S) -> Result<Vec<EfficiencyPeak>>
where
    S: FnMut(&EfficiencyRow) -> Result<()>,
{
    spec.validate()?;
    spec.only(&[SweepParameter::ArmLength, SweepParameter::AlphaOpt], "efficiency_vs_length")?;
    let base = efficiency_inputs(&spec.context);
    base.validate()?;
    let lengths = spec
        .axis(SweepParameter::ArmLength)
        .map(|a| a.grid.clone())
        .unwrap_or_else(default_length_grid);
    if lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("lengths must be > 0".into()));
    }
    let alphas = spec
        .axis(SweepParameter::AlphaOpt)
        .map(|a| a.grid.clone())
        .unwrap_or_else(|| vec![base.alpha_opt]);

    let mut peaks = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        if !(alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("alpha_opt must be >= 0, got {alpha}")));
        }
        let inputs = EfficiencyInputs { alpha_opt: alpha, ..base };
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for &length in &lengths {
            let eta = length_dependent_efficiency(&inputs, length);
            if eta > best.1 {
                best = (length, eta);
            }
            sink(&EfficiencyRow { alpha_opt: alpha, length, eta })?;
        }
        let optimal = optimal_length(alpha).ok();
        peaks.push(EfficiencyPeak {
            alpha_opt: alpha,
            grid_argmax_length: best.0,
            grid_max_eta: best.1,
            optimal_length: optimal,
            optimal_eta: optimal.map(|l| length_dependent_efficiency(&inputs, l)),
        });
    }
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub delta_n: f64,
    /// dB/m/GHz
    pub alpha_m_coef: f64,
    pub freq: f64,
    pub response_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthEntry {
    pub delta_n: f64,
    pub alpha_m_coef: f64,
    pub bandwidth: Bandwidth,
}

/// Rows `(δn, α_m, f, response)` at the design length, δn outermost.
///
/// Without a δn axis the device mismatch at the operating temperature is used;
/// without an α_m axis the line's own loss slope is used.
pub fn response_vs_mismatch<S>(spec: &SweepSpec, mut sink: S) -> Result<Vec<BandwidthEntry>>
where
    S: FnMut(&ResponseRow) -> Result<()>,
{
    spec.validate()?;
    spec.only(
        &[SweepParameter::DeltaN, SweepParameter::AlphaMCoef, SweepParameter::Frequency],
        "response_vs_mismatch",
    )?;
    let device = &spec.context.device;
    let freqs = spec
        .axis(SweepParameter::Frequency)
        .map(|a| a.grid.clone())
        .unwrap_or_else(default_frequency_grid);
    let deltas = match spec.axis(SweepParameter::DeltaN) {
        Some(a) => a.grid.clone(),
        None => vec![microwave_index(&device.line, spec.context.operating.temperature)? - device.waveguide.n_g_opt],
    };
    let coefs = spec
        .axis(SweepParameter::AlphaMCoef)
        .map(|a| a.grid.clone())
        .unwrap_or_else(|| vec![device.line.alpha_m_coef]);

    let mut bandwidths = Vec::with_capacity(deltas.len() * coefs.len());
    for &delta_n in &deltas {
        for &coef in &coefs {
            if !(coef >= 0.0) {
                return Err(Error::InvalidInput(format!("alpha_m_coef must be >= 0, got {coef}")));
            }
            let curve = response_curve(delta_n, device.design.arm_length, |f| coef * f / 1e9, &freqs)?;
            for (&freq, &response_db) in curve.freqs.iter().zip(&curve.response_db) {
                sink(&ResponseRow { delta_n, alpha_m_coef: coef, freq, response_db })?;
            }
            bandwidths.push(BandwidthEntry {
                delta_n,
                alpha_m_coef: coef,
                bandwidth: bandwidth_3db(&curve),
            });
        }
    }
    Ok(bandwidths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub v_pi: f64,
    pub f_3db: f64,
}

/// Normal-metal boundary `f_3dB = 20 GHz (Vπ/V)²` over a Vπ grid.
pub fn tradeoff_overlay(v_pi_grid: &[f64]) -> Result<Vec<TradeoffRow>> {
    if v_pi_grid.is_empty() {
        return Err(Error::InvalidInput("Vπ grid is empty".into()));
    }
    v_pi_grid
        .iter()
        .map(|&v_pi| Ok(TradeoffRow { v_pi, f_3db: ohmic_tradeoff_bandwidth(v_pi)? }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{ModulatorDesign, OpticalWaveguide, SuperconductingLine};

    fn context() -> SweepContext {
        SweepContext {
            device: Device {
                line: SuperconductingLine::new(0.74e-10, 6.2e-7, 1.2e-7, 8.0, 0.1, 0.0).unwrap(),
                waveguide: OpticalWaveguide::new(2.28, 80.0, 1550e-9).unwrap(),
                design: ModulatorDesign::new(0.5, 0.038, 50.0).unwrap(),
            },
            operating: OperatingPoint {
                temperature: 4.0,
                p_opt_in: 0.01,
                bias_phase: 0.0,
                v_pp: 0.0,
                bit_rate: 1e9,
                f_mod: 10e9,
            },
        }
    }

    fn axis(parameter: SweepParameter, grid: Vec<f64>) -> SweepAxis {
        SweepAxis { parameter, unit: parameter.si_unit().into(), grid }
    }

    #[test]
    fn efficiency_family_peaks() {
        let spec = SweepSpec {
            axes: vec![
                axis(SweepParameter::AlphaOpt, vec![80.0, 20.0, 5.0]),
                axis(SweepParameter::ArmLength, logspace(0.01, 10.0, 2001)),
            ],
            context: context(),
            outputs: vec![],
        };
        let mut rows = Vec::new();
        let peaks = efficiency_vs_length(&spec, |r| {
            rows.push(*r);
            Ok(())
        })
        .unwrap();
        assert_eq!(rows.len(), 3 * 2001);
        let p08 = peaks[0];
        assert!((p08.optimal_eta.unwrap() / 1.4e-4 - 1.0).abs() < 0.1);
        for p in &peaks {
            let l_star = optimal_length(p.alpha_opt).unwrap();
            assert_eq!(p.optimal_length, Some(l_star));
            // grid resolution in log space
            assert!((p.grid_argmax_length / l_star).ln().abs() < 3.0 * (1000f64).ln() / 2000.0);
            // independent scan of the emitted rows
            let scan = rows
                .iter()
                .filter(|r| r.alpha_opt == p.alpha_opt)
                .fold((0.0, f64::MIN), |acc, r| if r.eta > acc.1 { (r.length, r.eta) } else { acc });
            assert_eq!(scan, (p.grid_argmax_length, p.grid_max_eta));
        }
        assert!(peaks[2].optimal_eta.unwrap() > 1e-2);
    }

    #[test]
    fn response_sweep_rows_and_bandwidths() {
        let spec = SweepSpec {
            axes: vec![
                axis(SweepParameter::DeltaN, vec![0.0, 0.005, 0.01, 0.02]),
                axis(SweepParameter::AlphaMCoef, vec![0.1, 0.2]),
                axis(SweepParameter::Frequency, linspace(0.1e9, 100e9, 500)),
            ],
            context: context(),
            outputs: vec![],
        };
        let mut n = 0;
        let bws = response_vs_mismatch(&spec, |_| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(n, 4 * 2 * 500);
        assert_eq!(bws.len(), 8);
        for coef in [0.1, 0.2] {
            let series: Vec<f64> = bws
                .iter()
                .filter(|b| b.alpha_m_coef == coef)
                .map(|b| b.bandwidth.hz().unwrap_or(f64::INFINITY))
                .collect();
            assert!(series.windows(2).all(|w| w[1] <= w[0]), "{series:?}");
        }
        let bw = bws
            .iter()
            .find(|b| b.delta_n == 0.01 && b.alpha_m_coef == 0.1)
            .unwrap()
            .bandwidth
            .hz()
            .unwrap();
        assert!(bw > 15e9 && bw < 30e9, "bw = {bw}");
    }

    #[test]
    fn matched_response_limited_by_loss_only() {
        let mut spec = SweepSpec {
            axes: vec![
                axis(SweepParameter::DeltaN, vec![0.0]),
                axis(SweepParameter::AlphaMCoef, vec![0.2]),
                axis(SweepParameter::Frequency, linspace(0.1e9, 300e9, 3000)),
            ],
            context: context(),
            outputs: vec![],
        };
        let lossy = response_vs_mismatch(&spec, |_| Ok(())).unwrap()[0].bandwidth;
        assert!(lossy.hz().is_some());
        spec.axes[1].grid = vec![0.0];
        let lossless = response_vs_mismatch(&spec, |_| Ok(())).unwrap()[0].bandwidth;
        assert_eq!(lossless, Bandwidth::BeyondGrid);
    }

    #[test]
    fn tradeoff_rows() {
        let rows = tradeoff_overlay(&[1.0]).unwrap();
        assert_eq!(rows, vec![TradeoffRow { v_pi: 1.0, f_3db: 20e9 }]);
        let r = tradeoff_overlay(&[0.042]).unwrap();
        assert!((r[0].f_3db - 35.28e6).abs() < 1.0);
        assert!(tradeoff_overlay(&[]).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec {
            axes: vec![axis(SweepParameter::ArmLength, vec![0.1, 0.1])],
            context: context(),
            outputs: vec![],
        };
        assert!(spec.validate().is_err());
        spec.axes[0].grid = vec![];
        assert!(spec.validate().is_err());
        spec.axes[0].grid = vec![0.3, 0.2, 0.1];
        assert!(spec.validate().is_ok());
        spec.axes.push(axis(SweepParameter::DeltaN, vec![0.1]));
        assert!(efficiency_vs_length(&spec, |_| Ok(())).is_err());
        assert!(SweepParameter::from_name("bogus").is_err());
        assert_eq!(SweepParameter::from_name("delta_n").unwrap(), SweepParameter::DeltaN);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let spec = SweepSpec {
            axes: vec![axis(SweepParameter::ArmLength, vec![0.1, 0.2])],
            context: context(),
            outputs: vec![],
        };
        assert_eq!(spec.hash(), spec.clone().hash());
        let mut other = spec.clone();
        other.axes[0].grid[1] = 0.3;
        assert_ne!(spec.hash(), other.hash());
    }
}
