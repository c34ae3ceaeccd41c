//! TOML configuration ingestion.
//!
//! Dimensioned quantities are strings carrying a unit suffix
//! (`cap_per_len = "0.74 pF/cm"`); they are converted to SI on load. Bare
//! numbers are accepted only for dimensionless values. Every diagnostic names
//! the offending section and key and, where possible, the source line.
//!
//! Grids are written either as an array of quantities or as an inline table
//! `{ start = "0.1 GHz", stop = "100 GHz", points = 1000, spacing = "linear" }`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::device::{ModulatorDesign, OperatingPoint, OpticalWaveguide, SuperconductingLine, Device};
use crate::error::{Error, Result};
use crate::sweep::{self, SweepAxis, SweepContext, SweepParameter, SweepSpec};
use crate::transfer::vpi_from_length;
use crate::units::parse_quantity;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseSettings {
    pub temperatures: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Fixed index mismatch overriding the device model.
    pub delta_n: Option<f64>,
    /// Measured `(T, n_m)` used instead of the kinetic-inductance model.
    pub measured_index: Option<Vec<(f64, f64)>>,
    /// Above this frequency the microwave phase index is taken equal to the
    /// group index; below it the same value is used, less accurately.
    pub dispersion_crossover: f64,
}

impl ResponseSettings {
    /// Microwave index and mismatch `n_m − n_o` at temperature `t`.
    ///
    /// A fixed `delta_n` wins, then the measured table (linear interpolation,
    /// no extrapolation), then the kinetic-inductance model.
    pub fn index_mismatch(&self, device: &Device, t: f64) -> Result<(f64, f64)> {
        let n_o = device.waveguide.n_g_opt;
        if let Some(dn) = self.delta_n {
            return Ok((n_o + dn, dn));
        }
        let n_m = match &self.measured_index {
            Some(table) => {
                let (lo, hi) = (table[0].0, table[table.len() - 1].0);
                if t < lo || t > hi {
                    return Err(Error::InvalidInput(format!(
                        "temperature {t} K outside measured_index range [{lo}, {hi}] K"
                    )));
                }
                crate::device::interpolate_clamped(table, t)
            }
            None => crate::device::microwave_index(&device.line, t)?,
        };
        Ok((n_m, n_m - n_o))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencySettings {
    /// Optical loss family, dB/m.
    pub alpha_family: Vec<f64>,
    pub lengths: Vec<f64>,
    pub z0: f64,
    pub insertion_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EyeSettings {
    pub n_bits: usize,
    pub p_peak: f64,
    pub v_pi: f64,
    pub optimize_bias: bool,
    pub snr_penalty_db: f64,
    pub bias_offset: f64,
    pub keep_samples: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexFitSettings {
    pub samples: PathBuf,
    pub t_c: f64,
    pub initial_a: Option<f64>,
    pub initial_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossFitSettings {
    pub s21: PathBuf,
    pub line_length: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpticalFitSettings {
    pub data: PathBuf,
    pub temperature: f64,
    pub n_o_guess: f64,
    /// Known microwave index; defaults to the device model at `temperature`.
    pub microwave_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSettings {
    pub index: Option<IndexFitSettings>,
    pub loss: Option<LossFitSettings>,
    pub optical: Option<OpticalFitSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    EfficiencyVsLength,
    ResponseVsMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub kind: SweepKind,
    pub spec: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffSettings {
    pub v_pi: Vec<f64>,
}

/// A fully resolved configuration, all values SI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub line: Option<SuperconductingLine>,
    pub waveguide: Option<OpticalWaveguide>,
    pub design: Option<ModulatorDesign>,
    pub operating: Option<OperatingPoint>,
    pub response: Option<ResponseSettings>,
    pub efficiency: Option<EfficiencySettings>,
    pub eye: Option<EyeSettings>,
    pub fit: Option<FitSettings>,
    pub sweep: Option<SweepSettings>,
    pub tradeoff: Option<TradeoffSettings>,
    /// Directory that relative trace paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const SECTIONS: &[&str] = &[
    "line", "waveguide", "design", "operating", "response", "efficiency", "eye", "fit", "sweep", "tradeoff",
];

fn missing_section(name: &str) -> Error {
    Error::Config { line: None, message: format!("missing section [{name}]") }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let loc = Locator::new(text);
        for key in root.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line: loc.header(key, 0).or_else(|| loc.key("", 0, key)),
                    message: format!("unknown section [{key}]"),
                });
            }
        }
        let section = |name: &'static str| -> Result<Option<&Table>> {
            match root.get(name) {
                None => Ok(None),
                Some(Value::Table(t)) => Ok(Some(t)),
                Some(_) => Err(Error::Config { line: loc.key("", 0, name), message: format!("`{name}` must be a section") }),
            }
        };

        let line = section("line")?.map(|t| parse_line(&Section::new(&loc, "line", 0, t, LINE_KEYS)?)).transpose()?;
        let waveguide = section("waveguide")?
            .map(|t| parse_waveguide(&Section::new(&loc, "waveguide", 0, t, WAVEGUIDE_KEYS)?))
            .transpose()?;
        let design = section("design")?.map(|t| parse_design(&Section::new(&loc, "design", 0, t, DESIGN_KEYS)?)).transpose()?;
        let operating = section("operating")?
            .map(|t| parse_operating(&Section::new(&loc, "operating", 0, t, OPERATING_KEYS)?))
            .transpose()?;

        let mut cfg = Config {
            line,
            waveguide,
            design,
            operating,
            response: None,
            efficiency: None,
            eye: None,
            fit: None,
            sweep: None,
            tradeoff: None,
            base_dir: PathBuf::new(),
        };
        if let Some(t) = section("response")? {
            cfg.response = Some(parse_response(&Section::new(&loc, "response", 0, t, RESPONSE_KEYS)?)?);
        }
        if let Some(t) = section("efficiency")? {
            let s = Section::new(&loc, "efficiency", 0, t, EFFICIENCY_KEYS)?;
            cfg.efficiency = Some(parse_efficiency(&s, &cfg)?);
        }
        if let Some(t) = section("eye")? {
            let s = Section::new(&loc, "eye", 0, t, EYE_KEYS)?;
            cfg.eye = Some(parse_eye(&s, &cfg)?);
        }
        if let Some(t) = section("fit")? {
            let s = Section::new(&loc, "fit", 0, t, FIT_KEYS)?;
            cfg.fit = Some(parse_fit(&s, &cfg)?);
        }
        if let Some(t) = section("sweep")? {
            let s = Section::new(&loc, "sweep", 0, t, SWEEP_KEYS)?;
            cfg.sweep = Some(parse_sweep(&s, &cfg)?);
        }
        if let Some(t) = section("tradeoff")? {
            let s = Section::new(&loc, "tradeoff", 0, t, TRADEOFF_KEYS)?;
            let v_pi = s.grid("v_pi", "V")?.unwrap_or_else(|| sweep::logspace(0.01, 10.0, 100));
            if v_pi.iter().any(|v| !(*v > 0.0)) {
                return Err(s.err(Some("v_pi"), "grid values must be > 0 V"));
            }
            cfg.tradeoff = Some(TradeoffSettings { v_pi });
        }
        Ok(cfg)
    }

    pub fn line(&self) -> Result<&SuperconductingLine> {
        self.line.as_ref().ok_or_else(|| missing_section("line"))
    }

    pub fn waveguide(&self) -> Result<&OpticalWaveguide> {
        self.waveguide.as_ref().ok_or_else(|| missing_section("waveguide"))
    }

    pub fn design(&self) -> Result<&ModulatorDesign> {
        self.design.as_ref().ok_or_else(|| missing_section("design"))
    }

    pub fn operating(&self) -> Result<&OperatingPoint> {
        self.operating.as_ref().ok_or_else(|| missing_section("operating"))
    }

    pub fn device(&self) -> Result<Device> {
        Ok(Device { line: self.line()?.clone(), waveguide: *self.waveguide()?, design: *self.design()? })
    }

    pub fn response(&self) -> Result<&ResponseSettings> {
        self.response.as_ref().ok_or_else(|| missing_section("response"))
    }

    pub fn efficiency(&self) -> Result<&EfficiencySettings> {
        self.efficiency.as_ref().ok_or_else(|| missing_section("efficiency"))
    }

    pub fn eye(&self) -> Result<&EyeSettings> {
        self.eye.as_ref().ok_or_else(|| missing_section("eye"))
    }

    pub fn fit(&self) -> Result<&FitSettings> {
        self.fit.as_ref().ok_or_else(|| missing_section("fit"))
    }

    pub fn sweep(&self) -> Result<&SweepSettings> {
        self.sweep.as_ref().ok_or_else(|| missing_section("sweep"))
    }

    pub fn tradeoff(&self) -> Result<&TradeoffSettings> {
        self.tradeoff.as_ref().ok_or_else(|| missing_section("tradeoff"))
    }

    /// Resolves a trace path relative to the config file's directory.
    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

const LINE_KEYS: &[&str] = &["cap_per_len", "l_geo", "l_kin0", "t_c", "alpha_m_coef", "r_normal", "loss_table"];
const WAVEGUIDE_KEYS: &[&str] = &["n_g_opt", "alpha_opt", "wavelength"];
const DESIGN_KEYS: &[&str] = &["arm_length", "vpi_l", "z_term"];
const OPERATING_KEYS: &[&str] = &["temperature", "p_opt_in", "bias_phase", "v_pp", "bit_rate", "f_mod"];
const RESPONSE_KEYS: &[&str] = &["temperatures", "frequencies", "delta_n", "measured_index", "dispersion_crossover"];
const EFFICIENCY_KEYS: &[&str] = &["alpha_family", "lengths", "z0", "insertion_loss"];
const EYE_KEYS: &[&str] = &["n_bits", "p_peak", "v_pi", "optimize_bias", "snr_penalty", "bias_offset", "samples"];
const FIT_KEYS: &[&str] = &["index", "loss", "optical"];
const FIT_INDEX_KEYS: &[&str] = &["samples", "t_c", "initial_a", "initial_b"];
const FIT_LOSS_KEYS: &[&str] = &["s21", "line_length", "window"];
const FIT_OPTICAL_KEYS: &[&str] = &["data", "temperature", "n_o_guess", "microwave_index"];
const SWEEP_KEYS: &[&str] = &["kind", "axis", "outputs"];
const AXIS_KEYS: &[&str] = &["parameter", "unit", "grid"];
const TRADEOFF_KEYS: &[&str] = &["v_pi"];

fn parse_line(s: &Section) -> Result<SuperconductingLine> {
    let line = SuperconductingLine::new(
        s.quantity("cap_per_len", "F/m")?,
        s.quantity("l_geo", "H/m")?,
        s.opt_quantity("l_kin0", "H/m")?.unwrap_or(0.0),
        s.quantity("t_c", "K")?,
        s.opt_quantity("alpha_m_coef", "dB/m/GHz")?.unwrap_or(0.0),
        s.opt_quantity("r_normal", "Ohm/m")?.unwrap_or(0.0),
    )
    .map_err(|e| s.wrap(None, e))?;
    match s.pairs("loss_table", "Hz", Some("dB/m"))? {
        Some(table) => line.with_loss_table(table).map_err(|e| s.wrap(Some("loss_table"), e)),
        None => Ok(line),
    }
}

fn parse_waveguide(s: &Section) -> Result<OpticalWaveguide> {
    OpticalWaveguide::new(
        s.number("n_g_opt")?,
        s.opt_quantity("alpha_opt", "dB/m")?.unwrap_or(0.0),
        s.quantity("wavelength", "m")?,
    )
    .map_err(|e| s.wrap(None, e))
}

fn parse_design(s: &Section) -> Result<ModulatorDesign> {
    ModulatorDesign::new(
        s.quantity("arm_length", "m")?,
        s.quantity("vpi_l", "V*m")?,
        s.opt_quantity("z_term", "Ohm")?.unwrap_or(50.0),
    )
    .map_err(|e| s.wrap(None, e))
}

fn parse_operating(s: &Section) -> Result<OperatingPoint> {
    let op = OperatingPoint {
        temperature: s.quantity("temperature", "K")?,
        p_opt_in: s.opt_quantity("p_opt_in", "W")?.unwrap_or(0.0),
        bias_phase: s.opt_quantity("bias_phase", "rad")?.unwrap_or(0.0),
        v_pp: s.opt_quantity("v_pp", "V")?.unwrap_or(0.0),
        bit_rate: s.opt_quantity("bit_rate", "bps")?.unwrap_or(1e9),
        f_mod: s.opt_quantity("f_mod", "Hz")?.unwrap_or(10e9),
    };
    op.validate().map_err(|e| s.wrap(None, e))?;
    Ok(op)
}

fn parse_response(s: &Section) -> Result<ResponseSettings> {
    let temperatures = s.grid("temperatures", "K")?.ok_or_else(|| s.missing("temperatures"))?;
    let frequencies = s.grid("frequencies", "Hz")?.unwrap_or_else(sweep::default_frequency_grid);
    if frequencies.windows(2).any(|w| w[1] <= w[0]) || frequencies.iter().any(|f| *f < 0.0) {
        return Err(s.err(Some("frequencies"), "grid must be nonnegative and strictly ascending"));
    }
    let measured_index = s.pairs("measured_index", "K", None)?;
    if let Some(m) = &measured_index {
        if m.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(s.err(Some("measured_index"), "temperatures must be strictly ascending"));
        }
    }
    Ok(ResponseSettings {
        temperatures,
        frequencies,
        delta_n: s.opt_number("delta_n")?,
        measured_index,
        dispersion_crossover: s.opt_quantity("dispersion_crossover", "Hz")?.unwrap_or(10e9),
    })
}

fn parse_efficiency(s: &Section, cfg: &Config) -> Result<EfficiencySettings> {
    let design = cfg.design().map_err(|e| s.wrap(None, e))?;
    let waveguide = cfg.waveguide().map_err(|e| s.wrap(None, e))?;
    let alpha_family = s.grid("alpha_family", "dB/m")?.unwrap_or_else(|| vec![waveguide.alpha_opt]);
    if alpha_family.iter().any(|a| !(*a >= 0.0)) {
        return Err(s.err(Some("alpha_family"), "losses must be >= 0"));
    }
    let lengths = s.grid("lengths", "m")?.unwrap_or_else(sweep::default_length_grid);
    if lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(s.err(Some("lengths"), "lengths must be > 0"));
    }
    Ok(EfficiencySettings {
        alpha_family,
        lengths,
        z0: s.opt_quantity("z0", "Ohm")?.unwrap_or(design.z_term),
        insertion_loss_db: s.opt_quantity("insertion_loss", "dB")?.unwrap_or(0.0),
    })
}

fn parse_eye(s: &Section, cfg: &Config) -> Result<EyeSettings> {
    let op = cfg.operating().map_err(|e| s.wrap(None, e))?;
    let v_pi = match s.opt_quantity("v_pi", "V")? {
        Some(v) => v,
        None => vpi_from_length(cfg.design().map_err(|e| s.wrap(Some("v_pi"), e))?),
    };
    Ok(EyeSettings {
        n_bits: s.opt_usize("n_bits")?.unwrap_or(100_000),
        p_peak: s.opt_quantity("p_peak", "W")?.unwrap_or(op.p_opt_in),
        v_pi,
        optimize_bias: s.opt_bool("optimize_bias")?.unwrap_or(false),
        snr_penalty_db: s.opt_quantity("snr_penalty", "dB")?.unwrap_or(0.0),
        bias_offset: s.opt_quantity("bias_offset", "rad")?.unwrap_or(0.0),
        keep_samples: s.opt_bool("samples")?.unwrap_or(false),
    })
}

fn parse_fit(s: &Section, cfg: &Config) -> Result<FitSettings> {
    let index = match s.sub_table("index", FIT_INDEX_KEYS)? {
        Some(sub) => {
            let t_c = match sub.opt_quantity("t_c", "K")? {
                Some(t) => t,
                None => cfg.line.as_ref().map(|l| l.t_c).ok_or_else(|| sub.missing("t_c"))?,
            };
            Some(IndexFitSettings {
                samples: sub.path("samples")?,
                t_c,
                initial_a: sub.opt_number("initial_a")?,
                initial_b: sub.opt_number("initial_b")?.unwrap_or(0.1),
            })
        }
        None => None,
    };
    let loss = match s.sub_table("loss", FIT_LOSS_KEYS)? {
        Some(sub) => Some(LossFitSettings {
            s21: sub.path("s21")?,
            line_length: sub.quantity("line_length", "m")?,
            window: sub.opt_usize("window")?.unwrap_or(crate::fitting::DEFAULT_ENVELOPE_WINDOW),
        }),
        None => None,
    };
    let optical = match s.sub_table("optical", FIT_OPTICAL_KEYS)? {
        Some(sub) => Some(OpticalFitSettings {
            data: sub.path("data")?,
            temperature: sub.quantity("temperature", "K")?,
            n_o_guess: sub.opt_number("n_o_guess")?.unwrap_or(2.25),
            microwave_index: sub.opt_number("microwave_index")?,
        }),
        None => None,
    };
    if index.is_none() && loss.is_none() && optical.is_none() {
        return Err(s.err(None, "expected at least one of [fit.index], [fit.loss], [fit.optical]"));
    }
    Ok(FitSettings { index, loss, optical })
}

fn parse_sweep(s: &Section, cfg: &Config) -> Result<SweepSettings> {
    let kind = match s.string("kind")?.as_str() {
        "efficiency_vs_length" => SweepKind::EfficiencyVsLength,
        "response_vs_mismatch" => SweepKind::ResponseVsMismatch,
        other => {
            return Err(s.err(
                Some("kind"),
                &format!("unknown sweep kind `{other}` (expected efficiency_vs_length or response_vs_mismatch)"),
            ))
        }
    };
    let context = SweepContext {
        device: cfg.device().map_err(|e| s.wrap(None, e))?,
        operating: *cfg.operating().map_err(|e| s.wrap(None, e))?,
    };
    let mut axes = Vec::new();
    if let Some(v) = s.table.get("axis") {
        let Value::Array(items) = v else {
            return Err(s.err(Some("axis"), "expected [[sweep.axis]] entries"));
        };
        for (i, item) in items.iter().enumerate() {
            let Value::Table(t) = item else {
                return Err(s.err(Some("axis"), "expected [[sweep.axis]] entries"));
            };
            let a = Section::new(s.loc, "sweep.axis", i, t, AXIS_KEYS)?;
            let parameter = SweepParameter::from_name(&a.string("parameter")?).map_err(|e| a.wrap(Some("parameter"), e))?;
            let unit = match a.opt_string("unit")? {
                Some(u) => u,
                None => parameter.si_unit().to_string(),
            };
            let grid = a
                .grid_in("grid", parameter.si_unit(), Some(&unit))?
                .ok_or_else(|| a.missing("grid"))?;
            axes.push(SweepAxis { parameter, unit, grid });
        }
    }
    let outputs = match s.table.get("outputs") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| s.err(Some("outputs"), "expected strings")))
            .collect::<Result<_>>()?,
        Some(_) => return Err(s.err(Some("outputs"), "expected an array of strings")),
    };
    let spec = SweepSpec { axes, context, outputs };
    spec.validate().map_err(|e| s.wrap(Some("axis"), e))?;
    Ok(SweepSettings { kind, spec })
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Maps section headers and keys back to 1-based source lines.
struct Locator {
    /// (line, header path, occurrence of that header, key if a key line)
    entries: Vec<(usize, String, usize, Option<String>)>,
}

impl Locator {
    fn new(text: &str) -> Self {
        let mut entries = Vec::new();
        let mut current = (String::new(), 0usize);
        let mut counts: std::collections::HashMap<String, usize> = Default::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                let name = line.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
                let n = counts.entry(name.clone()).or_insert(0);
                current = (name.clone(), *n);
                *n += 1;
                entries.push((i + 1, current.0.clone(), current.1, None));
            } else if let Some((key, _)) = line.split_once('=') {
                let key = key.trim().trim_matches('"').to_string();
                if !key.is_empty() && !key.starts_with('#') {
                    entries.push((i + 1, current.0.clone(), current.1, Some(key)));
                }
            }
        }
        Self { entries }
    }

    fn header(&self, path: &str, occurrence: usize) -> Option<usize> {
        self.entries
            .iter()
            .find(|(_, p, n, k)| k.is_none() && p == path && *n == occurrence)
            .map(|e| e.0)
    }

    fn key(&self, path: &str, occurrence: usize, key: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|(_, p, n, k)| p == path && *n == occurrence && k.as_deref() == Some(key))
            .map(|e| e.0)
            .or_else(|| {
                // dotted keys inside the parent section, e.g. `index.samples`
                let (parent, child) = path.rsplit_once('.')?;
                let dotted = format!("{child}.{key}");
                self.entries
                    .iter()
                    .find(|(_, p, _, k)| p == parent && k.as_deref() == Some(dotted.as_str()))
                    .map(|e| e.0)
            })
    }
}

struct Section<'a> {
    loc: &'a Locator,
    name: String,
    occurrence: usize,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(loc: &'a Locator, name: &str, occurrence: usize, table: &'a Table, allowed: &[&str]) -> Result<Self> {
        let s = Section { loc, name: name.to_string(), occurrence, table };
        if let Some(k) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(s.err(Some(k), &format!("unknown key `{k}` (allowed: {})", allowed.join(", "))));
        }
        Ok(s)
    }

    fn line(&self, key: Option<&str>) -> Option<usize> {
        let header = self.loc.header(&self.name, self.occurrence);
        match key {
            Some(k) => self.loc.key(&self.name, self.occurrence, k).or(header),
            None => header,
        }
    }

    fn err(&self, key: Option<&str>, message: &str) -> Error {
        let message = match key {
            Some(k) => format!("[{}] `{k}`: {message}", self.name),
            None => format!("[{}] {message}", self.name),
        };
        Error::Config { line: self.line(key), message }
    }

    fn wrap(&self, key: Option<&str>, e: Error) -> Error {
        match e {
            Error::Config { .. } => e,
            other => self.err(key, &other.to_string()),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config {
            line: self.line(None),
            message: format!("[{}] missing required key `{key}`", self.name),
        }
    }

    fn sub_table(&self, key: &str, allowed: &[&str]) -> Result<Option<Section<'a>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Section::new(self.loc, &format!("{}.{key}", self.name), 0, t, allowed).map(Some),
            Some(_) => Err(self.err(Some(key), "expected a table")),
        }
    }

    fn value_quantity(&self, key: &str, v: &Value, unit: &str, written_unit: Option<&str>) -> Result<f64> {
        let dimensionless = unit.is_empty();
        let x = match v {
            Value::String(text) if dimensionless => {
                text.trim().parse::<f64>().map_err(|_| self.err(Some(key), &format!("`{text}` is not a number")))?
            }
            Value::String(text) => parse_quantity(text, unit).map_err(|e| self.err(Some(key), &e.to_string()))?,
            Value::Integer(_) | Value::Float(_) => {
                let n = as_f64(v).expect("numeric");
                match written_unit {
                    _ if dimensionless => n,
                    Some(u) if !u.is_empty() => {
                        parse_quantity(&format!("{n} {u}"), unit).map_err(|e| self.err(Some(key), &e.to_string()))?
                    }
                    _ => {
                        return Err(self.err(
                            Some(key),
                            &format!("missing unit suffix: write a string such as \"{n} {unit}\""),
                        ))
                    }
                }
            }
            _ => return Err(self.err(Some(key), &format!("expected a quantity in {unit}"))),
        };
        if !x.is_finite() {
            return Err(self.err(Some(key), "value must be finite"));
        }
        Ok(x)
    }

    fn opt_quantity(&self, key: &str, unit: &str) -> Result<Option<f64>> {
        self.table.get(key).map(|v| self.value_quantity(key, v, unit, None)).transpose()
    }

    fn quantity(&self, key: &str, unit: &str) -> Result<f64> {
        self.opt_quantity(key, unit)?.ok_or_else(|| self.missing(key))
    }

    fn opt_number(&self, key: &str) -> Result<Option<f64>> {
        self.opt_quantity(key, "")
    }

    fn number(&self, key: &str) -> Result<f64> {
        self.quantity(key, "")
    }

    fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(n)) if *n >= 0 => Ok(Some(*n as usize)),
            Some(_) => Err(self.err(Some(key), "expected a nonnegative integer")),
        }
    }

    fn opt_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.err(Some(key), "expected true or false")),
        }
    }

    fn opt_string(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(Some(key), "expected a string")),
        }
    }

    fn string(&self, key: &str) -> Result<String> {
        self.opt_string(key)?.ok_or_else(|| self.missing(key))
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    fn grid(&self, key: &str, unit: &str) -> Result<Option<Vec<f64>>> {
        self.grid_in(key, unit, None)
    }

    /// Reads a grid in `unit`; `written_unit` lets bare numbers carry a unit.
    fn grid_in(&self, key: &str, unit: &str, written_unit: Option<&str>) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.table.get(key) else {
            return Ok(None);
        };
        let grid = match v {
            Value::Array(items) => items
                .iter()
                .map(|x| self.value_quantity(key, x, unit, written_unit))
                .collect::<Result<Vec<_>>>()?,
            Value::Table(t) => {
                for k in t.keys() {
                    if !["start", "stop", "points", "spacing"].contains(&k.as_str()) {
                        return Err(self.err(Some(key), &format!("unknown grid key `{k}` (allowed: start, stop, points, spacing)")));
                    }
                }
                let get = |k: &str| t.get(k).ok_or_else(|| self.err(Some(key), &format!("grid is missing `{k}`")));
                let start = self.value_quantity(key, get("start")?, unit, written_unit)?;
                let stop = self.value_quantity(key, get("stop")?, unit, written_unit)?;
                let points = match get("points")? {
                    Value::Integer(n) if *n >= 1 => *n as usize,
                    _ => return Err(self.err(Some(key), "`points` must be a positive integer")),
                };
                match t.get("spacing").map(|s| s.as_str()) {
                    None | Some(Some("linear")) => sweep::linspace(start, stop, points),
                    Some(Some("log")) => {
                        if !(start > 0.0 && stop > 0.0) {
                            return Err(self.err(Some(key), "log spacing needs positive bounds"));
                        }
                        sweep::logspace(start, stop, points)
                    }
                    _ => return Err(self.err(Some(key), "`spacing` must be \"linear\" or \"log\"")),
                }
            }
            _ => return Err(self.err(Some(key), "expected an array of quantities or a {start, stop, points} table")),
        };
        if grid.is_empty() {
            return Err(self.err(Some(key), "grid is empty"));
        }
        Ok(Some(grid))
    }

    /// Array of two-element arrays; `y_unit = None` means dimensionless.
    fn pairs(&self, key: &str, x_unit: &str, y_unit: Option<&str>) -> Result<Option<Vec<(f64, f64)>>> {
        let Some(v) = self.table.get(key) else {
            return Ok(None);
        };
        let Value::Array(items) = v else {
            return Err(self.err(Some(key), "expected an array of [x, y] pairs"));
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Array(p) if p.len() == 2 => out.push((
                    self.value_quantity(key, &p[0], x_unit, None)?,
                    self.value_quantity(key, &p[1], y_unit.unwrap_or(""), None)?,
                )),
                _ => return Err(self.err(Some(key), "expected an array of [x, y] pairs")),
            }
        }
        if out.is_empty() {
            return Err(self.err(Some(key), "table is empty"));
        }
        Ok(Some(out))
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(n) => Some(*n as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[line]
cap_per_len = "0.74 pF/cm"
l_geo = "6.2 nH/cm"
l_kin0 = "1.2 nH/cm"
t_c = "8 K"
alpha_m_coef = "0.1 dB/m/GHz"

[waveguide]
n_g_opt = 2.28
alpha_opt = "0.8 dB/cm"
wavelength = "1550 nm"

[design]
arm_length = "0.1 m"
vpi_l = "3.8 V*cm"
z_term = "50 Ohm"

[operating]
temperature = "4 K"
p_opt_in = "10 dBm"
f_mod = "10 GHz"
"#;

    fn line_containing(text: &str, needle: &str) -> usize {
        text.lines().position(|l| l.contains(needle)).unwrap() + 1
    }

    fn err_line(e: Error) -> (Option<usize>, String) {
        match e {
            Error::Config { line, message } => (line, message),
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn converts_units_to_si() {
        let cfg = Config::parse(BASE).unwrap();
        let line = cfg.line().unwrap();
        assert!((line.cap_per_len - 0.74e-10).abs() < 1e-22);
        assert!((line.l_kin0 - 1.2e-7).abs() < 1e-19);
        assert!((cfg.waveguide().unwrap().alpha_opt - 80.0).abs() < 1e-9);
        assert!((cfg.design().unwrap().vpi_l - 0.038).abs() < 1e-15);
        assert!((cfg.operating().unwrap().p_opt_in - 0.01).abs() < 1e-15);
        assert!(cfg.response.is_none());
    }

    #[test]
    fn missing_t_c_names_key_and_line() {
        let text = BASE.replace("t_c = \"8 K\"\n", "");
        let (line, msg) = err_line(Config::parse(&text).unwrap_err());
        assert!(msg.contains("t_c"), "{msg}");
        assert_eq!(line, Some(line_containing(&text, "[line]")));
    }

    #[test]
    fn bare_number_rejected_for_dimensioned_value() {
        let text = BASE.replace("\"8 K\"", "8.0");
        let (line, msg) = err_line(Config::parse(&text).unwrap_err());
        assert!(msg.contains("unit"), "{msg}");
        assert_eq!(line, Some(line_containing(&text, "t_c =")));
    }

    #[test]
    fn wrong_dimension_and_unknown_key() {
        let text = BASE.replace("\"1550 nm\"", "\"1550 Hz\"");
        let (line, msg) = err_line(Config::parse(&text).unwrap_err());
        assert!(msg.contains("wavelength"), "{msg}");
        assert_eq!(line, Some(line_containing(&text, "wavelength")));
        let (_, msg) = err_line(Config::parse(&BASE.replace("n_g_opt", "n_group")).unwrap_err());
        assert!(msg.contains("n_group"), "{msg}");
    }

    #[test]
    fn syntax_error_has_line() {
        let text = format!("{BASE}\n[eye\n");
        let (line, _) = err_line(Config::parse(&text).unwrap_err());
        assert!(line.unwrap() > 20);
    }

    #[test]
    fn grids_and_sections() {
        let text = format!(
            r#"{BASE}
[response]
temperatures = ["4 K", "5.6 K"]
frequencies = {{ start = "1 GHz", stop = "10 GHz", points = 10 }}
measured_index = [["4 K", 2.24], ["6 K", 2.27]]

[efficiency]
alpha_family = ["0.8 dB/cm", "0.2 dB/cm"]
lengths = {{ start = "1 cm", stop = "10 m", points = 31, spacing = "log" }}

[sweep]
kind = "response_vs_mismatch"
[[sweep.axis]]
parameter = "delta_n"
grid = [0.0, 0.01]
[[sweep.axis]]
parameter = "frequency"
unit = "GHz"
grid = [1, 2, 3]

[tradeoff]
v_pi = ["1 V"]
"#
        );
        let cfg = Config::parse(&text).unwrap();
        let r = cfg.response().unwrap();
        assert_eq!(r.temperatures, vec![4.0, 5.6]);
        assert_eq!(r.frequencies.len(), 10);
        assert!((r.frequencies[9] - 10e9).abs() < 1e-3);
        let e = cfg.efficiency().unwrap();
        assert_eq!(e.z0, 50.0);
        assert!((e.lengths[0] - 0.01).abs() < 1e-15 && (e.lengths[30] - 10.0).abs() < 1e-12);
        let s = cfg.sweep().unwrap();
        assert_eq!(s.kind, SweepKind::ResponseVsMismatch);
        assert_eq!(s.spec.axes[1].grid, vec![1e9, 2e9, 3e9]);
        assert_eq!(cfg.tradeoff().unwrap().v_pi, vec![1.0]);
    }

    #[test]
    fn bad_sweep_axis_reports_its_line() {
        let text = format!(
            "{BASE}\n[sweep]\nkind = \"efficiency_vs_length\"\n[[sweep.axis]]\nparameter = \"arm_length\"\ngrid = [\"1 m\"]\n[[sweep.axis]]\nparameter = \"wobble\"\ngrid = [1]\n"
        );
        let (line, msg) = err_line(Config::parse(&text).unwrap_err());
        assert!(msg.contains("wobble"), "{msg}");
        let wobble_line = text.lines().position(|l| l.contains("wobble")).unwrap() + 1;
        assert_eq!(line, Some(wobble_line));
    }

    #[test]
    fn fit_section_paths_and_defaults() {
        let text = format!(
            "{BASE}\n[fit.index]\nsamples = \"idx.csv\"\n[fit.loss]\ns21 = \"s21.csv\"\nline_length = \"0.1 m\"\n"
        );
        let cfg = Config::parse(&text).unwrap();
        let fit = cfg.fit().unwrap();
        assert_eq!(fit.index.as_ref().unwrap().t_c, 8.0);
        assert_eq!(fit.loss.as_ref().unwrap().window, 21);
        assert!(fit.optical.is_none());
        let missing = format!("{BASE}\n[fit.loss]\ns21 = \"s21.csv\"\n");
        let (_, msg) = err_line(Config::parse(&missing).unwrap_err());
        assert!(msg.contains("line_length"), "{msg}");
    }
}
