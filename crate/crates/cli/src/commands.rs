use std::io::{BufWriter, Write};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use seom_core::config::{Config, SweepKind};
use seom_core::device::{microwave_loss, OperatingPoint};
use seom_core::eye::{self, EyeResult, Impairments, MonteCarloConfig};
use seom_core::fitting::{self, FitResult, IndexFitOptions, OpticalIndexOptions};
use seom_core::response::{bandwidth_3db, response_curve, Bandwidth};
use seom_core::sweep::{self, SweepContext, SweepSpec};
use seom_core::transfer::{energy_per_bit, small_signal_efficiency, with_insertion_loss};
use seom_core::{trace, units};

use crate::output::{csv_header, csv_row, fmt_f64, RunManifest, Staged, MANIFEST_FILE, SCHEMA_VERSION};
use crate::plot::{line_chart, Axes, Series};
use crate::{ConfigError, EyeArgs, Format, Globals};

/// Loaded config plus global flags, and the manifest once outputs are known.
pub struct Run<'a> {
    pub cfg: Config,
    pub globals: &'a Globals,
    pub command: &'static str,
    pub seed: Option<u64>,
}

impl<'a> Run<'a> {
    fn csv(&self) -> bool {
        self.globals.format == Format::Csv
    }

    fn manifest(&self, outputs: &[&str]) -> Result<RunManifest> {
        let mut outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        outputs.push(MANIFEST_FILE.to_string());
        Ok(RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            config_path: self.globals.config_display(),
            config: serde_json::to_value(&self.cfg)?,
            outputs,
            format: match self.globals.format {
                Format::Csv => "csv".into(),
                Format::Json => "json".into(),
            },
            seed: self.seed,
        })
    }

    fn finish(&self, mut staged: Staged, manifest: &RunManifest) -> Result<()> {
        let hash = manifest.hash();
        let declared: Vec<&str> = manifest.outputs.iter().map(String::as_str).filter(|n| *n != MANIFEST_FILE).collect();
        let actual: Vec<&str> = staged.names().collect();
        if declared != actual {
            bail!("internal error: staged outputs {actual:?} differ from manifest {declared:?}");
        }
        staged.write_json(MANIFEST_FILE, &json!({ "manifest": manifest, "manifest_sha256": hash }))?;
        let written = staged.commit()?;
        if !self.globals.quiet {
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        Ok(())
    }
}

fn cfg_err(e: seom_core::Error) -> anyhow::Error {
    match e {
        seom_core::Error::Config { .. } | seom_core::Error::Unit(_) => anyhow!(ConfigError(e.to_string())),
        other => anyhow!(other),
    }
}

fn json_doc<T: Serialize>(hash: &str, payload: T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(payload)?;
    let obj = v.as_object_mut().ok_or_else(|| anyhow!("payload must be an object"))?;
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    obj.insert("manifest_sha256".into(), json!(hash));
    Ok(v)
}

#[derive(Serialize)]
struct TemperatureBandwidth {
    temperature_k: f64,
    n_m: f64,
    delta_n: f64,
    bandwidth: Bandwidth,
}

#[derive(Serialize)]
struct CurveJson {
    temperature_k: f64,
    freq_hz: Vec<f64>,
    response_db: Vec<f64>,
    alpha_m_db_per_m: Vec<f64>,
}

fn response_file(t: f64) -> String {
    format!("response_{t:.3}K.csv")
}

pub fn response(run: &Run) -> Result<()> {
    let device = run.cfg.device().map_err(cfg_err)?;
    let settings = run.cfg.response().map_err(cfg_err)?;
    let grid = &settings.frequencies;
    if !run.globals.quiet && grid.first().is_some_and(|f| *f < settings.dispersion_crossover) {
        eprintln!(
            "note: below {} GHz the microwave phase index is approximated by the group index",
            fmt_f64(settings.dispersion_crossover / 1e9)
        );
    }

    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for &t in &settings.temperatures {
        let (n_m, delta_n) = settings.index_mismatch(&device, t).with_context(|| format!("at {t} K"))?;
        let curve = response_curve(delta_n, device.design.arm_length, |f| microwave_loss(&device.line, f), grid)?;
        summary.push(TemperatureBandwidth { temperature_k: t, n_m, delta_n, bandwidth: bandwidth_3db(&curve) });
        curves.push((t, curve));
    }
    let peak = summary
        .iter()
        .filter_map(|s| s.bandwidth.hz().map(|b| (s.temperature_k, b)))
        .fold(None, |best: Option<(f64, f64)>, c| match best {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        });

    let mut names: Vec<String> = Vec::new();
    if run.csv() {
        names.extend(settings.temperatures.iter().map(|t| response_file(*t)));
        names.push("response_summary.json".into());
    } else {
        names.push("response.json".into());
    }
    if run.globals.plot {
        names.push("response.svg".into());
    }
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != names.len() {
        return Err(anyhow!(ConfigError("[response] `temperatures` must be distinct".into())));
    }
    let manifest = run.manifest(&names.iter().map(String::as_str).collect::<Vec<_>>())?;
    let hash = manifest.hash();
    let mut staged = Staged::new(&run.globals.out)?;

    let summary_doc = json_doc(
        &hash,
        json!({
            "length_m": device.design.arm_length,
            "n_o": device.waveguide.n_g_opt,
            "bandwidths": summary,
            "max_bandwidth": peak.map(|(t, b)| json!({ "temperature_k": t, "hz": b })),
        }),
    )?;
    if run.csv() {
        for (t, curve) in &curves {
            let f = staged.create(&response_file(*t))?;
            let mut w = BufWriter::new(f);
            csv_header(
                &mut w,
                &hash,
                &[format!("temperature_k={}", fmt_f64(*t)), format!("delta_n={}", fmt_f64(curve.delta_n))],
                &["freq_hz", "response_db", "alpha_m_db_per_m"],
            )?;
            for i in 0..curve.freqs.len() {
                csv_row(&mut w, &[curve.freqs[i], curve.response_db[i], curve.alpha_m_curve[i]])?;
            }
            w.flush()?;
        }
        staged.write_json("response_summary.json", &summary_doc)?;
    } else {
        let mut doc = summary_doc;
        doc["curves"] = serde_json::to_value(
            curves
                .iter()
                .map(|(t, c)| CurveJson {
                    temperature_k: *t,
                    freq_hz: c.freqs.clone(),
                    response_db: c.response_db.clone(),
                    alpha_m_db_per_m: c.alpha_m_curve.clone(),
                })
                .collect::<Vec<_>>(),
        )?;
        staged.write_json("response.json", &doc)?;
    }
    if run.globals.plot {
        let series: Vec<Series> = curves
            .iter()
            .map(|(t, c)| Series {
                label: format!("{} K", fmt_f64(*t)),
                points: c.freqs.iter().zip(&c.response_db).map(|(f, r)| (f / 1e9, r.max(-40.0))).collect(),
            })
            .collect();
        let axes = Axes {
            title: "EO response".into(),
            x_label: "frequency (GHz)".into(),
            y_label: "response (dB)".into(),
            log_x: false,
            log_y: false,
        };
        staged.write("response.svg", line_chart(&axes, &series).as_bytes())?;
    }
    run.finish(staged, &manifest)
}

pub fn efficiency(run: &Run) -> Result<()> {
    let mut device = run.cfg.device().map_err(cfg_err)?;
    let op = *run.cfg.operating().map_err(cfg_err)?;
    let settings = run.cfg.efficiency().map_err(cfg_err)?;
    device.design.z_term = settings.z0;
    let spec = SweepSpec {
        axes: vec![
            sweep::SweepAxis {
                parameter: sweep::SweepParameter::AlphaOpt,
                unit: "dB/m".into(),
                grid: settings.alpha_family.clone(),
            },
            sweep::SweepAxis { parameter: sweep::SweepParameter::ArmLength, unit: "m".into(), grid: settings.lengths.clone() },
        ],
        context: SweepContext { device: device.clone(), operating: op },
        outputs: vec![],
    };
    spec.validate()?;
    let inputs = sweep::efficiency_inputs(&spec.context);
    let design_eta = seom_core::transfer::length_dependent_efficiency(&inputs, device.design.arm_length);
    let small_signal = small_signal_efficiency(&op, &device.design, &device.waveguide, &device.line).ok();

    let names: Vec<&str> = match (run.csv(), run.globals.plot) {
        (true, false) => vec!["efficiency.csv", "efficiency_summary.json"],
        (true, true) => vec!["efficiency.csv", "efficiency_summary.json", "efficiency.svg"],
        (false, false) => vec!["efficiency.json"],
        (false, true) => vec!["efficiency.json", "efficiency.svg"],
    };
    let manifest = run.manifest(&names)?;
    let hash = manifest.hash();
    let mut staged = Staged::new(&run.globals.out)?;
    let loss = settings.insertion_loss_db;

    let mut rows = Vec::new();
    let peaks = if run.csv() {
        let f = staged.create("efficiency.csv")?;
        let mut w = BufWriter::new(f);
        csv_header(
            &mut w,
            &hash,
            &[format!("z0_ohm={} insertion_loss_db={}", fmt_f64(settings.z0), fmt_f64(loss))],
            &["alpha_opt_db_per_m", "length_m", "eta", "eta_net"],
        )?;
        let peaks = sweep::efficiency_vs_length(&spec, |r| {
            if run.globals.plot {
                rows.push(*r);
            }
            csv_row(&mut w, &[r.alpha_opt, r.length, r.eta, with_insertion_loss(r.eta, loss)])
                .map_err(|e| seom_core::Error::InvalidInput(e.to_string()))
        })?;
        w.flush()?;
        peaks
    } else {
        sweep::efficiency_vs_length(&spec, |r| {
            rows.push(*r);
            Ok(())
        })?
    };
    let mut doc = json_doc(
        &hash,
        json!({
            "z0_ohm": settings.z0,
            "insertion_loss_db": loss,
            "design_point": {
                "arm_length_m": device.design.arm_length,
                "alpha_opt_db_per_m": device.waveguide.alpha_opt,
                "vpi_v": seom_core::transfer::vpi_from_length(&device.design),
                "eta": design_eta,
                "eta_net": with_insertion_loss(design_eta, loss),
                "small_signal_eta_line_z0": small_signal,
            },
            "peaks": peaks,
        }),
    )?;
    if run.csv() {
        staged.write_json("efficiency_summary.json", &doc)?;
    } else {
        doc["rows"] = serde_json::to_value(&rows)?;
        staged.write_json("efficiency.json", &doc)?;
    }
    if run.globals.plot {
        let series: Vec<Series> = settings
            .alpha_family
            .iter()
            .map(|&a| Series {
                label: format!("{} dB/cm", fmt_f64(a / 100.0)),
                points: rows.iter().filter(|r| r.alpha_opt == a).map(|r| (r.length, r.eta)).collect(),
            })
            .collect();
        let axes = Axes {
            title: "transduction efficiency".into(),
            x_label: "modulation length (m)".into(),
            y_label: "efficiency".into(),
            log_x: true,
            log_y: true,
        };
        staged.write("efficiency.svg", line_chart(&axes, &series).as_bytes())?;
    }
    run.finish(staged, &manifest)
}

fn flag_quantity(flag: &str, value: &Option<String>, unit: &str) -> Result<Option<f64>> {
    value
        .as_deref()
        .map(|v| units::parse_quantity(v, unit).map_err(|e| anyhow!(ConfigError(format!("--{flag}: {e}")))))
        .transpose()
}

#[derive(Serialize)]
struct EyeSummary {
    operating: OperatingPoint,
    v_pi_v: f64,
    p_peak_w: f64,
    wavelength_m: f64,
    n_bits: usize,
    seed: u64,
    bias_optimized: bool,
    impairments: Impairments,
    analytic: EyeResult,
    monte_carlo: EyeResult,
    /// |MC − analytic| / σ_MC
    deviation_sigma: Option<f64>,
    /// Both dB readings of the linear Q; BER always uses the linear value.
    snr_db: SnrDb,
    energy_per_bit_j: Option<f64>,
}

#[derive(Serialize)]
struct SnrDb {
    analytic_10log10: f64,
    analytic_20log10: f64,
    monte_carlo_10log10: f64,
    monte_carlo_20log10: f64,
}

pub fn eye(run: &Run, args: &EyeArgs) -> Result<()> {
    let seed = run.seed.expect("eye always has a seed");
    let settings = run.cfg.eye().map_err(cfg_err)?;
    let wavelength = run.cfg.waveguide().map_err(cfg_err)?.wavelength;
    let mut op = *run.cfg.operating().map_err(cfg_err)?;
    let set = |slot: &mut f64, flag: &str, v: &Option<String>, unit: &str| -> Result<()> {
        if let Some(x) = flag_quantity(flag, v, unit)? {
            *slot = x;
        }
        Ok(())
    };
    set(&mut op.temperature, "temperature", &args.temperature, "K")?;
    set(&mut op.p_opt_in, "p-opt-in", &args.p_opt_in, "W")?;
    set(&mut op.bias_phase, "bias-phase", &args.bias_phase, "rad")?;
    set(&mut op.v_pp, "v-pp", &args.v_pp, "V")?;
    set(&mut op.bit_rate, "bit-rate", &args.bit_rate, "bps")?;
    set(&mut op.f_mod, "f-mod", &args.f_mod, "Hz")?;
    op.validate()?;
    let v_pi = flag_quantity("v-pi", &args.v_pi, "V")?.unwrap_or(settings.v_pi);
    let p_peak = flag_quantity("p-peak", &args.p_peak, "W")?.unwrap_or(settings.p_peak);
    let n_bits = args.n_bits.unwrap_or(settings.n_bits);
    let keep_samples = args.samples || settings.keep_samples;
    let optimize = args.optimize_bias || settings.optimize_bias;
    let impairments = Impairments { snr_penalty_db: settings.snr_penalty_db, bias_offset: settings.bias_offset };

    if optimize {
        op.bias_phase = eye::optimal_bias(&op, v_pi, p_peak, wavelength)?.0;
    }
    let analytic = eye::analytic_snr_with(&op, v_pi, p_peak, wavelength, &impairments)?;
    let mc_cfg = MonteCarloConfig { n_bits, seed, keep_samples, impairments };
    let mut mc = eye::monte_carlo_eye(&op, v_pi, p_peak, wavelength, &mc_cfg)?;
    let samples = std::mem::take(&mut mc.samples);
    let deviation_sigma = mc.snr_std_err.filter(|s| *s > 0.0).map(|s| (mc.snr - analytic.snr).abs() / s);
    let energy = run.cfg.design.as_ref().and_then(|d| energy_per_bit(op.v_pp, d.z_term, op.bit_rate).ok());

    let mut names = vec!["eye.json"];
    if keep_samples {
        names.push("eye_samples.csv");
    }
    let manifest = run.manifest(&names)?;
    let hash = manifest.hash();
    let snr_db = SnrDb {
        analytic_10log10: 10.0 * analytic.snr.log10(),
        analytic_20log10: 20.0 * analytic.snr.log10(),
        monte_carlo_10log10: 10.0 * mc.snr.log10(),
        monte_carlo_20log10: 20.0 * mc.snr.log10(),
    };
    let mut staged = Staged::new(&run.globals.out)?;
    let summary = EyeSummary {
        operating: op,
        v_pi_v: v_pi,
        p_peak_w: p_peak,
        wavelength_m: wavelength,
        n_bits,
        seed,
        bias_optimized: optimize,
        impairments,
        analytic,
        monte_carlo: mc,
        deviation_sigma,
        snr_db,
        energy_per_bit_j: energy,
    };
    staged.write_json("eye.json", &json_doc(&hash, &summary)?)?;
    if keep_samples {
        let f = staged.create("eye_samples.csv")?;
        let mut w = BufWriter::new(f);
        csv_header(&mut w, &hash, &[format!("seed={seed}")], &["bit_index", "bit", "photon_count"])?;
        for (i, s) in samples.iter().enumerate() {
            writeln!(w, "{i},{},{}", u8::from(s.bit), s.count)?;
        }
        w.flush()?;
    }
    run.finish(staged, &manifest)
}

#[derive(Serialize, Default)]
struct FitDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    index: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optical: Option<FitResult>,
}

pub fn fit(run: &Run) -> Result<()> {
    let settings = run.cfg.fit().map_err(cfg_err)?;
    let mut doc = FitDoc::default();
    if let Some(s) = &settings.index {
        let path = run.cfg.resolve_path(&s.samples);
        let data = trace::read_trace(&path, "K", None)?;
        let opts = IndexFitOptions { initial_a: s.initial_a, initial_b: s.initial_b };
        doc.index = Some(fitting::fit_index_vs_temperature_with(&data, s.t_c, &opts)?);
    }
    if let Some(s) = &settings.loss {
        let path = run.cfg.resolve_path(&s.s21);
        let data = trace::read_trace(&path, "Hz", Some("dB"))?;
        doc.loss = Some(fitting::fit_loss_slope(&data, s.line_length, s.window)?);
    }
    if let Some(s) = &settings.optical {
        let device = run.cfg.device().map_err(cfg_err)?;
        let path = run.cfg.resolve_path(&s.data);
        let data = trace::read_trace(&path, "Hz", Some("dB"))?;
        let n_m = match s.microwave_index {
            Some(n) => n,
            None => seom_core::device::microwave_index(&device.line, s.temperature)?,
        };
        let opts = OpticalIndexOptions { n_o_guess: s.n_o_guess, ..OpticalIndexOptions::default() };
        doc.optical = Some(fitting::fit_optical_index_with(
            &data,
            n_m,
            device.design.arm_length,
            |f| microwave_loss(&device.line, f),
            &opts,
        )?);
    }
    if !run.globals.quiet {
        for (name, r) in [("index", &doc.index), ("loss", &doc.loss), ("optical", &doc.optical)] {
            if let Some(r) = r.as_ref().filter(|r| !r.converged) {
                eprintln!("warning: {name} fit did not converge: {}", r.diagnostic.as_deref().unwrap_or("no diagnostic"));
            }
        }
    }

    let names: Vec<&str> = if run.csv() { vec!["fit.json", "fit_params.csv"] } else { vec!["fit.json"] };
    let manifest = run.manifest(&names)?;
    let hash = manifest.hash();
    let mut staged = Staged::new(&run.globals.out)?;
    staged.write_json("fit.json", &json_doc(&hash, &doc)?)?;
    if run.csv() {
        let f = staged.create("fit_params.csv")?;
        let mut w = BufWriter::new(f);
        csv_header(&mut w, &hash, &[], &["fit", "parameter", "value", "variance", "converged", "residual_rms"])?;
        for (name, r) in [("index", &doc.index), ("loss", &doc.loss), ("optical", &doc.optical)] {
            let Some(r) = r else { continue };
            for (p, v) in &r.params {
                let var = r.covariance_diag.get(p).map(|x| fmt_f64(*x)).unwrap_or_default();
                writeln!(w, "{name},{p},{},{var},{},{}", fmt_f64(*v), r.converged, fmt_f64(r.residual_rms))?;
            }
        }
        w.flush()?;
    }
    run.finish(staged, &manifest)
}

pub fn sweep(run: &Run) -> Result<()> {
    let settings = run.cfg.sweep().map_err(cfg_err)?;
    let spec = &settings.spec;
    let spec_hash = spec.hash();
    let names: Vec<&str> = if run.csv() { vec!["sweep.csv", "sweep_summary.json"] } else { vec!["sweep.json"] };
    let manifest = run.manifest(&names)?;
    let hash = manifest.hash();
    let mut staged = Staged::new(&run.globals.out)?;
    let io = |e: anyhow::Error| seom_core::Error::InvalidInput(e.to_string());

    let mut rows: Vec<serde_json::Value> = Vec::new();
    let kind_name = match settings.kind {
        SweepKind::EfficiencyVsLength => "efficiency_vs_length",
        SweepKind::ResponseVsMismatch => "response_vs_mismatch",
    };
    let annotations = {
        let mut writer = if run.csv() {
            let f = staged.create("sweep.csv")?;
            let mut w = BufWriter::new(f);
            let columns: &[&str] = match settings.kind {
                SweepKind::EfficiencyVsLength => &["alpha_opt_db_per_m", "length_m", "eta"],
                SweepKind::ResponseVsMismatch => &["delta_n", "alpha_m_coef_db_per_m_per_ghz", "freq_hz", "response_db"],
            };
            csv_header(&mut w, &hash, &[format!("spec_sha256={spec_hash}"), format!("kind={kind_name}")], columns)?;
            Some(w)
        } else {
            None
        };
        let annotations = match settings.kind {
            SweepKind::EfficiencyVsLength => serde_json::to_value(sweep::efficiency_vs_length(spec, |r| match &mut writer {
                Some(w) => csv_row(w, &[r.alpha_opt, r.length, r.eta]).map_err(io),
                None => {
                    rows.push(serde_json::to_value(r).expect("row serializes"));
                    Ok(())
                }
            })?)?,
            SweepKind::ResponseVsMismatch => serde_json::to_value(sweep::response_vs_mismatch(spec, |r| match &mut writer {
                Some(w) => csv_row(w, &[r.delta_n, r.alpha_m_coef, r.freq, r.response_db]).map_err(io),
                None => {
                    rows.push(serde_json::to_value(r).expect("row serializes"));
                    Ok(())
                }
            })?)?,
        };
        if let Some(mut w) = writer {
            w.flush()?;
        }
        annotations
    };
    let key = match settings.kind {
        SweepKind::EfficiencyVsLength => "peaks",
        SweepKind::ResponseVsMismatch => "bandwidths",
    };
    let mut doc = json_doc(&hash, json!({ "kind": kind_name, "spec_sha256": spec_hash, "spec": spec, key: annotations }))?;
    if run.csv() {
        staged.write_json("sweep_summary.json", &doc)?;
    } else {
        doc["rows"] = serde_json::Value::Array(rows);
        staged.write_json("sweep.json", &doc)?;
    }
    run.finish(staged, &manifest)
}

pub fn tradeoff(run: &Run) -> Result<()> {
    let settings = run.cfg.tradeoff().map_err(cfg_err)?;
    let rows = sweep::tradeoff_overlay(&settings.v_pi)?;
    let mut names = vec![if run.csv() { "tradeoff.csv" } else { "tradeoff.json" }];
    if run.globals.plot {
        names.push("tradeoff.svg");
    }
    let manifest = run.manifest(&names)?;
    let hash = manifest.hash();
    let mut staged = Staged::new(&run.globals.out)?;
    if run.csv() {
        let mut buf = Vec::new();
        csv_header(&mut buf, &hash, &["f_3db_hz = 20e9 * (v_pi_v)^2".into()], &["v_pi_v", "f_3db_hz"])?;
        for r in &rows {
            csv_row(&mut buf, &[r.v_pi, r.f_3db])?;
        }
        staged.write("tradeoff.csv", &buf)?;
    } else {
        staged.write_json("tradeoff.json", &json_doc(&hash, json!({ "rows": rows }))?)?;
    }
    if run.globals.plot {
        let axes = Axes {
            title: "normal-metal Vπ / bandwidth boundary".into(),
            x_label: "Vπ (V)".into(),
            y_label: "3 dB bandwidth (Hz)".into(),
            log_x: true,
            log_y: true,
        };
        let series = [Series { label: "ohmic limit".into(), points: rows.iter().map(|r| (r.v_pi, r.f_3db)).collect() }];
        staged.write("tradeoff.svg", line_chart(&axes, &series).as_bytes())?;
    }
    run.finish(staged, &manifest)
}
