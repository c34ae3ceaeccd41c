//! Parameter extraction from measured traces.
//!
//! Three fitters are provided:
//!
//! - [`fit_index_vs_temperature`]: `n_m(T) = a sqrt(1 + b / sqrt(1 - (T/Tc)^4))`,
//!   where `a` is the geometric-only index and `b = L_k(0) / L_geo`.
//! - [`fit_loss_slope`]: linear regression of the upper envelope of |S21| (dB)
//!   against frequency.
//! - [`fit_optical_index`]: one-dimensional least squares over the optical
//!   group index against a measured EO response.

pub mod lm;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{db_to_np, C0};
use crate::device::{microwave_index, microwave_loss, Device};
use crate::error::{Error, Result};
use crate::response::{accumulation, phase_mismatch, response_db_at};

pub use lm::{finite_difference_jacobian, LeastSquaresProblem, LevenbergMarquardt, LmReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    /// Root-mean-square residual in data units.
    pub residual_rms: f64,
    pub covariance_diag: BTreeMap<String, f64>,
    pub converged: bool,
    /// Scaled gradient at the solution (see [`LevenbergMarquardt`]).
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Objective ½Σr² at the initial guess and at the solution.
    pub initial_objective: f64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
}

/// Diagonal of σ²(JᵀJ)⁻¹ with σ² = Σr²/(m - n); `None` if singular.
fn covariance_diagonal(normal: &DMatrix<f64>, residuals: &[f64]) -> Option<Vec<f64>> {
    let n = normal.nrows();
    let m = residuals.len();
    let dof = m.saturating_sub(n).max(1) as f64;
    let sigma2 = residuals.iter().map(|x| x * x).sum::<f64>() / dof;
    let inv = normal.clone().try_inverse()?;
    Some((0..n).map(|k| sigma2 * inv[(k, k)]).collect())
}

/// Reciprocal condition estimate of a symmetric positive semidefinite matrix.
fn inverse_condition(normal: &DMatrix<f64>) -> f64 {
    let eig = normal.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (min / max).max(0.0)
    }
}

fn build_result(names: &[&str], report: &LmReport, diagnostic: Option<String>) -> FitResult {
    let diagnostic = diagnostic.or_else(|| {
        (!report.converged).then(|| {
            format!(
                "stopped after {} iterations with scaled gradient {:.3e}",
                report.iterations, report.gradient_norm
            )
        })
    });
    let params = names
        .iter()
        .zip(&report.params)
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    let covariance_diag = covariance_diagonal(&report.normal_matrix, &report.residuals)
        .map(|d| names.iter().zip(d).map(|(n, v)| (n.to_string(), v)).collect())
        .unwrap_or_default();
    FitResult {
        params,
        residual_rms: rms(&report.residuals),
        covariance_diag,
        converged: report.converged && diagnostic.is_none(),
        gradient_norm: report.gradient_norm,
        iterations: report.iterations,
        initial_objective: report.initial_objective,
        objective: report.objective,
        diagnostic,
    }
}

/// Microwave index versus temperature model with analytic Jacobian.
#[derive(Debug, Clone)]
pub struct IndexTemperatureModel {
    pub samples: Vec<(f64, f64)>,
    pub t_c: f64,
}

impl IndexTemperatureModel {
    fn enhancement(&self, t: f64) -> f64 {
        1.0 / (1.0 - (t / self.t_c).powi(4)).sqrt()
    }

    /// `a sqrt(1 + b / sqrt(1 - (T/Tc)^4))`.
    pub fn evaluate(&self, a: f64, b: f64, t: f64) -> f64 {
        a * (1.0 + b * self.enhancement(t)).sqrt()
    }
}

impl LeastSquaresProblem for IndexTemperatureModel {
    fn num_params(&self) -> usize {
        2
    }

    fn residual_scale(&self) -> f64 {
        self.samples.iter().map(|s| s.1 * s.1).sum::<f64>().sqrt()
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.samples.iter().map(|&(t, n)| self.evaluate(p[0], p[1], t) - n).collect()
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let (a, b) = (p[0], p[1]);
        Some(DMatrix::from_fn(self.samples.len(), 2, |i, j| {
            let s = self.enhancement(self.samples[i].0);
            let root = (1.0 + b * s).sqrt();
            if j == 0 {
                root
            } else {
                a * s / (2.0 * root)
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexFitOptions {
    /// Initial `a`; defaults to the sample mean.
    pub initial_a: Option<f64>,
    pub initial_b: f64,
}

impl Default for IndexFitOptions {
    fn default() -> Self {
        Self {
            initial_a: None,
            initial_b: 0.1,
        }
    }
}

/// Least-squares `(a, b)` for measured `(T, n_m)` samples at fixed `t_c`.
pub fn fit_index_vs_temperature(samples: &[(f64, f64)], t_c: f64) -> Result<FitResult> {
    fit_index_vs_temperature_with(samples, t_c, &IndexFitOptions::default())
}

pub fn fit_index_vs_temperature_with(
    samples: &[(f64, f64)],
    t_c: f64,
    opts: &IndexFitOptions,
) -> Result<FitResult> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "index fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if !(t_c > 0.0) {
        return Err(Error::InvalidInput("t_c must be > 0".into()));
    }
    if let Some(&(t, _)) = samples.iter().find(|&&(t, _)| !(t >= 0.0 && t < t_c)) {
        return Err(Error::InvalidInput(format!(
            "sample at T = {t} K is outside [0, Tc = {t_c} K)"
        )));
    }
    let model = IndexTemperatureModel {
        samples: samples.to_vec(),
        t_c,
    };
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let a0 = opts.initial_a.unwrap_or(mean);
    let report = LevenbergMarquardt::default().minimize(&model, &[a0, opts.initial_b]);

    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let diagnostic = if distinct.len() < 2 || inverse_condition(&report.normal_matrix) < 1e-14 {
        Some("rank-deficient: temperatures do not separate a from b".to_string())
    } else {
        None
    };
    Ok(build_result(&["a", "b"], &report, diagnostic))
}

pub const DEFAULT_ENVELOPE_WINDOW: usize = 21;

/// Indices of upper-envelope points of `ys`.
///
/// The trace is first detrended by an ordinary least-squares line so that a
/// monotone, ripple-free trace does not reduce to its first sample; a point
/// belongs to the envelope when its detrended value is the maximum of the
/// centered window around it.
pub fn upper_envelope(xs: &[f64], ys: &[f64], window: usize) -> Vec<usize> {
    let n = ys.len();
    if n == 0 {
        return Vec::new();
    }
    let (slope, intercept) = match linear_regression(xs, ys) {
        Some(r) => (r.slope, r.intercept),
        None => (0.0, 0.0),
    };
    let detrended: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let half = window.max(1) / 2;
    let scale = detrended.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(ys.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let tie = 1e-12 * scale.max(1e-300);
    (0..n)
        .filter(|&i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (lo..=hi).all(|j| detrended[i] + tie >= detrended[j])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_var: f64,
    pub intercept_var: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Option<Regression> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let sigma2 = if n > 2 { sse / (nf - 2.0) } else { 0.0 };
    Some(Regression {
        slope,
        intercept,
        slope_var: sigma2 / sxx,
        intercept_var: sigma2 * (1.0 / nf + mx * mx / sxx),
    })
}

/// Loss slope from an S21 trace `(f Hz, |S21| dB)` of a line of `line_length` m.
///
/// Returns `slope_db_per_ghz`, `intercept_db` and `alpha_m_coef`
/// (dB/m per GHz, positive for a lossy line).
pub fn fit_loss_slope(s21: &[(f64, f64)], line_length: f64, window: usize) -> Result<FitResult> {
    if s21.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "S21 fit needs at least 2 points, got {}",
            s21.len()
        )));
    }
    if !(line_length > 0.0) {
        return Err(Error::InvalidInput("line length must be > 0".into()));
    }
    let xs: Vec<f64> = s21.iter().map(|p| p.0 / 1e9).collect();
    let ys: Vec<f64> = s21.iter().map(|p| p.1).collect();
    let idx = upper_envelope(&xs, &ys, window);
    if idx.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} envelope point(s) found; need at least 2",
            idx.len()
        )));
    }
    let ex: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let ey: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let reg = linear_regression(&ex, &ey)
        .ok_or_else(|| Error::Fit("envelope points share one frequency".into()))?;
    let residuals: Vec<f64> = ex.iter().zip(&ey).map(|(x, y)| reg.slope * x + reg.intercept - y).collect();
    let coef = -reg.slope / line_length;
    let objective = 0.5 * residuals.iter().map(|r| r * r).sum::<f64>();
    let mean = ey.iter().sum::<f64>() / ey.len() as f64;
    let initial_objective = 0.5 * ey.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
    Ok(FitResult {
        params: BTreeMap::from([
            ("alpha_m_coef".to_string(), coef),
            ("intercept_db".to_string(), reg.intercept),
            ("slope_db_per_ghz".to_string(), reg.slope),
        ]),
        residual_rms: rms(&residuals),
        covariance_diag: BTreeMap::from([
            ("alpha_m_coef".to_string(), reg.slope_var / (line_length * line_length)),
            ("intercept_db".to_string(), reg.intercept_var),
            ("slope_db_per_ghz".to_string(), reg.slope_var),
        ]),
        converged: true,
        gradient_norm: 0.0,
        iterations: 1,
        initial_objective,
        objective,
        diagnostic: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalIndexOptions {
    /// Starting optical group index (simulated room-temperature value).
    pub n_o_guess: f64,
    /// Half width of the coarse scan around the guess.
    pub scan_half_width: f64,
    pub scan_step: f64,
    /// Responses are clamped to this floor before comparison (dB).
    pub floor_db: f64,
}

impl Default for OpticalIndexOptions {
    fn default() -> Self {
        Self {
            n_o_guess: 2.25,
            scan_half_width: 0.2,
            scan_step: 1e-3,
            floor_db: -80.0,
        }
    }
}

/// EO response misfit as a function of the optical group index.
pub struct OpticalIndexProblem<'a> {
    pub data: &'a [(f64, f64)],
    pub n_m: f64,
    pub length: f64,
    /// Microwave loss at each data frequency (dB/m).
    pub loss_db: Vec<f64>,
    pub floor_db: f64,
}

impl OpticalIndexProblem<'_> {
    fn model_db(&self, n_o: f64, k: usize) -> f64 {
        let f = self.data[k].0;
        response_db_at(self.n_m - n_o, self.length, self.loss_db[k], f).max(self.floor_db)
    }

    fn objective(&self, n_o: f64) -> f64 {
        0.5 * self.residuals(&[n_o]).iter().map(|r| r * r).sum::<f64>()
    }
}

impl LeastSquaresProblem for OpticalIndexProblem<'_> {
    fn num_params(&self) -> usize {
        1
    }

    fn residual_scale(&self) -> f64 {
        self.data.iter().map(|d| d.1.max(self.floor_db).powi(2)).sum::<f64>().sqrt()
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        (0..self.data.len())
            .map(|k| self.model_db(p[0], k) - self.data[k].1.max(self.floor_db))
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let n_o = p[0];
        let l = self.length;
        Some(DMatrix::from_fn(self.data.len(), 1, |k, _| {
            if self.model_db(n_o, k) <= self.floor_db {
                return 0.0;
            }
            let f = self.data[k].0;
            let dk = phase_mismatch(self.n_m, n_o, f);
            let q = Complex64::new(0.5 * db_to_np(self.loss_db[k]), -dk);
            let acc = accumulation(q, l);
            let x = q * l;
            let d_acc = if x.norm() < 1e-4 {
                l * l * (-0.5 + x / 3.0 - x * x / 8.0)
            } else {
                (l * (-x).exp() - acc) / q
            };
            // dq/dn_o = -i dΔk/dn_o = i 2π f / c0
            let dq = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f / C0);
            20.0 / std::f64::consts::LN_10 * (d_acc * dq / acc).re
        }))
    }
}

/// Optical group index best matching a measured EO response `(f Hz, dB)`.
///
/// The microwave index and loss are taken from `device` at temperature `t`.
pub fn fit_optical_index(eo_data: &[(f64, f64)], device: &Device, t: f64) -> Result<FitResult> {
    let n_m = microwave_index(&device.line, t)?;
    fit_optical_index_with(
        eo_data,
        n_m,
        device.design.arm_length,
        |f| microwave_loss(&device.line, f),
        &OpticalIndexOptions::default(),
    )
}

/// As [`fit_optical_index`] with an explicit microwave index, length and loss law.
pub fn fit_optical_index_with<F: Fn(f64) -> f64>(
    eo_data: &[(f64, f64)],
    n_m: f64,
    length: f64,
    loss_db: F,
    opts: &OpticalIndexOptions,
) -> Result<FitResult> {
    if eo_data.len() < 2 {
        return Err(Error::InvalidInput("EO fit needs at least 2 points".into()));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidInput("length must be > 0".into()));
    }
    let problem = OpticalIndexProblem {
        data: eo_data,
        n_m,
        length,
        loss_db: eo_data.iter().map(|p| loss_db(p.0)).collect(),
        floor_db: opts.floor_db,
    };

    // Coarse scan visited in order of distance from the guess so that equal
    // misfits (e.g. the mirror solution 2 n_m - n_o) resolve toward the guess.
    let steps = (opts.scan_half_width / opts.scan_step).round() as i64;
    let mut best = (opts.n_o_guess, problem.objective(opts.n_o_guess));
    for k in 1..=steps {
        for sign in [-1.0, 1.0] {
            let n_o = opts.n_o_guess + sign * k as f64 * opts.scan_step;
            if n_o <= 1.0 {
                continue;
            }
            let obj = problem.objective(n_o);
            if obj < best.1 {
                best = (n_o, obj);
            }
        }
    }

    let mut report = LevenbergMarquardt::default().minimize(&problem, &[best.0]);
    report.initial_objective = problem.objective(opts.n_o_guess);

    let points = eo_data.len() as f64;
    let sensitivity = (report.normal_matrix[(0, 0)] / points).sqrt();
    let diagnostic = if !(sensitivity > 1e-2) {
        Some(format!(
            "insufficient curvature: response sensitivity {sensitivity:.2e} dB per unit n_o"
        ))
    } else {
        None
    };
    let mut result = build_result(&["n_o"], &report, diagnostic);
    result
        .params
        .insert("delta_n".to_string(), n_m - report.params[0]);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::response_curve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synth_index(a: f64, b: f64, t_c: f64, temps: &[f64]) -> Vec<(f64, f64)> {
        let m = IndexTemperatureModel { samples: vec![], t_c };
        temps.iter().map(|&t| (t, m.evaluate(a, b, t))).collect()
    }

    fn temps() -> Vec<f64> {
        (0..12).map(|i| 1.5 + 0.5 * i as f64).collect()
    }

    #[test]
    fn index_fit_recovers_noiseless_parameters() {
        let data = synth_index(2.0, 0.19, 8.0, &temps());
        let fit = fit_index_vs_temperature(&data, 8.0).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.param("a").unwrap() / 2.0 - 1.0).abs() < 1e-3);
        assert!((fit.param("b").unwrap() / 0.19 - 1.0).abs() < 1e-3);
        assert!(fit.residual_rms < 1e-10);
        assert!(fit.objective <= fit.initial_objective);
    }

    #[test]
    fn index_fit_temperature_independent() {
        let data: Vec<(f64, f64)> = temps().into_iter().map(|t| (t, 2.1)).collect();
        let fit = fit_index_vs_temperature(&data, 8.0).unwrap();
        assert!(fit.param("b").unwrap().abs() < 1e-6);
        assert!((fit.param("a").unwrap() - 2.1).abs() < 1e-6);
    }

    #[test]
    fn index_fit_rejects_bad_samples() {
        let data = synth_index(2.0, 0.2, 8.0, &[1.0, 2.0, 3.0]);
        let mut bad = data.clone();
        bad.push((8.0, 3.0));
        assert!(fit_index_vs_temperature(&bad, 8.0).is_err());
        assert!(fit_index_vs_temperature(&data[..2], 8.0).is_err());
    }

    #[test]
    fn index_fit_flags_rank_deficiency() {
        let data = vec![(4.0, 2.2), (4.0, 2.2), (4.0, 2.2)];
        let fit = fit_index_vs_temperature(&data, 8.0).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.unwrap().contains("rank-deficient"));
    }

    #[test]
    fn index_fit_noise_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b) = (2.0, 0.19);
        // dense sweep up to 0.99 Tc, where the kinetic term carries the b signal
        let sweep: Vec<f64> = (0..60).map(|i| 2.0 + 5.9 * i as f64 / 59.0).collect();
        let clean = synth_index(a, b, 8.0, &sweep);
        let mut err_a = Vec::new();
        let mut err_b = Vec::new();
        for _ in 0..100 {
            let noisy: Vec<(f64, f64)> = clean
                .iter()
                .map(|&(t, n)| (t, n * (1.0 + 0.01 * Normal::new(0.0, 1.0).unwrap().sample(&mut rng))))
                .collect();
            let fit = fit_index_vs_temperature(&noisy, 8.0).unwrap();
            assert!(fit.objective <= fit.initial_objective);
            err_a.push((fit.param("a").unwrap() / a - 1.0).abs());
            err_b.push((fit.param("b").unwrap() / b - 1.0).abs());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let ma = median(&mut err_a);
        let mb = median(&mut err_b);
        assert!(ma <= 0.05, "median a error {ma}");
        assert!(mb <= 0.05, "median b error {mb}");
    }

    #[test]
    fn index_jacobian_matches_finite_differences() {
        let m = IndexTemperatureModel {
            samples: synth_index(2.0, 0.2, 8.0, &temps()),
            t_c: 8.0,
        };
        for p in [[1.9, 0.1], [2.3, 0.5], [2.0, 0.01]] {
            let a = m.jacobian(&p).unwrap();
            let f = finite_difference_jacobian(&m, &p);
            for (x, y) in a.iter().zip(f.iter()) {
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1e-8), "{x} vs {y}");
            }
        }
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn loss_slope_from_clean_line() {
        // 0.2 dB/m/GHz over 0.1 m
        let s21: Vec<(f64, f64)> = linspace(1e8, 40e9, 400)
            .into_iter()
            .map(|f| (f, -0.2 * (f / 1e9) * 0.1 - 1.5))
            .collect();
        let fit = fit_loss_slope(&s21, 0.1, DEFAULT_ENVELOPE_WINDOW).unwrap();
        assert!((fit.param("slope_db_per_ghz").unwrap() + 0.02).abs() < 1e-12);
        assert!((fit.param("alpha_m_coef").unwrap() / 0.2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn loss_slope_zero_for_lossless() {
        let s21: Vec<(f64, f64)> = linspace(1e8, 40e9, 100).into_iter().map(|f| (f, -0.7)).collect();
        let fit = fit_loss_slope(&s21, 0.1, 21).unwrap();
        assert!(fit.param("alpha_m_coef").unwrap().abs() < 1e-9);
    }

    #[test]
    fn loss_slope_through_standing_wave_ripple() {
        // dips from an impedance mismatch, peaks sit on the loss line
        let s21: Vec<(f64, f64)> = linspace(1e8, 40e9, 2000)
            .into_iter()
            .map(|f| {
                let ghz = f / 1e9;
                let ripple = -1.5 * (1.0 - (2.0 * std::f64::consts::PI * ghz / 0.8).cos()).powi(2) / 4.0;
                (f, -0.2 * ghz * 0.1 + ripple)
            })
            .collect();
        let fit = fit_loss_slope(&s21, 0.1, 21).unwrap();
        let coef = fit.param("alpha_m_coef").unwrap();
        assert!((coef / 0.2 - 1.0).abs() < 0.1, "coef = {coef}");
    }

    #[test]
    fn loss_slope_needs_points() {
        assert!(fit_loss_slope(&[(1e9, -1.0)], 0.1, 21).is_err());
        assert!(fit_loss_slope(&[(1e9, -1.0), (2e9, -1.1)], 0.0, 21).is_err());
    }

    fn eo_fixture(n_o: f64, n_m: f64, length: f64, coef: f64) -> Vec<(f64, f64)> {
        let grid = linspace(0.1e9, 40e9, 400);
        let c = response_curve(n_m - n_o, length, |f| coef * f / 1e9, &grid).unwrap();
        grid.into_iter().zip(c.response_db).collect()
    }

    #[test]
    fn optical_index_round_trip() {
        let data = eo_fixture(2.28, 2.08, 0.1, 0.5);
        let fit = fit_optical_index_with(&data, 2.08, 0.1, |f| 0.5 * f / 1e9, &OpticalIndexOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.param("n_o").unwrap() - 2.28).abs() < 0.005);
        assert!(fit.residual_rms < 1e-10);
        assert!(fit.objective <= fit.initial_objective);
    }

    #[test]
    fn optical_index_from_null_position() {
        // first null at 15 GHz for L = 0.1 m: |δn| = c / (15 GHz * 0.1 m)
        let dn = C0 / (15e9 * 0.1);
        let n_m = 2.05;
        let data = eo_fixture(n_m + dn, n_m, 0.1, 0.0);
        let fit = fit_optical_index_with(&data, n_m, 0.1, |_| 0.0, &OpticalIndexOptions::default()).unwrap();
        assert!((fit.param("delta_n").unwrap() + dn).abs() < 1e-6);
        assert!((dn - 0.2).abs() < 1e-3);
    }

    #[test]
    fn optical_index_flat_data_not_converged() {
        let data: Vec<(f64, f64)> = linspace(0.1e9, 40e9, 200).into_iter().map(|f| (f, 0.0)).collect();
        let fit = fit_optical_index_with(&data, 2.25, 0.1, |_| 0.0, &OpticalIndexOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.unwrap().contains("insufficient curvature"));
    }

    #[test]
    fn optical_index_jacobian_matches_finite_differences() {
        let data = eo_fixture(2.28, 2.08, 0.1, 0.5);
        let problem = OpticalIndexProblem {
            data: &data,
            n_m: 2.08,
            length: 0.1,
            loss_db: data.iter().map(|p| 0.5 * p.0 / 1e9).collect(),
            floor_db: -80.0,
        };
        for n_o in [2.2, 2.27, 2.31] {
            let a = problem.jacobian(&[n_o]).unwrap();
            let f = finite_difference_jacobian(&problem, &[n_o]);
            for (x, y) in a.iter().zip(f.iter()) {
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1e-3), "n_o {n_o}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let data = eo_fixture(2.28, 2.08, 0.1, 0.5);
        let a = fit_optical_index_with(&data, 2.08, 0.1, |f| 0.5 * f / 1e9, &OpticalIndexOptions::default()).unwrap();
        let b = fit_optical_index_with(&data, 2.08, 0.1, |f| 0.5 * f / 1e9, &OpticalIndexOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
