//! Traveling-wave electro-optic frequency response.
//!
//! With the pump undepleted and all optical modes sharing one group index, the
//! sideband amplitude after an interaction length `L` is proportional to the
//! accumulation integral `∫₀ᴸ exp(-(α_m/2 - iΔk) z) dz`. Normalizing by `L`
//! gives the response factor `m(f)`, which is 1 for a matched lossless line.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{db_to_np, C0};
use crate::device::{microwave_index, microwave_loss, Device};
use crate::error::{Error, Result};

/// Floor applied to reported responses so exact nulls stay finite.
pub const MIN_RESPONSE_DB: f64 = -300.0;

/// `|qL|` below which the accumulation integral switches to its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Wavenumber mismatch (rad/m) between microwave and co-propagating optics,
/// `Δk = 2π f (n_m - n_o) / c0`.
pub fn phase_mismatch(n_m: f64, n_o: f64, f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f * (n_m - n_o) / C0
}

/// `exp(x) - 1` for complex `x` without cancellation near zero.
fn expm1(x: Complex64) -> Complex64 {
    let (s, c) = x.im.sin_cos();
    let half = (0.5 * x.im).sin();
    Complex64::new(x.re.exp_m1() * c - 2.0 * half * half, x.re.exp() * s)
}

/// `(1 - e^{-q z}) / q`, which tends to `z` as `q → 0`.
pub fn accumulation(q: Complex64, z: f64) -> Complex64 {
    let x = q * z;
    if x.norm() < SERIES_THRESHOLD {
        z * (Complex64::new(1.0, 0.0) - x / 2.0 + x * x / 6.0)
    } else {
        -expm1(-x) / q
    }
}

/// Parameters of the steady-state sideband solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    /// Vacuum coupling strength g0.
    pub g0: f64,
    /// Pump amplitude P0 (photon-density amplitude, sqrt(1/m)).
    pub pump_amplitude: f64,
    /// Microwave input amplitude M0.
    pub microwave_amplitude: f64,
    /// Optical group velocity (m/s).
    pub v_o: f64,
    /// Optical power loss (Np/m).
    pub alpha_o: f64,
    /// Microwave power loss (Np/m).
    pub alpha_m: f64,
    /// Wavenumber mismatch (rad/m).
    pub delta_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandEnvelope {
    /// Blue sideband B(z).
    pub blue: Complex64,
    /// Red sideband R(z).
    pub red: Complex64,
    /// Microwave M(z).
    pub microwave: Complex64,
}

/// Steady-state B(z), R(z), M(z) for a microwave injected at z = 0.
pub fn sideband_envelope(p: &EnvelopeParams, z: f64) -> SidebandEnvelope {
    let i = Complex64::i();
    let scale = -i * (p.g0 * p.pump_amplitude / p.v_o)
        * p.microwave_amplitude
        * (-0.5 * p.alpha_o * z).exp();
    let q_blue = Complex64::new(0.5 * p.alpha_m, -p.delta_k);
    let q_red = Complex64::new(0.5 * p.alpha_m, p.delta_k);
    SidebandEnvelope {
        blue: scale * accumulation(q_blue, z),
        red: scale * accumulation(q_red, z),
        microwave: Complex64::new(p.microwave_amplitude * (-0.5 * p.alpha_m * z).exp(), 0.0),
    }
}

/// Normalized response factor `m = |(1 - e^{-qL}) / (qL)|`, `q = α_m/2 - iΔk`.
///
/// `alpha_m_np` is the microwave power loss in Np/m.
pub fn response_factor(alpha_m_np: f64, delta_k: f64, length: f64) -> f64 {
    accumulation(Complex64::new(0.5 * alpha_m_np, -delta_k), length).norm() / length
}

fn to_db(m: f64) -> f64 {
    (20.0 * m.log10()).max(MIN_RESPONSE_DB)
}

/// Response in dB for one frequency; loss given in dB/m.
pub fn response_db_at(delta_n: f64, length: f64, alpha_m_db: f64, f: f64) -> f64 {
    let dk = phase_mismatch(delta_n, 0.0, f);
    to_db(response_factor(db_to_np(alpha_m_db), dk, length))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EOResponseCurve {
    /// Frequency grid (Hz).
    pub freqs: Vec<f64>,
    /// `20 log10 m(f)`.
    pub response_db: Vec<f64>,
    /// Index mismatch `n_m - n_o`.
    pub delta_n: f64,
    /// Microwave loss at each grid point (dB/m).
    pub alpha_m_curve: Vec<f64>,
    /// Interaction length (m); `None` for curves built from measured data.
    #[serde(default)]
    pub length: Option<f64>,
}

impl EOResponseCurve {
    /// Wraps tabulated data (e.g. a measurement) with no underlying model.
    pub fn from_data(freqs: Vec<f64>, response_db: Vec<f64>) -> Result<Self> {
        validate_grid(&freqs)?;
        if freqs.len() != response_db.len() {
            return Err(Error::InvalidInput(format!(
                "{} frequencies but {} response values",
                freqs.len(),
                response_db.len()
            )));
        }
        let n = freqs.len();
        Ok(Self {
            freqs,
            response_db,
            delta_n: f64::NAN,
            alpha_m_curve: vec![f64::NAN; n],
            length: None,
        })
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("frequency grid is empty".into()));
    }
    if grid.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::InvalidInput("frequencies must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("frequency grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Response over `grid` for a given index mismatch, length and loss law (dB/m).
pub fn response_curve<F>(delta_n: f64, length: f64, loss_db: F, grid: &[f64]) -> Result<EOResponseCurve>
where
    F: Fn(f64) -> f64 + Sync,
{
    validate_grid(grid)?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidInput(format!("interaction length must be > 0, got {length}")));
    }
    let (response_db, alpha_m_curve): (Vec<f64>, Vec<f64>) = grid
        .par_iter()
        .map(|&f| {
            let alpha = loss_db(f);
            (response_db_at(delta_n, length, alpha, f), alpha)
        })
        .unzip();
    Ok(EOResponseCurve {
        freqs: grid.to_vec(),
        response_db,
        delta_n,
        alpha_m_curve,
        length: Some(length),
    })
}

/// EO response of `device` at temperature `t`.
///
/// The microwave phase index is taken equal to the line's group index at all
/// frequencies. That is accurate where the line is dispersionless (above
/// roughly 10 GHz for typical coplanar lines); at low frequency the error is
/// tolerated because Δk itself scales with frequency there.
pub fn eo_response(device: &Device, t: f64, grid: &[f64]) -> Result<EOResponseCurve> {
    let n_m = microwave_index(&device.line, t)?;
    let delta_n = n_m - device.waveguide.n_g_opt;
    response_curve(
        delta_n,
        device.design.arm_length,
        |f| microwave_loss(&device.line, f),
        grid,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hz", rename_all = "snake_case")]
pub enum Bandwidth {
    /// First −3 dB crossing (Hz).
    Within(f64),
    /// The curve never drops to −3 dB on its grid.
    BeyondGrid,
}

impl Bandwidth {
    pub fn hz(self) -> Option<f64> {
        match self {
            Bandwidth::Within(f) => Some(f),
            Bandwidth::BeyondGrid => None,
        }
    }
}

/// Lowest frequency at which the response first reaches −3 dB.
///
/// Model curves are refined by bisection on the closed form between the two
/// bracketing grid points (loss interpolated linearly between them); data-only
/// curves are interpolated linearly in dB.
pub fn bandwidth_3db(curve: &EOResponseCurve) -> Bandwidth {
    const LEVEL: f64 = -3.0;
    let Some(idx) = curve.response_db.iter().position(|&r| r <= LEVEL) else {
        return Bandwidth::BeyondGrid;
    };
    if idx == 0 {
        return Bandwidth::Within(curve.freqs[0]);
    }
    let (f0, f1) = (curve.freqs[idx - 1], curve.freqs[idx]);
    let (r0, r1) = (curve.response_db[idx - 1], curve.response_db[idx]);
    match curve.length {
        Some(length) if curve.delta_n.is_finite() => {
            let (a0, a1) = (curve.alpha_m_curve[idx - 1], curve.alpha_m_curve[idx]);
            let model = |f: f64| {
                let alpha = a0 + (a1 - a0) * (f - f0) / (f1 - f0);
                response_db_at(curve.delta_n, length, alpha, f) - LEVEL
            };
            Bandwidth::Within(bisect(model, f0, f1))
        }
        _ => Bandwidth::Within(f0 + (LEVEL - r0) * (f1 - f0) / (r1 - r0)),
    }
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lossless response nulls `f_k = k c0 / (|δn| L)` for `k = 1..=k_max`.
pub fn null_frequencies(delta_n: f64, length: f64, k_max: usize) -> Result<Vec<f64>> {
    if delta_n == 0.0 {
        return Err(Error::VelocityMatched);
    }
    if !(length > 0.0) {
        return Err(Error::InvalidInput("length must be > 0".into()));
    }
    let first = C0 / (delta_n.abs() * length);
    Ok((1..=k_max).map(|k| k as f64 * first).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn mismatch_examples() {
        assert_eq!(phase_mismatch(2.2, 2.2, 10e9), 0.0);
        let dk = phase_mismatch(2.4, 2.2, 15e9);
        // 2π at L = 0.1 m with c rounded to 3e8
        assert!((dk * 0.1 / (2.0 * std::f64::consts::PI) - 3e8 / C0).abs() < 1e-12);
        assert_eq!(phase_mismatch(2.2, 2.4, 15e9), -phase_mismatch(2.4, 2.2, 15e9));
    }

    #[test]
    fn envelope_linear_growth_when_matched() {
        let p = EnvelopeParams {
            g0: 3.0,
            pump_amplitude: 2.0,
            microwave_amplitude: 1.0,
            v_o: 1.0,
            alpha_o: 0.0,
            alpha_m: 0.0,
            delta_k: 0.0,
        };
        let b1 = sideband_envelope(&p, 0.1).blue.norm();
        let b2 = sideband_envelope(&p, 0.2).blue.norm();
        assert!((b1 - 0.6).abs() < 1e-15);
        assert!((b2 / b1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn envelope_vanishes_at_full_phase_slip() {
        let l = 0.1;
        let p = EnvelopeParams {
            g0: 1.0,
            pump_amplitude: 1.0,
            microwave_amplitude: 1.0,
            v_o: 1.0,
            alpha_o: 0.0,
            alpha_m: 0.0,
            delta_k: 2.0 * std::f64::consts::PI / l,
        };
        assert!(sideband_envelope(&p, l).blue.norm() < 1e-15);
    }

    #[test]
    fn flat_response_when_matched_and_lossless() {
        let grid = linspace(1e8, 1e11, 200);
        let c = response_curve(0.0, 0.1, |_| 0.0, &grid).unwrap();
        assert!(c.response_db.iter().all(|r| r.abs() < 1e-12));
        assert_eq!(bandwidth_3db(&c), Bandwidth::BeyondGrid);
    }

    #[test]
    fn nulls_at_harmonics() {
        let nulls = null_frequencies(0.2, 0.1, 3).unwrap();
        assert!((nulls[0] - C0 / 0.02).abs() < 1e-3);
        assert!((nulls[0] - 15e9).abs() < 15e6);
        assert_eq!(nulls[1], 2.0 * nulls[0]);
        assert_eq!(nulls[2], 3.0 * nulls[0]);
        let halved = null_frequencies(0.1, 0.1, 1).unwrap();
        assert!((halved[0] - 2.0 * nulls[0]).abs() < 1e-3);
        assert!(matches!(null_frequencies(0.0, 0.1, 1), Err(Error::VelocityMatched)));
        for f in nulls {
            assert!(response_db_at(0.2, 0.1, 0.0, f) < -200.0);
        }
    }

    #[test]
    fn response_at_dc_is_zero_db() {
        for dn in [-0.5, -0.01, 0.0, 0.2, 1.0] {
            assert!(response_db_at(dn, 0.2, 0.0, 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(response_curve(0.1, 0.1, |_| 0.0, &[]).is_err());
        assert!(response_curve(0.1, 0.1, |_| 0.0, &[2.0, 1.0]).is_err());
        assert!(response_curve(0.1, 0.1, |_| 0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn single_pole_bandwidth() {
        let grid = linspace(1e7, 5e9, 500);
        let fc = 1e9;
        let db: Vec<f64> = grid.iter().map(|f| -10.0 * (1.0 + (f / fc).powi(2)).log10()).collect();
        let step = grid[1] - grid[0];
        let curve = EOResponseCurve::from_data(grid, db).unwrap();
        let bw = bandwidth_3db(&curve).hz().unwrap();
        assert!((bw - fc).abs() < step, "bw = {bw}");
    }

    #[test]
    fn bandwidth_shrinks_with_mismatch() {
        let grid = linspace(1e8, 1e11, 1000);
        let mut last = f64::INFINITY;
        for dn in [0.005, 0.01, 0.02, 0.05, 0.1, 0.2] {
            let c = response_curve(dn, 0.2, |f| 0.5 * f / 1e9, &grid).unwrap();
            let bw = bandwidth_3db(&c).hz().unwrap();
            assert!(bw <= last, "dn = {dn}: {bw} > {last}");
            last = bw;
        }
    }

    #[test]
    fn refined_bandwidth_matches_sinc_root() {
        // lossless: m = sinc(x), x = ΔkL/2; solve sinc(x) = 10^(-3/20) independently
        let target = 10f64.powf(-3.0 / 20.0);
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.sin() / mid > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let (dn, l) = (0.01, 0.5);
        let expected = 2.0 * x * C0 / (2.0 * std::f64::consts::PI * dn * l);
        let grid = linspace(1e8, 1e11, 300);
        let c = response_curve(dn, l, |_| 0.0, &grid).unwrap();
        let bw = bandwidth_3db(&c).hz().unwrap();
        let m_at = response_db_at(dn, l, 0.0, bw);
        assert!((m_at + 3.0).abs() < 1e-9);
        assert!((bw - expected).abs() / expected < 1e-9);
    }

    proptest! {
        #[test]
        fn magnitude_symmetric_in_mismatch(alpha in 0.0..20.0f64, dk in -500.0..500.0f64, l in 0.01..1.0f64) {
            let a = response_factor(alpha, dk, l);
            let b = response_factor(alpha, -dk, l);
            prop_assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
        }

        #[test]
        fn lossless_is_sinc(dk in -2000.0..2000.0f64, l in 0.01..1.0f64) {
            let x = 0.5 * dk * l;
            let sinc = if x == 0.0 { 1.0 } else { (x.sin() / x).abs() };
            let m = response_factor(0.0, dk, l);
            prop_assert!((m - sinc).abs() <= 1e-12 * sinc.max(1e-3));
        }

        #[test]
        fn blue_and_red_share_magnitude(alpha in 0.0..20.0f64, dk in -500.0..500.0f64, z in 0.0..1.0f64) {
            let p = EnvelopeParams { g0: 1.3, pump_amplitude: 0.7, microwave_amplitude: 2.0, v_o: 1.3e8, alpha_o: 3.0, alpha_m: alpha, delta_k: dk };
            let e = sideband_envelope(&p, z);
            prop_assert!((e.blue.norm() - e.red.norm()).abs() <= 1e-14 * e.blue.norm().max(1e-300));
        }

        #[test]
        fn microwave_independent_of_coupling(g0 in 0.0..100.0f64, alpha in 0.0..20.0f64, z in 0.0..1.0f64) {
            let base = EnvelopeParams { g0: 0.0, pump_amplitude: 1.0, microwave_amplitude: 1.5, v_o: 1.3e8, alpha_o: 3.0, alpha_m: alpha, delta_k: 10.0 };
            let coupled = EnvelopeParams { g0, ..base };
            prop_assert_eq!(sideband_envelope(&base, z).microwave, sideband_envelope(&coupled, z).microwave);
        }

        #[test]
        fn matched_envelope_power_follows_square_law(exp in -3.0..0.0f64) {
            let l = 10f64.powf(exp);
            let p = EnvelopeParams { g0: 1.0, pump_amplitude: 1.0, microwave_amplitude: 1.0, v_o: 1.0, alpha_o: 0.0, alpha_m: 0.0, delta_k: 0.0 };
            let power = sideband_envelope(&p, l).blue.norm_sqr();
            prop_assert!((power / (l * l) - 1.0).abs() < 1e-12);
        }
    }
}
