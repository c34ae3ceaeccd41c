//! Shot-noise-limited eye statistics for small-drive on-off keying.
//!
//! The MZI transmission is `sin²(φ/2)` with φ = 0 at the null. A drive of
//! peak-to-peak `V_pp` moves the phase between `bias ± π V_pp / (2 Vπ)`.
//! Photon numbers per bit follow from the peak-transmission power at the
//! detector; the SNR is `(n2 - n1) / (sqrt(n1) + sqrt(n2))` and the BER uses
//! the Gaussian Q approximation `½ erfc(Q/√2)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::OperatingPoint;
use crate::error::{invalid, Error, Result};

/// Poisson means below this are sampled by exact inversion, above by a
/// rounded normal approximation.
pub const POISSON_EXACT_LIMIT: f64 = 30.0;

/// Bits per independent RNG stream in the Monte Carlo eye.
pub const MC_BATCH_BITS: usize = 8192;

/// Transmission of an MZI at total phase `bias + drive`.
pub fn mzi_transmission(bias_phase: f64, drive_phase: f64) -> f64 {
    let s = (0.5 * (bias_phase + drive_phase)).sin();
    s * s
}

/// Drive phase produced by a voltage `v` on a modulator with half-wave voltage `v_pi`.
pub fn drive_phase(v: f64, v_pi: f64) -> f64 {
    PI * v / v_pi
}

/// Maximal-length 7-bit Fibonacci LFSR, polynomial x⁷ + x⁶ + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prbs7State {
    lfsr: u8,
}

impl Prbs7State {
    pub const PERIOD: usize = 127;

    pub fn new(seed: u8) -> Result<Self> {
        let lfsr = seed & 0x7f;
        if lfsr == 0 {
            return Err(invalid("prbs7 seed", "all-zero state locks the register"));
        }
        Ok(Self { lfsr })
    }

    pub fn state(&self) -> u8 {
        self.lfsr
    }

    /// Returns the output bit and the advanced state.
    pub fn next_bit(self) -> (bool, Self) {
        let out = (self.lfsr >> 6) & 1;
        let feedback = ((self.lfsr >> 6) ^ (self.lfsr >> 5)) & 1;
        let lfsr = ((self.lfsr << 1) | feedback) & 0x7f;
        (out == 1, Self { lfsr })
    }
}

impl Default for Prbs7State {
    fn default() -> Self {
        Self { lfsr: 0x7f }
    }
}

impl Iterator for Prbs7State {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        let (bit, next) = self.next_bit();
        *self = next;
        Some(bit)
    }
}

/// Free-function form of [`Prbs7State::next_bit`].
pub fn prbs7_next(state: Prbs7State) -> (bool, Prbs7State) {
    state.next_bit()
}

/// Optional departures from the ideal receiver, all zero by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Impairments {
    /// Multiplicative SNR penalty (dB, 10 log10 convention), e.g. EDFA noise figure.
    pub snr_penalty_db: f64,
    /// Fixed bias drift added to the nominal bias (rad).
    pub bias_offset: f64,
}

impl Impairments {
    fn snr_factor(&self) -> f64 {
        10f64.powf(-self.snr_penalty_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitSample {
    pub bit: bool,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeResult {
    /// Mean photons per bit on the lower rail.
    pub n1_mean: f64,
    /// Mean photons per bit on the upper rail.
    pub n2_mean: f64,
    pub snr: f64,
    pub ber: f64,
    /// Standard error of the empirical SNR (Monte Carlo only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_std_err: Option<f64>,
    /// Per-bit detected photon counts (Monte Carlo only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<BitSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `½ erfc(q / √2)`.
pub fn ber_from_q(q: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(q / std::f64::consts::SQRT_2)
}

/// Photons per bit at full transmission.
pub fn peak_photons_per_bit(p_peak: f64, wavelength: f64, bit_rate: f64) -> f64 {
    let photon_energy = crate::constants::HBAR * 2.0 * PI * crate::constants::C0 / wavelength;
    p_peak / (photon_energy * bit_rate)
}

/// Expected photon numbers of the (bit 0, bit 1) rails.
fn rail_means(op: &OperatingPoint, v_pi: f64, peak_photons: f64, bias_offset: f64) -> (f64, f64) {
    let half_swing = 0.5 * drive_phase(op.v_pp, v_pi);
    let bias = op.bias_phase + bias_offset;
    (
        peak_photons * mzi_transmission(bias, -half_swing),
        peak_photons * mzi_transmission(bias, half_swing),
    )
}

fn snr_from_rails(lo: f64, hi: f64) -> f64 {
    let noise = lo.sqrt() + hi.sqrt();
    if noise == 0.0 {
        0.0
    } else {
        (hi - lo) / noise
    }
}

fn check_eye_inputs(op: &OperatingPoint, v_pi: f64, p_peak: f64, wavelength: f64) -> Result<()> {
    if !(v_pi > 0.0) {
        return Err(invalid("v_pi", "must be > 0"));
    }
    if !(p_peak >= 0.0) {
        return Err(invalid("p_peak", "must be >= 0"));
    }
    if !(wavelength > 0.0) {
        return Err(invalid("wavelength", "must be > 0"));
    }
    if !(op.bit_rate > 0.0) {
        return Err(invalid("bit_rate", "must be > 0"));
    }
    if !(op.v_pp >= 0.0 && op.v_pp < 2.0 * v_pi) {
        return Err(invalid("v_pp", "must satisfy 0 <= V_pp < 2 Vπ"));
    }
    Ok(())
}

/// Analytic shot-noise SNR and BER at the operating point.
///
/// `p_peak` is the detector power at peak MZI transmission.
pub fn analytic_snr(op: &OperatingPoint, v_pi: f64, p_peak: f64, wavelength: f64) -> Result<EyeResult> {
    analytic_snr_with(op, v_pi, p_peak, wavelength, &Impairments::default())
}

pub fn analytic_snr_with(
    op: &OperatingPoint,
    v_pi: f64,
    p_peak: f64,
    wavelength: f64,
    imp: &Impairments,
) -> Result<EyeResult> {
    check_eye_inputs(op, v_pi, p_peak, wavelength)?;
    let n_peak = peak_photons_per_bit(p_peak, wavelength, op.bit_rate);
    let (a, b) = rail_means(op, v_pi, n_peak, imp.bias_offset);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let snr = snr_from_rails(lo, hi) * imp.snr_factor();
    Ok(EyeResult {
        n1_mean: lo,
        n2_mean: hi,
        snr,
        ber: ber_from_q(snr),
        snr_std_err: None,
        samples: Vec::new(),
        seed: None,
    })
}

fn sample_poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < POISSON_EXACT_LIMIT {
        // inversion by sequential search of the CDF
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p < 1e-300 && cdf >= 1.0 - 1e-16 {
                break;
            }
        }
        k
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0) as u64
    }
}

/// Running count/mean/M2, mergeable in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RailStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RailStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: RailStats) -> RailStats {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        RailStats { count, mean, m2 }
    }

    /// Sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Parameters of a Monte Carlo eye run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub n_bits: usize,
    pub seed: u64,
    /// Keep per-bit counts in the result.
    pub keep_samples: bool,
    pub impairments: Impairments,
}

/// PRBS7-driven Poisson eye. Deterministic for a given seed.
///
/// Bits are split into batches of [`MC_BATCH_BITS`]; batch `k` draws from a
/// ChaCha8 stream seeded with `seed` and stream id `k`, so the result does not
/// depend on how batches are scheduled across threads.
pub fn monte_carlo_eye(
    op: &OperatingPoint,
    v_pi: f64,
    p_peak: f64,
    wavelength: f64,
    cfg: &MonteCarloConfig,
) -> Result<EyeResult> {
    check_eye_inputs(op, v_pi, p_peak, wavelength)?;
    if cfg.n_bits < 1000 {
        return Err(Error::InvalidInput(format!(
            "n_bits must be at least 1000, got {}",
            cfg.n_bits
        )));
    }
    let n_peak = peak_photons_per_bit(p_peak, wavelength, op.bit_rate);
    let (mean0, mean1) = rail_means(op, v_pi, n_peak, cfg.impairments.bias_offset);
    let bits: Vec<bool> = Prbs7State::default().take(cfg.n_bits).collect();

    let batches: Vec<(RailStats, RailStats, Vec<BitSample>)> = bits
        .par_chunks(MC_BATCH_BITS)
        .enumerate()
        .map(|(k, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut zero = RailStats::default();
            let mut one = RailStats::default();
            let mut samples = Vec::with_capacity(if cfg.keep_samples { chunk.len() } else { 0 });
            for &bit in chunk {
                let count = sample_poisson(&mut rng, if bit { mean1 } else { mean0 });
                if bit {
                    one.push(count as f64);
                } else {
                    zero.push(count as f64);
                }
                if cfg.keep_samples {
                    samples.push(BitSample { bit, count });
                }
            }
            (zero, one, samples)
        })
        .collect();

    let mut zero = RailStats::default();
    let mut one = RailStats::default();
    let mut samples = Vec::new();
    for (z, o, s) in batches {
        zero = zero.merge(z);
        one = one.merge(o);
        samples.extend(s);
    }
    let (lo, hi) = if zero.mean <= one.mean { (zero, one) } else { (one, zero) };
    let (snr, se) = empirical_snr(&lo, &hi);
    let snr = snr * cfg.impairments.snr_factor();
    let se = se * cfg.impairments.snr_factor();
    Ok(EyeResult {
        n1_mean: lo.mean,
        n2_mean: hi.mean,
        snr,
        ber: ber_from_q(snr),
        snr_std_err: Some(se),
        samples,
        seed: Some(cfg.seed),
    })
}

/// `(μ2 - μ1)/(σ1 + σ2)` with a delta-method standard error (normal rails:
/// var(μ̂) = σ²/n, var(σ̂) ≈ σ²/(2n)).
fn empirical_snr(lo: &RailStats, hi: &RailStats) -> (f64, f64) {
    let s1 = lo.variance().sqrt();
    let s2 = hi.variance().sqrt();
    let noise = s1 + s2;
    if noise == 0.0 {
        return (0.0, 0.0);
    }
    let diff = hi.mean - lo.mean;
    let snr = diff / noise;
    let n1 = lo.count.max(1) as f64;
    let n2 = hi.count.max(1) as f64;
    let var_diff = s1 * s1 / n1 + s2 * s2 / n2;
    let var_noise = s1 * s1 / (2.0 * n1) + s2 * s2 / (2.0 * n2);
    let var = var_diff / (noise * noise) + (diff * diff) * var_noise / noise.powi(4);
    (snr, var.sqrt())
}

/// Bias maximizing the analytic SNR over (0, π], by golden-section search.
pub fn optimal_bias(op: &OperatingPoint, v_pi: f64, p_peak: f64, wavelength: f64) -> Result<(f64, f64)> {
    if !(op.v_pp > 0.0) {
        return Err(invalid("v_pp", "optimal bias requires a nonzero drive"));
    }
    check_eye_inputs(op, v_pi, p_peak, wavelength)?;
    let snr_at = |bias: f64| {
        let probe = OperatingPoint { bias_phase: bias, ..*op };
        analytic_snr(&probe, v_pi, p_peak, wavelength).map(|r| r.snr).unwrap_or(0.0)
    };
    const TOL: f64 = 1e-6;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, PI);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (snr_at(c), snr_at(d));
    while b - a > TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = snr_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = snr_at(d);
        }
    }
    let bias = 0.5 * (a + b);
    Ok((bias, snr_at(bias)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAMBDA: f64 = 1550e-9;

    fn op(v_pp: f64, bias: f64) -> OperatingPoint {
        OperatingPoint {
            temperature: 4.0,
            p_opt_in: 0.0,
            bias_phase: bias,
            v_pp,
            bit_rate: 1e9,
            f_mod: 0.0,
        }
    }

    #[test]
    fn transmission_convention() {
        assert!((mzi_transmission(PI, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(mzi_transmission(0.0, 0.0), 0.0);
        assert!((mzi_transmission(PI / 2.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((drive_phase(0.5, 1.0) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn prbs7_period_and_balance() {
        for seed in [1u8, 0x2a, 0x55, 0x7f] {
            let start = Prbs7State::new(seed).unwrap();
            let mut s = start;
            let mut ones = 0;
            for i in 1..=Prbs7State::PERIOD {
                let (bit, next) = prbs7_next(s);
                ones += bit as usize;
                s = next;
                if i < Prbs7State::PERIOD {
                    assert_ne!(s, start, "premature repeat at {i}");
                }
            }
            assert_eq!(s, start);
            assert_eq!(ones, 64);
        }
        assert!(Prbs7State::new(0).is_err());
        assert!(Prbs7State::new(0x80).is_err());
    }

    #[test]
    fn prbs7_deterministic() {
        let a: Vec<bool> = Prbs7State::new(9).unwrap().take(500).collect();
        let b: Vec<bool> = Prbs7State::new(9).unwrap().take(500).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn snr_definition_examples() {
        assert_eq!(snr_from_rails(0.0, 100.0), 10.0);
        assert_eq!(snr_from_rails(100.0, 400.0), 10.0);
        let closed = analytic_snr(&op(0.0, 1.0), 1.0, 1e-3, LAMBDA).unwrap();
        assert_eq!(closed.snr, 0.0);
        assert_eq!(closed.ber, 0.5);
    }

    #[test]
    fn ber_examples() {
        assert_eq!(ber_from_q(0.0), 0.5);
        assert!((ber_from_q(6.0) / 9.865876e-10 - 1.0).abs() < 1e-5);
        assert!((ber_from_q(2.01) - 2.2e-2).abs() < 5e-4);
    }

    #[test]
    fn rejects_overdrive_and_short_runs() {
        assert!(analytic_snr(&op(2.0, 1.0), 1.0, 1e-3, LAMBDA).is_err());
        let cfg = MonteCarloConfig { n_bits: 999, seed: 1, keep_samples: false, impairments: Impairments::default() };
        assert!(monte_carlo_eye(&op(0.01, 1.0), 1.0, 1e-3, LAMBDA, &cfg).is_err());
    }

    #[test]
    fn optimal_bias_between_null_and_quadrature() {
        for ratio in [0.01, 0.05, 0.2, 0.45] {
            let o = op(ratio, 0.0);
            let (bias, snr) = optimal_bias(&o, 1.0, 5e-4, LAMBDA).unwrap();
            assert!(bias > 0.0 && bias < PI / 2.0, "ratio {ratio}: bias {bias}");
            // grid oracle
            let best = (1..=20_000)
                .map(|k| {
                    let b = PI * k as f64 / 20_000.0;
                    analytic_snr(&op(ratio, b), 1.0, 5e-4, LAMBDA).unwrap().snr
                })
                .fold(0.0, f64::max);
            assert!(snr >= best * (1.0 - 1e-6));
            let quad = analytic_snr(&op(ratio, PI / 2.0), 1.0, 5e-4, LAMBDA).unwrap().snr;
            assert!(snr >= quad);
        }
    }

    #[test]
    fn theoretical_limit_near_forty() {
        let (_, snr) = optimal_bias(&op(0.01, 0.0), 1.0, 5e-4, LAMBDA).unwrap();
        assert!((30.0..=60.0).contains(&snr), "snr = {snr}");
    }

    #[test]
    fn impairments_reduce_snr() {
        let imp = Impairments { snr_penalty_db: 3.0, bias_offset: 0.0 };
        let clean = analytic_snr(&op(0.01, 0.2), 1.0, 5e-4, LAMBDA).unwrap();
        let noisy = analytic_snr_with(&op(0.01, 0.2), 1.0, 5e-4, LAMBDA, &imp).unwrap();
        assert!((noisy.snr / clean.snr - 10f64.powf(-0.3)).abs() < 1e-12);
    }

    #[test]
    fn poisson_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mean in [0.5, 5.0, 29.0, 31.0, 400.0] {
            let mut s = RailStats::default();
            for _ in 0..200_000 {
                s.push(sample_poisson(&mut rng, mean) as f64);
            }
            let se = (mean / 200_000.0).sqrt();
            assert!((s.mean - mean).abs() < 5.0 * se, "mean {mean}: {}", s.mean);
            assert!((s.variance() / mean - 1.0).abs() < 0.03, "mean {mean}: var {}", s.variance());
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let cfg = MonteCarloConfig { n_bits: 20_000, seed: 42, keep_samples: true, impairments: Impairments::default() };
        let a = monte_carlo_eye(&op(0.05, 0.3), 1.0, 1e-4, LAMBDA, &cfg).unwrap();
        let b = monte_carlo_eye(&op(0.05, 0.3), 1.0, 1e-4, LAMBDA, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 20_000);
        let other = MonteCarloConfig { seed: 43, ..cfg };
        assert_ne!(a.samples, monte_carlo_eye(&op(0.05, 0.3), 1.0, 1e-4, LAMBDA, &other).unwrap().samples);
    }

    #[test]
    fn rail_merge_is_associative() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        let mut whole = RailStats::default();
        xs.iter().for_each(|&x| whole.push(x));
        let part = |r: &[f64]| {
            let mut s = RailStats::default();
            r.iter().for_each(|&x| s.push(x));
            s
        };
        let (a, b, c) = (part(&xs[..50]), part(&xs[50..170]), part(&xs[170..]));
        let left = a.merge(b).merge(c);
        let right = a.merge(b.merge(c));
        assert_eq!(left.count, whole.count);
        assert!((left.mean - whole.mean).abs() < 1e-12);
        assert!((left.variance() - right.variance()).abs() < 1e-9);
        assert!((left.variance() - whole.variance()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn ber_monotone_and_bounded(q1 in 0.0..20.0f64, dq in 1e-3..5.0f64) {
            let a = ber_from_q(q1);
            let b = ber_from_q(q1 + dq);
            prop_assert!(a <= 0.5 && a > 0.0 || q1 > 37.0);
            prop_assert!(b < a);
        }

        #[test]
        fn rails_respect_energy(bias in 0.0..PI, ratio in 0.0..1.9f64, p in 1e-6..1e-2f64, rate in 1e8..1e11f64) {
            let o = OperatingPoint { bit_rate: rate, ..op(ratio, bias) };
            let r = analytic_snr(&o, 1.0, p, LAMBDA).unwrap();
            let n_peak = peak_photons_per_bit(p, LAMBDA, rate);
            prop_assert!(r.n1_mean <= r.n2_mean);
            prop_assert!(r.n2_mean <= n_peak * (1.0 + 1e-12));
            prop_assert!(r.snr >= 0.0 && r.ber <= 0.5 && r.ber >= 0.0);
        }

        #[test]
        fn snr_invariant_under_power_rate_scaling(c in 0.1..10.0f64, bias in 0.01..3.0f64) {
            let a = analytic_snr(&op(0.02, bias), 1.0, 1e-3, LAMBDA).unwrap().snr;
            let o = OperatingPoint { bit_rate: c * 1e9, ..op(0.02, bias) };
            let b = analytic_snr(&o, 1.0, c * 1e-3, LAMBDA).unwrap().snr;
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }

        #[test]
        fn optimum_follows_square_root_law(p in 1e-5..1e-2f64, rate in 1e8..1e10f64, ratio in 0.002..0.05f64) {
            let o = OperatingPoint { bit_rate: rate, ..op(ratio, 0.0) };
            let (_, snr) = optimal_bias(&o, 1.0, p, LAMBDA).unwrap();
            let predicted = peak_photons_per_bit(p, LAMBDA, rate).sqrt() * PI * ratio / 2.0;
            prop_assert!((snr / predicted - 1.0).abs() < 0.01);
        }
    }
}
