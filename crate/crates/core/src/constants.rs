//! Physical constants (CODATA 2018, exact where defined).

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Power-decibels per neper: 10/ln(10).
pub const DB_PER_NEPER: f64 = 4.342_944_819_032_518;

/// Converts a power attenuation in dB (per unit length) to nepers.
#[inline]
pub fn db_to_np(db: f64) -> f64 {
    db / DB_PER_NEPER
}

/// Converts a power attenuation in nepers (per unit length) to dB.
#[inline]
pub fn np_to_db(np: f64) -> f64 {
    np * DB_PER_NEPER
}
