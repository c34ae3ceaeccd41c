//! Modeling toolkit for traveling-wave electro-optic modulators built on
//! superconducting transmission lines.
//!
//! The crate is organized by subsystem:
//!
//! - [`device`]: per-unit-length line physics (kinetic inductance, index,
//!   impedance, loss) and the device description types.
//! - [`transfer`]: Vπ arithmetic, coupling strength, transduction efficiency,
//!   optimal length and energy per bit.
//! - [`response`]: phase mismatch, sideband envelopes and the normalized EO
//!   frequency response with 3 dB bandwidth and null extraction.
//! - [`eye`]: shot-noise-limited SNR/BER for small-drive on-off keying, PRBS7
//!   sources and Monte Carlo eye statistics.
//! - [`fitting`]: least-squares extraction of line and waveguide parameters
//!   from measured traces.
//! - [`sweep`]: streaming design-space sweeps.
//! - [`config`]: the unit-suffixed TOML configuration format.
//! - [`trace`]: two-column CSV trace ingestion.
//!
//! All internal quantities are SI. Convenience units (nH/cm, dB/cm, V·cm, ...)
//! are only accepted at ingestion, see [`units`].

// NaN-rejecting range checks read as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constants;
pub mod device;
pub mod error;
pub mod eye;
pub mod fitting;
pub mod response;
pub mod sweep;
pub mod trace;
pub mod transfer;
pub mod units;

pub use device::{Device, ModulatorDesign, OperatingPoint, OpticalWaveguide, SuperconductingLine};
pub use error::{Error, Result};
