//! Physical constants and unit conversions.
//!
//! Energies are carried in eV and times in seconds unless a name says
//! otherwise. Time-tag streams use integer femtosecond ticks.

/// Planck constant in eV·s (CODATA, exact by SI definition).
pub const PLANCK_EV_S: f64 = 4.135_667_696e-15;

/// Reduced Planck constant in eV·s.
pub const HBAR_EV_S: f64 = PLANCK_EV_S / (2.0 * std::f64::consts::PI);

/// Femtosecond ticks per second; the resolution of time-tag timestamps.
pub const TICKS_PER_SECOND: f64 = 1.0e15;

/// Femtoseconds per tick (the stream header value).
pub const TIME_UNIT_FS: u64 = 1;

pub const NS: f64 = 1.0e-9;
pub const US: f64 = 1.0e-6;
pub const PS: f64 = 1.0e-12;

/// Convert a time in seconds to integer ticks, rounding to nearest.
#[inline]
pub fn seconds_to_ticks(t: f64) -> u64 {
    (t * TICKS_PER_SECOND).round().max(0.0) as u64
}

/// Convert integer ticks back to seconds.
#[inline]
pub fn ticks_to_seconds(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND
}
