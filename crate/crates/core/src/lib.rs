//! Simulation and analysis toolkit for the photophysics of a resonantly
//! driven single quantum emitter.
//!
//! The crate closes a simulate→analyze→verify loop around one emitter:
//!
//! * [`spectral`] — closed-form lineshapes (Lorentzian, Gaussian, Voigt),
//!   lifetime-limited linewidths and the Debye-Waller factor.
//! * [`correlation`] — second-order correlation models (antibunching ×
//!   blinking), telegraph-rate algebra, background correction and the
//!   coincidence-histogram estimator over photon time-tag streams.
//! * [`interferometry`] — Jones-calculus model of the cross-polarized
//!   confocal setup: local-oscillator fields, Fano interference spectra
//!   and visibility.
//! * [`dynamics`] — deterministic charge-state kinetics of the
//!   {ground, excited, ionized} system under pulsed or CW drive.
//! * [`montecarlo`] — exact-event stochastic trajectories, photon
//!   detection and time-tag stream synthesis.
//! * [`fitting`] — Levenberg-Marquardt engine plus the registry of model
//!   functions used by the analysis layer.
//! * [`io`] — run configuration, CSV/JSON/binary formats and reports.
//! * [`preset`] — the reference parameter bundle used for round trips.
//! * [`acceptance`] — the end-to-end verification suite.

pub mod acceptance;
pub mod constants;
pub mod correlation;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod interferometry;
pub mod io;
pub mod montecarlo;
pub mod preset;
pub mod spectral;

pub use error::{Error, Result};
