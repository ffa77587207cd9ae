//! Jones-calculus model of the cross-polarized confocal setup.
//!
//! The excitation laser enters through a polarizer, half-wave plate and
//! quarter-wave plate, reflects off the sample (a polarization-preserving
//! mirror), and returns through a mirrored waveplate pair and an
//! orthogonal polarizer. With every fast axis at zero the output port is
//! dark; rotating the input quarter-wave plate by a small angle leaks a
//! local oscillator whose amplitude and phase both depend on the angle
//! sign. Coherent scattering off the emitter interferes with that local
//! oscillator and produces Fano-shaped sweep spectra.
//!
//! Field amplitudes are reported in a gauge where the common output-path
//! phase (the `-i` the crossed analyzer chain applies to everything) is
//! divided out, so the local oscillator of the baseline chain obeys the
//! closed form `(1 - i) sin(dtheta) cos(dtheta) e0` and the detected
//! scattering projection is the real `1/sqrt(2)`. Intensities are
//! unaffected.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coherent-scatterer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererParams {
    /// Transition linewidth as an energy (eV).
    pub gamma_ev: f64,
    /// Fluorescence efficiency, in [0, 1].
    pub mu: f64,
    /// Excitation field amplitude (arbitrary units).
    pub e0: f64,
    /// Saturation power of the resonant drive (nW).
    pub psat_nw: f64,
}

impl ScattererParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_ev > 0.0) {
            return Err(Error::domain("linewidth must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::domain("fluorescence efficiency must lie in [0, 1]"));
        }
        if self.e0 < 0.0 {
            return Err(Error::domain("field amplitude must be non-negative"));
        }
        if !(self.psat_nw > 0.0) {
            return Err(Error::domain("saturation power must be positive"));
        }
        Ok(())
    }
}

/// One element of the optical chain; angles are fast-axis (or
/// transmission-axis) angles from horizontal, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpticalElement {
    Polarizer { angle: f64 },
    HalfWave { angle: f64 },
    QuarterWave { angle: f64 },
}

impl OpticalElement {
    pub fn angle(&self) -> f64 {
        match *self {
            OpticalElement::Polarizer { angle }
            | OpticalElement::HalfWave { angle }
            | OpticalElement::QuarterWave { angle } => angle,
        }
    }
}

/// Jones matrix of a single element.
///
/// `QWP(t) = R(-t) diag(1, i) R(t)`, `HWP(t) = R(-t) diag(1, -1) R(t)`,
/// and a polarizer projects onto its transmission axis.
pub fn jones_element(element: &OpticalElement) -> Matrix2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let (retarder, angle) = match *element {
        OpticalElement::Polarizer { angle } => {
            let (s, c) = angle.sin_cos();
            return Matrix2::new(
                Complex64::new(c * c, 0.0),
                Complex64::new(c * s, 0.0),
                Complex64::new(c * s, 0.0),
                Complex64::new(s * s, 0.0),
            );
        }
        OpticalElement::HalfWave { angle } => (Complex64::new(-1.0, 0.0), angle),
        OpticalElement::QuarterWave { angle } => (Complex64::new(0.0, 1.0), angle),
    };
    let (s, c) = angle.sin_cos();
    let rot = Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(c, 0.0),
    );
    let rot_back = Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    );
    rot_back * Matrix2::new(one, Complex64::ZERO, Complex64::ZERO, retarder) * rot
}

/// The excitation and collection optics around the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalChain {
    /// Elements the excitation passes through, source to sample.
    pub input: Vec<OpticalElement>,
    /// Elements the reflected light passes through, sample to detector.
    pub output: Vec<OpticalElement>,
}

impl OpticalChain {
    pub fn new(input: Vec<OpticalElement>, output: Vec<OpticalElement>) -> Result<Self> {
        let chain = Self { input, output };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .input
            .first()
            .ok_or_else(|| Error::domain("input chain must not be empty"))?;
        let last = self
            .output
            .last()
            .ok_or_else(|| Error::domain("output chain must not be empty"))?;
        match (first, last) {
            (
                OpticalElement::Polarizer { angle: a_in },
                OpticalElement::Polarizer { angle: a_out },
            ) => {
                let diff = (a_out - a_in).rem_euclid(std::f64::consts::PI);
                if (diff - std::f64::consts::FRAC_PI_2).abs() > 1e-9 {
                    return Err(Error::domain(
                        "chain polarizers must be in the crossed configuration",
                    ));
                }
                Ok(())
            }
            _ => Err(Error::domain("chain must start and end with polarizers")),
        }
    }

    /// Cross-polarized baseline: polarizers at H/V, every fast axis at 0.
    pub fn cross_polarized() -> Self {
        Self {
            input: vec![
                OpticalElement::Polarizer { angle: 0.0 },
                OpticalElement::HalfWave { angle: 0.0 },
                OpticalElement::QuarterWave { angle: 0.0 },
            ],
            output: vec![
                OpticalElement::QuarterWave { angle: 0.0 },
                OpticalElement::HalfWave { angle: 0.0 },
                OpticalElement::Polarizer {
                    angle: std::f64::consts::FRAC_PI_2,
                },
            ],
        }
    }

    fn input_with_qwp_offset(&self, dtheta: f64) -> Result<Vec<OpticalElement>> {
        let idx = self
            .input
            .iter()
            .rposition(|e| matches!(e, OpticalElement::QuarterWave { .. }))
            .ok_or_else(|| Error::domain("input chain has no quarter-wave plate to rotate"))?;
        let mut elements = self.input.clone();
        if let OpticalElement::QuarterWave { angle } = elements[idx] {
            elements[idx] = OpticalElement::QuarterWave {
                angle: angle + dtheta,
            };
        }
        Ok(elements)
    }

    fn matrix(elements: &[OpticalElement]) -> Matrix2<Complex64> {
        elements
            .iter()
            .fold(Matrix2::identity(), |acc, e| jones_element(e) * acc)
    }

    /// Unit phase of the output path's V -> V amplitude; dividing by it
    /// fixes the gauge described at module level.
    fn output_gauge(&self) -> Result<Complex64> {
        let m = Self::matrix(&self.output);
        let vv = m[(1, 1)];
        let n = vv.norm();
        if n < 1e-12 {
            return Err(Error::domain("output chain blocks vertical polarization"));
        }
        Ok(vv / n)
    }
}

/// Extinction of the crossed polarizers at the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extinction {
    /// Perfect rejection: the null is exactly dark.
    Ideal,
    /// Finite intensity extinction ratio; the residual leakage amplitude
    /// `e0 / sqrt(ratio)` adds to the local oscillator.
    Finite { ratio: f64 },
}

impl Default for Extinction {
    fn default() -> Self {
        Extinction::Finite { ratio: 1e6 }
    }
}

/// Coherently scattered field `gamma / (-i delta + gamma/2) sqrt(mu) e0`.
pub fn rf_field(delta_ev: f64, p: &ScattererParams) -> Result<Complex64> {
    p.validate()?;
    let denom = Complex64::new(p.gamma_ev / 2.0, -delta_ev);
    Ok(Complex64::new(p.gamma_ev, 0.0) / denom * p.mu.sqrt() * p.e0)
}

/// Local-oscillator amplitude leaked through the crossed analyzer when
/// the input quarter-wave plate sits `dtheta` radians off the null.
pub fn lo_field(
    dtheta: f64,
    chain: &OpticalChain,
    e0: f64,
    extinction: Extinction,
) -> Result<Complex64> {
    if dtheta.abs() >= std::f64::consts::FRAC_PI_4 {
        return Err(Error::domain("waveplate offset must satisfy |dtheta| < pi/4"));
    }
    chain.validate()?;
    let input = chain.input_with_qwp_offset(dtheta)?;
    let full = OpticalChain::matrix(&chain.output) * OpticalChain::matrix(&input);
    let source = Vector2::new(Complex64::new(e0, 0.0), Complex64::ZERO);
    let v_amp = (full * source)[1];
    let mut lo = v_amp / chain.output_gauge()?;
    if let Extinction::Finite { ratio } = extinction {
        if !(ratio > 0.0) {
            return Err(Error::domain("extinction ratio must be positive"));
        }
        lo += Complex64::new(e0 / ratio.sqrt(), 0.0);
    }
    Ok(lo)
}

/// Coherent-amplitude saturation factor `1 / (1 + s)` with
/// `s = (power/psat) / (1 + (2 delta / gamma)^2)`.
pub fn saturation_factor(power_nw: f64, delta_ev: f64, p: &ScattererParams) -> f64 {
    debug_assert!(power_nw >= 0.0 && p.psat_nw > 0.0);
    let norm = 2.0 * delta_ev / p.gamma_ev;
    let s = (power_nw / p.psat_nw) / (1.0 + norm * norm);
    1.0 / (1.0 + s)
}

/// Projection of the emitter dipole (fixed at 45 degrees to horizontal)
/// onto the detected vertical polarization.
pub const DIPOLE_PROJECTION: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Interference sweep at fixed waveplate offset.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramTrace {
    pub detunings_ev: Vec<f64>,
    pub i_tot: Vec<f64>,
    /// Local-oscillator intensity; detuning-independent in this model.
    pub i_lo: f64,
    /// `(i_tot - i_lo) / i_lo`; NaN entries when the LO vanishes.
    pub visibility: Vec<f64>,
    /// False when `i_lo` is zero and the visibility is undefined.
    pub visibility_defined: bool,
}

impl InterferogramTrace {
    /// Intensity difference `i_tot - i_lo` per detuning.
    pub fn i_diff(&self) -> Vec<f64> {
        self.i_tot.iter().map(|v| v - self.i_lo).collect()
    }

    /// Number of sign changes of `i_diff` across the sweep, ignoring
    /// values below `tol`.
    pub fn sign_changes(&self, tol: f64) -> usize {
        let mut last: Option<bool> = None;
        let mut changes = 0;
        for d in self.i_diff() {
            if d.abs() <= tol {
                continue;
            }
            let s = d > 0.0;
            if let Some(prev) = last {
                if prev != s {
                    changes += 1;
                }
            }
            last = Some(s);
        }
        changes
    }
}

/// Sweep the scatterer across `detunings` with the input quarter-wave
/// plate offset by `dtheta`, mixing the saturated coherent scattering
/// with the leaked local oscillator.
pub fn interferogram(
    detunings_ev: &[f64],
    dtheta: f64,
    power_nw: f64,
    p: &ScattererParams,
    chain: &OpticalChain,
    extinction: Extinction,
) -> Result<InterferogramTrace> {
    if detunings_ev.is_empty() {
        return Err(Error::domain("detuning sweep must not be empty"));
    }
    if power_nw < 0.0 {
        return Err(Error::domain("power must be non-negative"));
    }
    let lo = lo_field(dtheta, chain, p.e0, extinction)?;
    let i_lo = lo.norm_sqr();
    let mut i_tot = Vec::with_capacity(detunings_ev.len());
    let mut visibility = Vec::with_capacity(detunings_ev.len());
    let defined = i_lo > 0.0;
    for &delta in detunings_ev {
        let sat = saturation_factor(power_nw, delta, p);
        let detected = lo + rf_field(delta, p)? * (DIPOLE_PROJECTION * sat);
        let tot = detected.norm_sqr();
        i_tot.push(tot);
        visibility.push(if defined { (tot - i_lo) / i_lo } else { f64::NAN });
    }
    Ok(InterferogramTrace {
        detunings_ev: detunings_ev.to_vec(),
        i_tot,
        i_lo,
        visibility,
        visibility_defined: defined,
    })
}

/// One row of the angle-resolved interference map.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramMapRow {
    pub dtheta_rad: f64,
    pub trace: InterferogramTrace,
}

/// Sweep both the waveplate offset and the detuning (the 2-D map of the
/// interference structure).
pub fn interferogram_map(
    dthetas_rad: &[f64],
    detunings_ev: &[f64],
    power_nw: f64,
    p: &ScattererParams,
    chain: &OpticalChain,
    extinction: Extinction,
) -> Result<Vec<InterferogramMapRow>> {
    dthetas_rad
        .iter()
        .map(|&dtheta| {
            Ok(InterferogramMapRow {
                dtheta_rad: dtheta,
                trace: interferogram(detunings_ev, dtheta, power_nw, p, chain, extinction)?,
            })
        })
        .collect()
}
