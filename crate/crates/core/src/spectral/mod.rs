//! Closed-form lineshape models: lifetime-limited linewidth, zero-phonon-line
//! Lorentzian plus phonon-sideband Gaussian, Voigt profile and the
//! Debye-Waller factor.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

mod faddeeva;

pub use faddeeva::{re_w, w_faddeeva};

use crate::constants::PLANCK_EV_S;
use crate::error::{Error, Result};
use crate::montecarlo::rng::{derive_rng, StreamDomain};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const LN2: f64 = std::f64::consts::LN_2;

/// Parameters of a single spectral line.
///
/// `lorentz_fwhm` and `gauss_fwhm` are full widths at half maximum of the
/// Lorentzian and Gaussian components; `area` is the integrated intensity.
/// Everything is in eV except the dimensionless area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeParams {
    pub center: f64,
    pub lorentz_fwhm: f64,
    pub gauss_fwhm: f64,
    pub area: f64,
}

impl LineshapeParams {
    pub fn new(center: f64, lorentz_fwhm: f64, gauss_fwhm: f64, area: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::domain("lineshape center must be finite"));
        }
        if lorentz_fwhm < 0.0 || gauss_fwhm < 0.0 {
            return Err(Error::domain("lineshape widths must be non-negative"));
        }
        if area < 0.0 {
            return Err(Error::domain("lineshape area must be non-negative"));
        }
        Ok(Self {
            center,
            lorentz_fwhm,
            gauss_fwhm,
            area,
        })
    }
}

/// A sampled spectrum: strictly increasing energies with non-negative
/// intensities of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub energies: Vec<f64>,
    pub intensities: Vec<f64>,
}

impl SpectrumTrace {
    pub fn new(energies: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        if energies.len() != intensities.len() {
            return Err(Error::domain("spectrum arrays must have equal length"));
        }
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("spectrum energies must strictly increase"));
        }
        if intensities.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("spectrum intensities must be finite and >= 0"));
        }
        Ok(Self {
            energies,
            intensities,
        })
    }
}

/// Lifetime-limited linewidth h / (2 pi tau_rad), returned as an eV FWHM.
pub fn lifetime_limited_linewidth(tau_rad_s: f64) -> Result<f64> {
    if !(tau_rad_s > 0.0) {
        return Err(Error::domain("radiative lifetime must be positive"));
    }
    Ok(PLANCK_EV_S / (2.0 * std::f64::consts::PI * tau_rad_s))
}

/// Area-normalized Lorentzian scaled by `p.area`.
///
/// Peak value is `2 area / (pi fwhm)`; the Gaussian width field is ignored.
pub fn lorentzian(x: f64, p: &LineshapeParams) -> Result<f64> {
    if !(p.lorentz_fwhm > 0.0) {
        return Err(Error::domain("lorentzian requires a positive width"));
    }
    let q = 2.0 * (x - p.center) / p.lorentz_fwhm;
    Ok(p.area * 2.0 / (std::f64::consts::PI * p.lorentz_fwhm) / (1.0 + q * q))
}

/// Area-normalized Gaussian scaled by `p.area`.
pub fn gaussian(x: f64, p: &LineshapeParams) -> Result<f64> {
    if !(p.gauss_fwhm > 0.0) {
        return Err(Error::domain("gaussian requires a positive width"));
    }
    let peak = p.area * 2.0 * (LN2 / std::f64::consts::PI).sqrt() / p.gauss_fwhm;
    let arg = 4.0 * LN2 * (x - p.center).powi(2) / (p.gauss_fwhm * p.gauss_fwhm);
    Ok(peak * (-arg).exp())
}

/// Voigt profile: convolution of the Lorentzian and Gaussian components,
/// evaluated through the real part of the Faddeeva function.
///
/// Either width may be zero, in which case the profile degenerates to the
/// remaining pure component.
pub fn voigt(x: f64, p: &LineshapeParams) -> Result<f64> {
    match (p.lorentz_fwhm > 0.0, p.gauss_fwhm > 0.0) {
        (false, false) => Err(Error::domain("voigt requires at least one positive width")),
        (true, false) => lorentzian(x, p),
        (false, true) => gaussian(x, p),
        (true, true) => {
            let sigma = p.gauss_fwhm / (8.0 * LN2).sqrt();
            let gamma_hwhm = p.lorentz_fwhm / 2.0;
            let inv = 1.0 / (sigma * std::f64::consts::SQRT_2);
            let re = re_w((x - p.center) * inv, gamma_hwhm * inv);
            Ok(p.area * re / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
        }
    }
}

/// FWHM of the Voigt profile from its component widths
/// (Olivero-Longbothum approximation, relative error about 2e-4).
pub fn voigt_fwhm(lorentz_fwhm: f64, gauss_fwhm: f64) -> f64 {
    0.5346 * lorentz_fwhm + (0.2166 * lorentz_fwhm * lorentz_fwhm + gauss_fwhm * gauss_fwhm).sqrt()
}

/// Debye-Waller factor: fraction of the total emission in the zero-phonon
/// line, `area_rf / (area_rf + area_psb)`.
pub fn debye_waller(area_rf: f64, area_psb: f64) -> Result<f64> {
    if area_rf < 0.0 || area_psb < 0.0 {
        return Err(Error::domain("areas must be non-negative"));
    }
    let total = area_rf + area_psb;
    if !(total > 0.0) {
        return Err(Error::domain("at least one area must be positive"));
    }
    Ok(area_rf / total)
}

/// Synthesize a two-component spectrum (ZPL Lorentzian + sideband Gaussian)
/// on `grid`, with additive Gaussian noise of RMS `noise_rms` clamped at
/// zero. Deterministic for a given seed.
pub fn synth_spectrum(
    zpl: &LineshapeParams,
    psb: &LineshapeParams,
    grid: &[f64],
    noise_rms: f64,
    seed: u64,
) -> Result<SpectrumTrace> {
    if grid.is_empty() {
        return Err(Error::domain("energy grid must not be empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("energy grid must strictly increase"));
    }
    if !(noise_rms >= 0.0) {
        return Err(Error::domain("noise RMS must be non-negative"));
    }
    let mut rng = derive_rng(seed, StreamDomain::Spectrum, 0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let intensities = grid
        .iter()
        .map(|&e| {
            let model = lorentzian(e, zpl)? + gaussian(e, psb)?;
            let noisy = if noise_rms > 0.0 {
                model + noise_rms * noise.sample(&mut rng)
            } else {
                model
            };
            Ok(noisy.max(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumTrace::new(grid.to_vec(), intensities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn paper_like_zpl() -> LineshapeParams {
        LineshapeParams::new(2.8233, 0.12e-3, 0.0, 0.94).unwrap()
    }

    #[test]
    fn linewidth_matches_reported_value() {
        // 192 ps radiative lifetime -> 3.43 ueV within 0.5%.
        let g = lifetime_limited_linewidth(192e-12).unwrap();
        assert_relative_eq!(g, 3.43e-6, max_relative = 5e-3);
    }

    #[test]
    fn linewidth_one_nanosecond() {
        // Independent arithmetic: h / (2 pi 1e-9) = 6.5821e-7 eV.
        let g = lifetime_limited_linewidth(1e-9).unwrap();
        assert_relative_eq!(g, 6.582_119_569e-7, max_relative = 1e-9);
    }

    #[test]
    fn linewidth_infinite_lifetime_is_zero() {
        assert_eq!(lifetime_limited_linewidth(f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn linewidth_rejects_nonpositive() {
        assert!(lifetime_limited_linewidth(0.0).is_err());
        assert!(lifetime_limited_linewidth(-1.0).is_err());
    }

    #[test]
    fn measured_linewidth_ratio_is_35() {
        let g = lifetime_limited_linewidth(192e-12).unwrap();
        let ratio = 0.12e-3 / g;
        assert!((ratio - 35.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        let p = paper_like_zpl();
        let peak = lorentzian(p.center, &p).unwrap();
        assert_relative_eq!(
            peak,
            2.0 * p.area / (std::f64::consts::PI * p.lorentz_fwhm),
            max_relative = 1e-12
        );
        let half = lorentzian(p.center + p.lorentz_fwhm / 2.0, &p).unwrap();
        assert_relative_eq!(half, peak / 2.0, max_relative = 1e-12);
        assert!(lorentzian(0.0, &LineshapeParams::new(0.0, 0.0, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn gaussian_peak_and_half_width() {
        let p = LineshapeParams::new(2.8225, 0.0, 1.0e-3, 0.06).unwrap();
        let peak = gaussian(p.center, &p).unwrap();
        assert_relative_eq!(
            peak,
            p.area * 2.0 * (LN2 / std::f64::consts::PI).sqrt() / p.gauss_fwhm,
            max_relative = 1e-12
        );
        let half = gaussian(p.center - p.gauss_fwhm / 2.0, &p).unwrap();
        assert_relative_eq!(half, peak / 2.0, max_relative = 1e-12);
        assert!(gaussian(0.0, &LineshapeParams::new(0.0, 1.0, 0.0, 1.0).unwrap()).is_err());
    }

    fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for i in 1..n {
            acc += f(a + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn lineshape_integrals_match_area() {
        let lor = LineshapeParams::new(1.0, 0.02, 0.0, 0.7).unwrap();
        let int_l = trapezoid(|x| lorentzian(x, &lor).unwrap(), 0.0, 2.0, 400_000);
        assert_relative_eq!(int_l, lor.area, max_relative = 1e-2);

        let gau = LineshapeParams::new(1.0, 0.0, 0.02, 0.7).unwrap();
        let int_g = trapezoid(|x| gaussian(x, &gau).unwrap(), 0.8, 1.2, 100_000);
        assert_relative_eq!(int_g, gau.area, max_relative = 1e-6);

        let voi = LineshapeParams::new(0.0, 0.03, 0.02, 1.3).unwrap();
        let int_v = trapezoid(|x| voigt(x, &voi).unwrap(), -1.5, 1.5, 600_000);
        assert_relative_eq!(int_v, voi.area, max_relative = 1e-2);
    }

    #[test]
    fn voigt_degenerates_to_pure_components() {
        let lor_only = LineshapeParams::new(0.5, 0.04, 0.0, 2.0).unwrap();
        let gau_only = LineshapeParams::new(0.5, 0.0, 0.04, 2.0).unwrap();
        for i in 0..40 {
            let x = 0.5 + (i as f64 - 20.0) * 0.01;
            assert_relative_eq!(
                voigt(x, &lor_only).unwrap(),
                lorentzian(x, &lor_only).unwrap(),
                max_relative = 1e-4
            );
            assert_relative_eq!(
                voigt(x, &gau_only).unwrap(),
                gaussian(x, &gau_only).unwrap(),
                max_relative = 1e-4
            );
        }
        let none = LineshapeParams::new(0.5, 0.0, 0.0, 1.0).unwrap();
        assert!(voigt(0.5, &none).is_err());
    }

    /// Brute-force convolution of the two components on a dense grid.
    fn voigt_by_quadrature(x: f64, p: &LineshapeParams) -> f64 {
        let lor = LineshapeParams::new(0.0, p.lorentz_fwhm, 0.0, 1.0).unwrap();
        let gau = LineshapeParams::new(0.0, 0.0, p.gauss_fwhm, 1.0).unwrap();
        let sigma = p.gauss_fwhm / (8.0 * LN2).sqrt();
        let span = 14.0 * sigma;
        let n = 80_000;
        let integrand = |u: f64| {
            gaussian(u, &gau).unwrap() * lorentzian(x - p.center - u, &lor).unwrap()
        };
        p.area * trapezoid(integrand, -span, span, n)
    }

    #[test]
    fn voigt_matches_convolution_quadrature() {
        let cases = [
            LineshapeParams::new(0.0, 0.03, 0.01, 1.0).unwrap(),
            LineshapeParams::new(0.0, 0.005, 0.05, 2.5).unwrap(),
            LineshapeParams::new(0.0, 0.02, 0.02, 0.3).unwrap(),
        ];
        for p in &cases {
            let width = voigt_fwhm(p.lorentz_fwhm, p.gauss_fwhm);
            for k in -8..=8 {
                let x = p.center + k as f64 * width / 2.0;
                let direct = voigt(x, p).unwrap();
                let brute = voigt_by_quadrature(x, p);
                assert_relative_eq!(direct, brute, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn voigt_nonnegative_and_symmetric() {
        let p = LineshapeParams::new(0.0, 0.011, 0.007, 1.0).unwrap();
        for k in 0..200 {
            let d = k as f64 * 0.002;
            let plus = voigt(d, &p).unwrap();
            let minus = voigt(-d, &p).unwrap();
            assert!(plus >= 0.0);
            assert_relative_eq!(plus, minus, max_relative = 1e-12);
        }
    }

    #[test]
    fn debye_waller_reported_value() {
        assert_abs_diff_eq!(debye_waller(0.94, 0.06).unwrap(), 0.94, epsilon = 1e-12);
        assert_eq!(debye_waller(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(debye_waller(0.5, 0.5).unwrap(), 0.5);
        assert!(debye_waller(0.0, 0.0).is_err());
        assert!(debye_waller(-0.1, 0.5).is_err());
    }

    #[test]
    fn synth_spectrum_noiseless_and_deterministic() {
        let zpl = paper_like_zpl();
        let psb = LineshapeParams::new(2.8225, 0.0, 1.0e-3, 0.06).unwrap();
        let grid: Vec<f64> = (0..600).map(|i| 2.8203 + i as f64 * 1e-5).collect();

        let clean = synth_spectrum(&zpl, &psb, &grid, 0.0, 1).unwrap();
        for (i, &e) in grid.iter().enumerate() {
            let model = lorentzian(e, &zpl).unwrap() + gaussian(e, &psb).unwrap();
            assert_relative_eq!(clean.intensities[i], model, max_relative = 1e-12);
        }

        let a = synth_spectrum(&zpl, &psb, &grid, 5.0, 42).unwrap();
        let b = synth_spectrum(&zpl, &psb, &grid, 5.0, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_spectrum(&zpl, &psb, &grid, 5.0, 43).unwrap();
        assert_ne!(a, c);
        assert!(a.intensities.iter().all(|&v| v >= 0.0));

        assert!(synth_spectrum(&zpl, &psb, &[], 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn linewidth_scaling_is_homogeneous(tau in 1e-12f64..1e-6) {
            let one = lifetime_limited_linewidth(tau).unwrap();
            let two = lifetime_limited_linewidth(2.0 * tau).unwrap();
            prop_assert!((two - one / 2.0).abs() <= 1e-12 * one);
            prop_assert!(two < one);
        }

        #[test]
        fn debye_waller_scale_invariant(
            rf in 1e-6f64..1e6,
            psb in 1e-6f64..1e6,
            scale in 1e-3f64..1e3,
        ) {
            let base = debye_waller(rf, psb).unwrap();
            let scaled = debye_waller(scale * rf, scale * psb).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn lineshape_area_recovered(
            fwhm_l in 1e-4f64..1e-2,
            fwhm_g in 1e-4f64..1e-2,
            area in 0.1f64..10.0,
        ) {
            let p = LineshapeParams::new(0.0, fwhm_l, fwhm_g, area).unwrap();
            let width = voigt_fwhm(fwhm_l, fwhm_g);
            let int = trapezoid(|x| voigt(x, &p).unwrap(), -50.0 * width, 50.0 * width, 120_000);
            prop_assert!((int - area).abs() / area < 1e-2);
        }
    }
}
