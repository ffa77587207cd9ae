//! Registry of the model functions the analysis layer fits, with analytic
//! Jacobians.

use crate::spectral::w_faddeeva;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const LN2: f64 = std::f64::consts::LN_2;
const TWO_OVER_SQRT_PI: f64 = 1.128_379_167_095_512_6;

/// Identifier of a registered model function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// `a exp(-rate x) + offset`
    ExpDecay,
    /// `i0 (1 - exp(-x/tau))`
    ExpRise,
    /// `a exp(-(x/scale)^beta)`
    StretchedExp,
    /// Voigt line: `(center, lorentz_fwhm, gauss_fwhm, area)`
    Voigt,
    /// Lorentzian + Gaussian sum:
    /// `(zpl_center, zpl_fwhm, zpl_area, psb_center, psb_fwhm, psb_area)`
    LorentzPlusGauss,
    /// `amplitude (1-(1-q0)e^{-|x|/tau0}) (1+b e^{-|x|/tau1})`, x in ns
    G2Combined,
}

impl ModelId {
    pub fn arity(self) -> usize {
        match self {
            ModelId::ExpDecay => 3,
            ModelId::ExpRise => 2,
            ModelId::StretchedExp => 3,
            ModelId::Voigt => 4,
            ModelId::LorentzPlusGauss => 6,
            ModelId::G2Combined => 5,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelId::ExpDecay => &["amplitude", "rate", "offset"],
            ModelId::ExpRise => &["i0", "tau"],
            ModelId::StretchedExp => &["amplitude", "scale", "beta"],
            ModelId::Voigt => &["center", "lorentz_fwhm", "gauss_fwhm", "area"],
            ModelId::LorentzPlusGauss => &[
                "zpl_center",
                "zpl_fwhm",
                "zpl_area",
                "psb_center",
                "psb_fwhm",
                "psb_area",
            ],
            ModelId::G2Combined => &["amplitude", "q0", "tau0", "bunch_ratio", "tau1"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::ExpDecay => "exp_decay",
            ModelId::ExpRise => "exp_rise",
            ModelId::StretchedExp => "stretched_exp",
            ModelId::Voigt => "voigt",
            ModelId::LorentzPlusGauss => "lorentz_plus_gauss",
            ModelId::G2Combined => "g2_combined",
        }
    }
}

/// Evaluate the model at one point.
pub fn model_eval(model: ModelId, p: &[f64], x: f64) -> f64 {
    match model {
        ModelId::ExpDecay => p[0] * (-p[1] * x).exp() + p[2],
        ModelId::ExpRise => p[0] * (1.0 - (-x / p[1]).exp()),
        ModelId::StretchedExp => {
            let u = (x / p[1]).powf(p[2]);
            p[0] * (-u).exp()
        }
        ModelId::Voigt => {
            let (value, _) = voigt_value_grad(p, x);
            value
        }
        ModelId::LorentzPlusGauss => lorentz_term(p[0], p[1], p[2], x) + gauss_term(p[3], p[4], p[5], x),
        ModelId::G2Combined => {
            let e0 = (-x.abs() / p[2]).exp();
            let e1 = (-x.abs() / p[4]).exp();
            p[0] * (1.0 - (1.0 - p[1]) * e0) * (1.0 + p[3] * e1)
        }
    }
}

/// Analytic gradient of the model with respect to its parameters,
/// written into `out` (length = arity).
pub fn model_gradient(model: ModelId, p: &[f64], x: f64, out: &mut [f64]) {
    match model {
        ModelId::ExpDecay => {
            let e = (-p[1] * x).exp();
            out[0] = e;
            out[1] = -p[0] * x * e;
            out[2] = 1.0;
        }
        ModelId::ExpRise => {
            let e = (-x / p[1]).exp();
            out[0] = 1.0 - e;
            out[1] = -p[0] * x / (p[1] * p[1]) * e;
        }
        ModelId::StretchedExp => {
            if x <= 0.0 {
                out[0] = 1.0;
                out[1] = 0.0;
                out[2] = 0.0;
                return;
            }
            let ratio = x / p[1];
            let u = ratio.powf(p[2]);
            let e = (-u).exp();
            out[0] = e;
            out[1] = p[0] * e * u * p[2] / p[1];
            out[2] = -p[0] * e * u * ratio.ln();
        }
        ModelId::Voigt => {
            let (_, grad) = voigt_value_grad(p, x);
            out.copy_from_slice(&grad);
        }
        ModelId::LorentzPlusGauss => {
            let (zc, zw, za, pc, pw, pa) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let q = 2.0 * (x - zc) / zw;
            let denom = 1.0 + q * q;
            let norm = 2.0 / (std::f64::consts::PI * zw);
            out[0] = za * norm * 4.0 * q / (zw * denom * denom);
            out[1] = za * 2.0 / (std::f64::consts::PI * zw * zw)
                * (-1.0 / denom + 2.0 * q * q / (denom * denom));
            out[2] = norm / denom;

            let g = gauss_term(pc, pw, 1.0, x);
            let d = x - pc;
            out[3] = pa * g * 8.0 * LN2 * d / (pw * pw);
            out[4] = pa * g * (-1.0 / pw + 8.0 * LN2 * d * d / (pw * pw * pw));
            out[5] = g;
        }
        ModelId::G2Combined => {
            let (a, q0, tau0, b, tau1) = (p[0], p[1], p[2], p[3], p[4]);
            let ax = x.abs();
            let e0 = (-ax / tau0).exp();
            let e1 = (-ax / tau1).exp();
            let s = 1.0 - (1.0 - q0) * e0;
            let l = 1.0 + b * e1;
            out[0] = s * l;
            out[1] = a * e0 * l;
            out[2] = -a * (1.0 - q0) * e0 * (ax / (tau0 * tau0)) * l;
            out[3] = a * s * e1;
            out[4] = a * s * b * e1 * (ax / (tau1 * tau1));
        }
    }
}

fn lorentz_term(center: f64, fwhm: f64, area: f64, x: f64) -> f64 {
    let q = 2.0 * (x - center) / fwhm;
    area * 2.0 / (std::f64::consts::PI * fwhm) / (1.0 + q * q)
}

fn gauss_term(center: f64, fwhm: f64, area: f64, x: f64) -> f64 {
    let peak = area * 2.0 * (LN2 / std::f64::consts::PI).sqrt() / fwhm;
    peak * (-4.0 * LN2 * (x - center).powi(2) / (fwhm * fwhm)).exp()
}

/// Voigt value and its gradient w.r.t. (center, lorentz_fwhm, gauss_fwhm,
/// area). Requires gauss_fwhm > 0; fits keep it bounded away from zero.
fn voigt_value_grad(p: &[f64], x: f64) -> (f64, [f64; 4]) {
    let (center, fl, fg, area) = (p[0], p[1], p[2], p[3]);
    let sigma = fg / (8.0 * LN2).sqrt();
    let gamma = fl / 2.0;
    let prefactor = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let c1 = 1.0 / (sigma * std::f64::consts::SQRT_2);
    let dx = x - center;
    let z = Complex64::new(dx * c1, gamma * c1);
    let w = w_faddeeva(z);
    // w'(z) = -2 z w(z) + 2i/sqrt(pi)
    let wp = -2.0 * z * w + Complex64::new(0.0, TWO_OVER_SQRT_PI);
    let kernel = prefactor * w.re;

    let dk_ddx = prefactor * wp.re * c1;
    let dk_dgamma = -prefactor * wp.im * c1;
    // z scales as 1/sigma and the prefactor as 1/sigma.
    let dk_dsigma = prefactor * (wp * (-z / sigma)).re - kernel / sigma;

    let dsigma_dfg = 1.0 / (8.0 * LN2).sqrt();
    (
        area * kernel,
        [
            -area * dk_ddx,
            area * dk_dgamma * 0.5,
            area * dk_dsigma * dsigma_dfg,
            kernel,
        ],
    )
}
