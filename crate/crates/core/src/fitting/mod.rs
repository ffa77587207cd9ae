//! Damped least-squares engine (Levenberg-Marquardt) and per-figure fit
//! dispatch.
//!
//! The damping schedule is fixed: lambda starts at 1e-3, shrinks by 0.3 on
//! an accepted step and doubles on a rejected one. Convergence is declared
//! when the relative step falls below 1e-10 or the relative cost change
//! below 1e-12. Bounds are enforced by projection and fixed parameters are
//! excluded from the linearized system. The covariance is the inverse of
//! the weighted normal matrix scaled by the reduced chi-square.

mod models;

pub use models::{model_eval, model_gradient, ModelId};

use crate::correlation::CoincidenceHistogram;
use crate::dynamics::TimeTrace;
use crate::error::{Error, Result};
use crate::spectral::SpectrumTrace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_ACCEPT: f64 = 0.3;
const LAMBDA_REJECT: f64 = 2.0;
const LAMBDA_MAX: f64 = 1e15;
const STEP_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-12;
const MAX_ITER: usize = 500;

/// A fit problem: model, starting point, box bounds, optional per-point
/// weights and a fixed-parameter mask.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub model: ModelId,
    pub init: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub fixed: Vec<bool>,
}

impl ModelSpec {
    pub fn new(model: ModelId, init: Vec<f64>) -> Result<Self> {
        let n = model.arity();
        if init.len() != n {
            return Err(Error::domain(format!(
                "{} takes {n} parameters, got {}",
                model.name(),
                init.len()
            )));
        }
        Ok(Self {
            model,
            init,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            weights: None,
            fixed: vec![false; n],
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = self.model.arity();
        if lower.len() != n || upper.len() != n {
            return Err(Error::domain("bounds length must match arity"));
        }
        for j in 0..n {
            if !(lower[j] <= self.init[j] && self.init[j] <= upper[j]) {
                return Err(Error::domain(format!(
                    "bounds must bracket the initial value of `{}`",
                    self.model.param_names()[j]
                )));
            }
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Self {
        self.fixed = fixed;
        self
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelId,
    pub parameters: Vec<f64>,
    /// Covariance of all parameters; rows/columns of fixed parameters are
    /// zero. Scaled by the reduced chi-square at the optimum.
    pub covariance: DMatrix<f64>,
    /// Weighted residual sum of squares at the optimum.
    pub residual_sum_squares: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Figure-level derived quantities, filled by [`fit_figure`].
    pub headlines: BTreeMap<String, f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Result<f64> {
        let idx = self.param_index(name)?;
        Ok(self.parameters[idx])
    }

    pub fn std_error(&self, name: &str) -> Result<f64> {
        let idx = self.param_index(name)?;
        Ok(self.covariance[(idx, idx)].max(0.0).sqrt())
    }

    pub fn headline(&self, key: &str) -> Result<f64> {
        self.headlines
            .get(key)
            .copied()
            .ok_or_else(|| Error::Fit(format!("no headline `{key}`")))
    }

    fn param_index(&self, name: &str) -> Result<usize> {
        self.model
            .param_names()
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| Error::Fit(format!("{} has no parameter `{name}`", self.model.name())))
    }

    /// Human-readable report: values, standard errors, correlations.
    pub fn report(&self) -> String {
        let names = self.model.param_names();
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model.name());
        let _ = writeln!(
            s,
            "converged: {} ({} iterations, weighted RSS {:.6e})",
            self.converged, self.iterations, self.residual_sum_squares
        );
        for (j, name) in names.iter().enumerate() {
            let se = self.covariance[(j, j)].max(0.0).sqrt();
            let _ = writeln!(s, "  {name:>14} = {:.9e} +/- {:.3e}", self.parameters[j], se);
        }
        let _ = writeln!(s, "correlation matrix:");
        for i in 0..names.len() {
            let mut row = String::from("   ");
            for j in 0..names.len() {
                let d = (self.covariance[(i, i)] * self.covariance[(j, j)]).sqrt();
                let c = if d > 0.0 { self.covariance[(i, j)] / d } else { 0.0 };
                let _ = write!(row, " {c:+.3}");
            }
            let _ = writeln!(s, "{row}");
        }
        for (k, v) in &self.headlines {
            let _ = writeln!(s, "  headline {k} = {v:.9e}");
        }
        s
    }
}

/// Weighted Levenberg-Marquardt with analytic Jacobians and projected
/// box bounds.
pub fn lsq_fit(spec: &ModelSpec, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    let arity = spec.model.arity();
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::domain("x and y lengths differ"));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("fit data must be finite"));
    }
    let free: Vec<usize> = (0..arity).filter(|&j| !spec.fixed[j]).collect();
    if free.is_empty() {
        return Err(Error::domain("all parameters are fixed"));
    }
    if n <= free.len() {
        return Err(Error::domain(format!(
            "need more than {} data points, got {n}",
            free.len()
        )));
    }
    let sqrt_w: Vec<f64> = match &spec.weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::domain("weights length must match data"));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::domain("weights must be finite and non-negative"));
            }
            w.iter().map(|&v| v.sqrt()).collect()
        }
        None => vec![1.0; n],
    };

    let clamp = |p: &mut [f64]| {
        for j in 0..arity {
            p[j] = p[j].clamp(spec.lower[j], spec.upper[j]);
        }
    };

    let cost_of = |p: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let r = sqrt_w[i] * (ys[i] - model_eval(spec.model, p, xs[i]));
                r * r
            })
            .sum()
    };

    let mut p = spec.init.clone();
    clamp(&mut p);
    let mut cost = cost_of(&p);
    let mut cost_history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad = vec![0.0f64; arity];

    while iterations < MAX_ITER {
        iterations += 1;

        // Build the weighted normal equations over the free parameters.
        let nf = free.len();
        let mut jtj = DMatrix::<f64>::zeros(nf, nf);
        let mut jtr = DVector::<f64>::zeros(nf);
        for i in 0..n {
            model_gradient(spec.model, &p, xs[i], &mut grad);
            let r = sqrt_w[i] * (ys[i] - model_eval(spec.model, &p, xs[i]));
            for (a, &ja) in free.iter().enumerate() {
                let ga = sqrt_w[i] * grad[ja];
                jtr[a] += ga * r;
                for (b, &jb) in free.iter().enumerate().skip(a) {
                    jtj[(a, b)] += ga * sqrt_w[i] * grad[jb];
                }
            }
        }
        for a in 0..nf {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }

        let diag_max = (0..nf).map(|a| jtj[(a, a)]).fold(0.0f64, f64::max);
        if !(diag_max > 0.0) {
            return Err(Error::Fit("degenerate Jacobian: all columns vanish".into()));
        }

        // Marquardt scaling: damp along the curvature diagonal.
        let mut damped = jtj.clone();
        for a in 0..nf {
            let d = jtj[(a, a)].max(1e-14 * diag_max);
            damped[(a, a)] += lambda * d;
        }
        let delta = match damped.lu().solve(&jtr) {
            Some(d) => d,
            None => {
                lambda *= LAMBDA_REJECT;
                if lambda > LAMBDA_MAX {
                    break;
                }
                continue;
            }
        };

        let mut p_new = p.clone();
        for (a, &j) in free.iter().enumerate() {
            p_new[j] += delta[a];
        }
        clamp(&mut p_new);
        let new_cost = cost_of(&p_new);

        if new_cost < cost {
            // Relative step uses the projected move.
            let step: f64 = free
                .iter()
                .map(|&j| (p_new[j] - p[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = free.iter().map(|&j| p[j].powi(2)).sum::<f64>().sqrt();
            let rel_cost = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
            p = p_new;
            cost = new_cost;
            cost_history.push(cost);
            lambda = (lambda * LAMBDA_ACCEPT).max(1e-12);
            if step <= STEP_TOL * (scale + STEP_TOL) || rel_cost <= COST_TOL {
                converged = true;
                break;
            }
        } else {
            lambda *= LAMBDA_REJECT;
            if lambda > LAMBDA_MAX {
                // The trust region collapsed; no further progress possible.
                converged = cost_history.len() > 1;
                break;
            }
        }
    }

    // Covariance from the final free-parameter normal matrix.
    let nf = free.len();
    let mut jtj = DMatrix::<f64>::zeros(nf, nf);
    for i in 0..n {
        model_gradient(spec.model, &p, xs[i], &mut grad);
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                jtj[(a, b)] += sqrt_w[i] * grad[ja] * sqrt_w[i] * grad[jb];
            }
        }
    }
    let dof = (n - nf).max(1) as f64;
    let scale = cost / dof;
    let mut covariance = DMatrix::<f64>::zeros(arity, arity);
    match jtj.clone().try_inverse() {
        Some(inv) => {
            for (a, &ja) in free.iter().enumerate() {
                for (b, &jb) in free.iter().enumerate() {
                    covariance[(ja, jb)] = inv[(a, b)] * scale;
                }
            }
        }
        None => {
            converged = false;
        }
    }

    Ok(FitResult {
        model: spec.model,
        parameters: p,
        covariance,
        residual_sum_squares: cost,
        converged: converged && iterations <= MAX_ITER,
        iterations,
        cost_history,
        headlines: BTreeMap::new(),
    })
}

/// Compare the analytic Jacobian against central finite differences with
/// a 1e-6 relative step; returns the maximum elementwise relative
/// deviation over all points and parameters.
///
/// Entries smaller than the central-difference resolution floor
/// `~2e5 eps |f| / h` cannot be checked to the 1e-5 level against
/// rounding noise and are skipped rather than reported as deviations.
pub fn jacobian_check(model: ModelId, params: &[f64], xs: &[f64]) -> Result<f64> {
    let arity = model.arity();
    if params.len() != arity {
        return Err(Error::domain("parameter count mismatch"));
    }
    let mut analytic = vec![0.0f64; arity];
    let mut worst = 0.0f64;
    for &x in xs {
        model_gradient(model, params, x, &mut analytic);
        let f_here = model_eval(model, params, x).abs();
        for j in 0..arity {
            let h = 1e-6 * params[j].abs().max(1e-12);
            let mut plus = params.to_vec();
            plus[j] += h;
            let mut minus = params.to_vec();
            minus[j] -= h;
            let fd = (model_eval(model, &plus, x) - model_eval(model, &minus, x)) / (2.0 * h);
            let floor = 2e5 * f64::EPSILON * f_here / h;
            if analytic[j].abs() < floor && fd.abs() < floor {
                continue;
            }
            let denom = analytic[j].abs().max(fd.abs());
            worst = worst.max((analytic[j] - fd).abs() / denom);
        }
    }
    Ok(worst)
}

/// The figures whose fits the toolkit reproduces end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    /// ZPL + sideband spectrum; headline `f_dw`.
    Fig2b,
    /// Voigt scan; headlines `voigt_fwhm_ev`, `lorentz_fwhm_ev`.
    Fig2c,
    /// Short-delay correlation histogram; headline `q0`.
    Fig2d,
    /// Long-delay correlation histogram; headlines `bunch_ratio`, `tau1_ns`.
    Fig2e,
    /// Probe-segment fluorescence decay; headline `decay_rate_per_s`.
    Fig4a,
    /// Delay sweep of integrated probe fluorescence; headline `scale_s`.
    Fig4c,
    /// Charge-recovery rise; headline `tau_s`.
    Fig4d,
}

impl FigureId {
    pub fn label(self) -> &'static str {
        match self {
            FigureId::Fig2b => "2b",
            FigureId::Fig2c => "2c",
            FigureId::Fig2d => "2d",
            FigureId::Fig2e => "2e",
            FigureId::Fig4a => "4a",
            FigureId::Fig4c => "4c",
            FigureId::Fig4d => "4d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "2b" => Ok(FigureId::Fig2b),
            "2c" => Ok(FigureId::Fig2c),
            "2d" => Ok(FigureId::Fig2d),
            "2e" => Ok(FigureId::Fig2e),
            "4a" => Ok(FigureId::Fig4a),
            "4c" => Ok(FigureId::Fig4c),
            "4d" => Ok(FigureId::Fig4d),
            other => Err(Error::domain(format!("unknown figure id `{other}`"))),
        }
    }
}

/// Data container accepted by [`fit_figure`].
pub enum FigureData<'a> {
    Spectrum(&'a SpectrumTrace),
    Histogram(&'a CoincidenceHistogram),
    Trace(&'a TimeTrace),
}

/// Default stretching exponent held fixed by the delay-sweep fit.
pub const DEFAULT_STRETCH_BETA: f64 = 0.5;

/// Dispatch a figure-specific fit with data-driven initialization and the
/// figure's headline quantities attached.
pub fn fit_figure(figure: FigureId, data: FigureData<'_>) -> Result<FitResult> {
    match (figure, data) {
        (FigureId::Fig2b, FigureData::Spectrum(trace)) => fit_spectrum_2b(trace),
        (FigureId::Fig2c, FigureData::Spectrum(trace)) => fit_voigt_scan(trace),
        (FigureId::Fig2d, FigureData::Histogram(hist))
        | (FigureId::Fig2e, FigureData::Histogram(hist)) => fit_g2_histogram(hist),
        (FigureId::Fig4a, FigureData::Trace(trace)) => fit_probe_decay(trace),
        (FigureId::Fig4c, FigureData::Trace(trace)) => {
            fit_stretched_sweep(trace, DEFAULT_STRETCH_BETA, true)
        }
        (FigureId::Fig4d, FigureData::Trace(trace)) => fit_recovery_rise(trace),
        (fig, _) => Err(Error::domain(format!(
            "figure {} expects a different data shape",
            fig.label()
        ))),
    }
}

/// Index of the maximum value.
fn argmax(ys: &[f64]) -> usize {
    ys.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Empirical FWHM around a peak by half-maximum crossings.
fn fwhm_scan(xs: &[f64], ys: &[f64], peak_idx: usize, baseline: f64) -> f64 {
    let half = baseline + (ys[peak_idx] - baseline) / 2.0;
    let mut left = xs[0];
    for i in (0..peak_idx).rev() {
        if ys[i] <= half {
            left = xs[i];
            break;
        }
    }
    let mut right = xs[xs.len() - 1];
    for i in peak_idx..xs.len() {
        if ys[i] <= half {
            right = xs[i];
            break;
        }
    }
    let step = if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
    (right - left).max(step)
}

fn fit_spectrum_2b(trace: &SpectrumTrace) -> Result<FitResult> {
    let xs = &trace.energies;
    let ys = &trace.intensities;
    if xs.len() < 12 {
        return Err(Error::domain("spectrum too short for a two-line fit"));
    }
    let zi = argmax(ys);
    let z_center = xs[zi];
    let z_peak = ys[zi];
    let z_fwhm = fwhm_scan(xs, ys, zi, 0.0);
    let z_area = z_peak * z_fwhm * std::f64::consts::PI / 2.0;

    // Sideband: largest point outside the ZPL core.
    let exclusion = 5.0 * z_fwhm;
    let mut pi = usize::MAX;
    let mut p_peak = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        if (xs[i] - z_center).abs() > exclusion && y > p_peak {
            p_peak = y;
            pi = i;
        }
    }
    if pi == usize::MAX {
        return Err(Error::domain("no sideband region outside the main line"));
    }
    let p_center = xs[pi];
    let p_fwhm = fwhm_scan(xs, ys, pi, 0.0).max(2.0 * z_fwhm);
    let p_area = 1.064_467 * p_peak * p_fwhm;

    let span = xs[xs.len() - 1] - xs[0];
    let step = xs[1] - xs[0];
    let spec = ModelSpec::new(
        ModelId::LorentzPlusGauss,
        vec![z_center, z_fwhm, z_area, p_center, p_fwhm, p_area],
    )?
    .with_bounds(
        vec![xs[0], step / 4.0, 0.0, xs[0], step / 4.0, 0.0],
        vec![
            xs[xs.len() - 1],
            span,
            f64::INFINITY,
            xs[xs.len() - 1],
            span,
            f64::INFINITY,
        ],
    )?;
    let mut fit = lsq_fit(&spec, xs, ys)?;
    let zpl_area = fit.param("zpl_area")?;
    let psb_area = fit.param("psb_area")?;
    let f_dw = crate::spectral::debye_waller(zpl_area, psb_area)?;
    fit.headlines.insert("f_dw".into(), f_dw);
    fit.headlines.insert("zpl_area".into(), zpl_area);
    fit.headlines.insert("psb_area".into(), psb_area);
    Ok(fit)
}

fn fit_voigt_scan(trace: &SpectrumTrace) -> Result<FitResult> {
    let xs = &trace.energies;
    let ys = &trace.intensities;
    if xs.len() < 8 {
        return Err(Error::domain("scan too short for a Voigt fit"));
    }
    let pi = argmax(ys);
    let center = xs[pi];
    let fwhm = fwhm_scan(xs, ys, pi, 0.0);
    let area = 1.1 * ys[pi] * fwhm;
    let span = xs[xs.len() - 1] - xs[0];
    let tiny = fwhm * 1e-4;
    let spec = ModelSpec::new(ModelId::Voigt, vec![center, 0.6 * fwhm, 0.4 * fwhm, area])?
        .with_bounds(
            vec![xs[0], tiny, tiny, 0.0],
            vec![xs[xs.len() - 1], span, span, f64::INFINITY],
        )?;
    let mut fit = lsq_fit(&spec, xs, ys)?;
    let fl = fit.param("lorentz_fwhm")?;
    let fg = fit.param("gauss_fwhm")?;
    fit.headlines
        .insert("voigt_fwhm_ev".into(), crate::spectral::voigt_fwhm(fl, fg));
    fit.headlines.insert("lorentz_fwhm_ev".into(), fl);
    fit.headlines.insert("gauss_fwhm_ev".into(), fg);
    Ok(fit)
}

/// Fit the combined correlation model to a raw-count histogram with
/// Poisson weights `1/max(counts, 1)`.
pub fn fit_g2_histogram(hist: &CoincidenceHistogram) -> Result<FitResult> {
    let xs = hist.delays_ns();
    let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    if xs.len() < 16 {
        return Err(Error::domain("histogram too short for the g2 fit"));
    }
    let weights: Vec<f64> = hist.counts.iter().map(|&c| 1.0 / (c.max(1) as f64)).collect();

    let edge_n = (xs.len() / 10).max(4);
    let edge: f64 = ys[..edge_n]
        .iter()
        .chain(ys[ys.len() - edge_n..].iter())
        .sum::<f64>()
        / (2 * edge_n) as f64;
    if !(edge > 0.0) {
        return Err(Error::domain("histogram plateau is empty"));
    }
    let center = ys[xs.len() / 2] / edge;
    let q0_init = center.clamp(0.0, 1.5);

    // Plateau excess in two delay bands pins the bunching scale.
    let band = |lo: f64, hi: f64| -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (i, &t) in xs.iter().enumerate() {
            if t.abs() >= lo && t.abs() < hi {
                acc += ys[i];
                n += 1;
            }
        }
        if n == 0 {
            edge
        } else {
            acc / n as f64
        }
    };
    let near = (band(1.0, 2.5) / edge - 1.0).max(1e-3);
    let far = (band(5.0, 9.0) / edge - 1.0).max(1e-4);
    let tau1_init = if near > far * 1.5 {
        ((7.0 - 1.75) / (near / far).ln()).clamp(0.5, 50.0)
    } else {
        4.0
    };
    let b_init = (near * (1.75f64 / tau1_init).exp()).clamp(0.01, 2.0);

    let spec = ModelSpec::new(
        ModelId::G2Combined,
        vec![edge, q0_init, 0.2, b_init, tau1_init],
    )?
    .with_bounds(
        vec![0.1 * edge, 0.0, 0.01, 0.0, 0.05],
        vec![10.0 * edge, 2.0, 5.0, 5.0, 200.0],
    )?
    .with_weights(weights);
    let mut fit = lsq_fit(&spec, &xs, &ys)?;
    let amplitude_norm = fit.param("amplitude")? / hist.normalization;
    fit.headlines.insert("q0".into(), fit.param("q0")?);
    fit.headlines.insert("tau0_ns".into(), fit.param("tau0")?);
    fit.headlines
        .insert("bunch_ratio".into(), fit.param("bunch_ratio")?);
    fit.headlines.insert("tau1_ns".into(), fit.param("tau1")?);
    fit.headlines
        .insert("amplitude_normalized".into(), amplitude_norm);
    Ok(fit)
}

fn fit_probe_decay(trace: &TimeTrace) -> Result<FitResult> {
    let xs = &trace.times;
    let ys = &trace.values;
    if xs.len() < 8 {
        return Err(Error::domain("trace too short for a decay fit"));
    }
    let y0 = ys[0];
    let y_end = *ys.last().unwrap();
    let a_init = (y0 - y_end).max(y0 * 1e-3);
    // e-folding point of the baseline-subtracted decay.
    let target = y_end + a_init / std::f64::consts::E;
    let t_fold = xs
        .iter()
        .zip(ys)
        .find(|(_, &y)| y <= target)
        .map(|(&t, _)| t)
        .unwrap_or(xs[xs.len() - 1] / 2.0)
        .max(xs[1]);
    let spec = ModelSpec::new(ModelId::ExpDecay, vec![a_init, 1.0 / t_fold, y_end.max(0.0)])?
        .with_bounds(
            vec![0.0, 0.0, 0.0],
            vec![f64::INFINITY, f64::INFINITY, f64::INFINITY],
        )?;
    let mut fit = lsq_fit(&spec, xs, ys)?;
    fit.headlines
        .insert("decay_rate_per_s".into(), fit.param("rate")?);
    Ok(fit)
}

/// Stretched-exponential fit; `fix_beta` holds the exponent at `beta`.
pub fn fit_stretched_sweep(trace: &TimeTrace, beta: f64, fix_beta: bool) -> Result<FitResult> {
    let xs = &trace.times;
    let ys = &trace.values;
    if xs.len() < 4 {
        return Err(Error::domain("sweep too short for a stretched fit"));
    }
    let a_init = ys.iter().cloned().fold(f64::MIN, f64::max);
    let target = a_init / std::f64::consts::E;
    let scale_init = xs
        .iter()
        .zip(ys)
        .find(|(_, &y)| y <= target)
        .map(|(&t, _)| t)
        .unwrap_or(xs[xs.len() - 1])
        .max(xs[0]);
    let spec = ModelSpec::new(ModelId::StretchedExp, vec![a_init, scale_init, beta])?
        .with_bounds(
            vec![0.0, xs[0] * 1e-2, 0.05],
            vec![f64::INFINITY, xs[xs.len() - 1] * 1e3, 1.0],
        )?
        .with_fixed(vec![false, false, fix_beta]);
    let mut fit = lsq_fit(&spec, xs, ys)?;
    fit.headlines.insert("scale_s".into(), fit.param("scale")?);
    fit.headlines.insert("beta".into(), fit.param("beta")?);
    Ok(fit)
}

fn fit_recovery_rise(trace: &TimeTrace) -> Result<FitResult> {
    let xs = &trace.times;
    let ys = &trace.values;
    if xs.len() < 8 {
        return Err(Error::domain("trace too short for a rise fit"));
    }
    let i0_init = *ys.last().unwrap();
    if !(i0_init > 0.0) {
        return Err(Error::Fit("recovery trace never rises".into()));
    }
    let target = i0_init * (1.0 - 1.0 / std::f64::consts::E);
    let tau_init = xs
        .iter()
        .zip(ys)
        .find(|(_, &y)| y >= target)
        .map(|(&t, _)| t)
        .unwrap_or(xs[xs.len() - 1] / 3.0)
        .max(xs[1]);
    let spec = ModelSpec::new(ModelId::ExpRise, vec![i0_init, tau_init])?.with_bounds(
        vec![0.0, xs[1] * 1e-3],
        vec![f64::INFINITY, xs[xs.len() - 1] * 1e3],
    )?;
    let mut fit = lsq_fit(&spec, xs, ys)?;
    fit.headlines.insert("tau_s".into(), fit.param("tau")?);
    fit.headlines.insert("i0".into(), fit.param("i0")?);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::rng::{derive_rng, StreamDomain};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_exp_decay_recovers_exactly() {
        let truth = [3.2, 1.7e6, 0.4];
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 2e-8).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| model_eval(ModelId::ExpDecay, &truth, x)).collect();
        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, 5e5, 0.0]).unwrap();
        let fit = lsq_fit(&spec, &xs, &ys).unwrap();
        assert!(fit.converged);
        for j in 0..3 {
            assert_relative_eq!(fit.parameters[j], truth[j], max_relative = 1e-8);
        }
    }

    #[test]
    fn cost_history_is_monotone() {
        let truth = [2.0, 3.0e5, 0.1];
        let xs: Vec<f64> = (0..150).map(|i| i as f64 * 5e-8).collect();
        let mut rng = derive_rng(5, StreamDomain::Aux, 1);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| model_eval(ModelId::ExpDecay, &truth, x) + noise.sample(&mut rng))
            .collect();
        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, 1e6, 0.0]).unwrap();
        let fit = lsq_fit(&spec, &xs, &ys).unwrap();
        assert!(fit.converged);
        assert!(
            fit.cost_history.windows(2).all(|w| w[1] <= w[0]),
            "cost increased along accepted steps: {:?}",
            fit.cost_history
        );
    }

    #[test]
    fn synthetic_voigt_linewidth_recovered() {
        // Line with 0.12 meV Lorentzian width, 1% peak noise.
        let truth = [2.8231, 0.12e-3, 0.05e-3, 1.0];
        let xs: Vec<f64> = (0..400).map(|i| 2.8231 - 1.0e-3 + i as f64 * 5e-6).collect();
        let peak = model_eval(ModelId::Voigt, &truth, truth[0]);
        let mut rng = derive_rng(9, StreamDomain::Aux, 2);
        let noise = Normal::new(0.0, 0.01 * peak).unwrap();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| (model_eval(ModelId::Voigt, &truth, x) + noise.sample(&mut rng)).max(0.0))
            .collect();
        let trace = crate::spectral::SpectrumTrace::new(xs, ys).unwrap();
        let fit = fit_voigt_scan(&trace).unwrap();
        assert!(fit.converged);
        let fl = fit.param("lorentz_fwhm").unwrap();
        assert!(
            (fl - 0.12e-3).abs() < 0.01e-3,
            "lorentz fwhm {fl:e} should be 0.12 meV +/- 0.01 meV"
        );
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let cases: Vec<(ModelId, Vec<f64>, Vec<f64>)> = vec![
            (
                ModelId::ExpDecay,
                vec![2.5, 8.0e5, 0.3],
                (1..40).map(|i| i as f64 * 1e-7).collect(),
            ),
            (
                ModelId::ExpRise,
                vec![1.7, 9.3e-9],
                (1..40).map(|i| i as f64 * 2e-9).collect(),
            ),
            (
                ModelId::StretchedExp,
                vec![1.2, 21e-6, 0.5],
                (1..40).map(|i| i as f64 * 5e-6).collect(),
            ),
            (
                ModelId::StretchedExp,
                vec![1.2, 21e-6, 0.97],
                (1..40).map(|i| i as f64 * 5e-6).collect(),
            ),
            // Detuning coordinates keep position parameters on the same
            // scale as the widths, so a relative FD step stays well inside
            // the line.
            (
                ModelId::Voigt,
                vec![2.0e-4, 1.3e-4, 0.9e-4, 2.0],
                (-30..30).map(|i| 2.0e-4 + i as f64 * 2e-5).collect(),
            ),
            (
                ModelId::LorentzPlusGauss,
                vec![3.0e-4, 1.2e-4, 0.94, -5.0e-4, 1.0e-3, 0.06],
                (-60..60).map(|i| i as f64 * 2.3e-5).collect(),
            ),
            (
                ModelId::G2Combined,
                vec![200.0, 0.37, 0.2, 0.27, 4.05],
                (-80..80).map(|i| i as f64 * 0.21).collect(),
            ),
        ];
        for (model, params, xs) in cases {
            let dev = jacobian_check(model, &params, &xs).unwrap();
            assert!(
                dev < 1e-5,
                "{} jacobian deviates by {dev:e}",
                model.name()
            );
        }
    }

    #[test]
    fn voigt_jacobian_across_width_decades() {
        for exp_l in [-1.5f64, 0.0, 1.5] {
            for exp_g in [-1.5f64, 0.0, 1.5] {
                let fl = 1.0e-4 * 10f64.powf(exp_l);
                let fg = 1.0e-4 * 10f64.powf(exp_g);
                let width = crate::spectral::voigt_fwhm(fl, fg);
                let center = 2.0 * width;
                let xs: Vec<f64> = (-25..=25)
                    .map(|i| center + i as f64 * width / 5.0)
                    .collect();
                let params = vec![center, fl, fg, 1.0];
                let dev = jacobian_check(ModelId::Voigt, &params, &xs).unwrap();
                assert!(
                    dev < 1e-4,
                    "voigt jacobian at widths 1e{exp_l}/1e{exp_g}: {dev:e}"
                );
            }
        }
    }

    #[test]
    fn amplitude_only_fit_matches_closed_form() {
        // Rate and offset fixed: the problem is linear in the amplitude.
        let rate = 4.0e5;
        let offset = 0.25;
        let xs: Vec<f64> = (0..120).map(|i| i as f64 * 3e-7).collect();
        let mut rng = derive_rng(11, StreamDomain::Aux, 3);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 1.9 * (-rate * x).exp() + offset + 0.01 * (rng.random::<f64>() - 0.5))
            .collect();
        let w: Vec<f64> = (0..xs.len()).map(|i| 1.0 + (i % 5) as f64).collect();

        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, rate, offset])
            .unwrap()
            .with_weights(w.clone())
            .with_fixed(vec![false, true, true]);
        let fit = lsq_fit(&spec, &xs, &ys).unwrap();

        let phi: Vec<f64> = xs.iter().map(|&x| (-rate * x).exp()).collect();
        let num: f64 = (0..xs.len()).map(|i| w[i] * phi[i] * (ys[i] - offset)).sum();
        let den: f64 = (0..xs.len()).map(|i| w[i] * phi[i] * phi[i]).sum();
        let closed = num / den;
        assert!(
            (fit.parameters[0] - closed).abs() <= 1e-10 * closed.abs(),
            "LM {} vs closed form {closed}",
            fit.parameters[0]
        );
        // Fixed parameters stay put and carry zero covariance.
        assert_eq!(fit.parameters[1], rate);
        assert_eq!(fit.covariance[(1, 1)], 0.0);
    }

    #[test]
    fn y_scaling_moves_amplitudes_only() {
        let truth = [2.0, 6.0e5, 0.3];
        let xs: Vec<f64> = (0..160).map(|i| i as f64 * 4e-8).collect();
        let mut rng = derive_rng(13, StreamDomain::Aux, 4);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| model_eval(ModelId::ExpDecay, &truth, x) + noise.sample(&mut rng))
            .collect();
        let scale = 37.5;
        let ys_scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();

        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, 1e6, 0.0]).unwrap();
        let spec_scaled = ModelSpec::new(ModelId::ExpDecay, vec![scale, 1e6, 0.0]).unwrap();
        let a = lsq_fit(&spec, &xs, &ys).unwrap();
        let b = lsq_fit(&spec_scaled, &xs, &ys_scaled).unwrap();
        assert_relative_eq!(b.parameters[0], scale * a.parameters[0], max_relative = 1e-8);
        assert_relative_eq!(b.parameters[2], scale * a.parameters[2], max_relative = 1e-6);
        assert_relative_eq!(b.parameters[1], a.parameters[1], max_relative = 1e-8);
    }

    #[test]
    fn bootstrap_spread_matches_covariance_errors() {
        let truth = [1.5, 2.5e5, 0.2];
        let n = 120;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 8e-8).collect();
        let mut rng = derive_rng(17, StreamDomain::Aux, 5);
        let noise = Normal::new(0.0, 0.03).unwrap();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| model_eval(ModelId::ExpDecay, &truth, x) + noise.sample(&mut rng))
            .collect();
        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, 1e5, 0.0]).unwrap();
        let base = lsq_fit(&spec, &xs, &ys).unwrap();
        assert!(base.converged);

        let b_count = 160;
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(b_count);
        for b in 0..b_count {
            let mut rs = derive_rng(18, StreamDomain::Aux, b as u64);
            let mut bx = Vec::with_capacity(n);
            let mut by = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rs.random_range(0..n);
                bx.push(xs[k]);
                by.push(ys[k]);
            }
            let fit = lsq_fit(&spec, &bx, &by).unwrap();
            if fit.converged {
                samples.push(fit.parameters);
            }
        }
        for j in 0..3 {
            let mean: f64 = samples.iter().map(|p| p[j]).sum::<f64>() / samples.len() as f64;
            let var: f64 = samples.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>()
                / (samples.len() - 1) as f64;
            let boot_se = var.sqrt();
            let cov_se = base.covariance[(j, j)].sqrt();
            let ratio = boot_se / cov_se;
            assert!(
                (0.5..2.0).contains(&ratio),
                "param {j}: bootstrap SE {boot_se:e} vs covariance SE {cov_se:e}"
            );
        }
    }

    #[test]
    fn max_iterations_flags_nonconvergence() {
        // One data point short of determinacy is rejected up front.
        let spec = ModelSpec::new(ModelId::ExpDecay, vec![1.0, 1.0, 0.0]).unwrap();
        assert!(lsq_fit(&spec, &[0.0, 1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn bounds_must_bracket_init() {
        assert!(ModelSpec::new(ModelId::ExpRise, vec![1.0, 2.0])
            .unwrap()
            .with_bounds(vec![0.0, 3.0], vec![10.0, 10.0])
            .is_err());
    }
}
