//! Deterministic charge-state kinetics.
//!
//! The emitter is reduced to three states: neutral ground `G`, neutral
//! excited `X` and ionized (dark) `D`. Resonant drive pumps `G -> X`,
//! radiative decay returns `X -> G`, optically induced Auger recombination
//! ionizes `X -> D`, and above-band light restores `D -> G`. A slow
//! spontaneous discharge acts as a time-dependent `G -> D` hazard with a
//! stretched-exponential survival law; its clock runs only while the
//! emitter sits in the dark and resets whenever light recharges it.
//!
//! The nanosecond blinking telegraph is deliberately absent here: the
//! observables this module produces average over it, and it lives in the
//! stochastic engine instead.

mod expm;

pub use expm::expm3;

use crate::correlation::TelegraphRates;
use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Index order of the states in rate matrices and population vectors.
pub const STATE_GROUND: usize = 0;
pub const STATE_EXCITED: usize = 1;
pub const STATE_IONIZED: usize = 2;

/// Recharge rate versus above-band power.
///
/// A single linear coefficient cannot reproduce both measured recovery
/// times (200 ns at 20 nW, 9.3 ns at 90 nW), so the default model is a
/// calibrated two-point table interpolated log-log and extrapolated with
/// the boundary slopes. The plain linear variant remains available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RechargeModel {
    /// rate = per_nw * p_ab
    Linear { per_nw: f64 },
    /// Log-log interpolated (power_nw, rate_per_s) pairs, sorted by power.
    Table { points: Vec<(f64, f64)> },
}

impl RechargeModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RechargeModel::Linear { per_nw } => {
                if !(*per_nw >= 0.0) {
                    return Err(Error::domain("recharge coefficient must be non-negative"));
                }
            }
            RechargeModel::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::domain("recharge table needs at least two points"));
                }
                if points.iter().any(|(p, r)| !(*p > 0.0) || !(*r > 0.0)) {
                    return Err(Error::domain("recharge table entries must be positive"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::domain("recharge table powers must increase"));
                }
            }
        }
        Ok(())
    }

    /// Recharge rate (1/s) at the given above-band power (nW).
    pub fn rate(&self, p_ab_nw: f64) -> f64 {
        if p_ab_nw <= 0.0 {
            return 0.0;
        }
        match self {
            RechargeModel::Linear { per_nw } => per_nw * p_ab_nw,
            RechargeModel::Table { points } => {
                let lp = p_ab_nw.ln();
                let seg = points
                    .windows(2)
                    .find(|w| lp <= w[1].0.ln())
                    .unwrap_or(&points[points.len() - 2..]);
                let (p0, r0) = seg[0];
                let (p1, r1) = seg[1];
                let t = (lp - p0.ln()) / (p1.ln() - p0.ln());
                (r0.ln() + t * (r1.ln() - r0.ln())).exp()
            }
        }
    }
}

/// All physical parameters of the emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    /// Radiative decay rate of the excited state, 1/s.
    pub gamma_rad: f64,
    /// Resonant excitation rate per nW of resonant power, 1/s/nW.
    pub k_exc_per_nw: f64,
    /// Weak neutral-excitation channel fed by the above-band laser,
    /// 1/s/nW; keeps the photoluminescence segment of pulsed protocols
    /// nonzero.
    pub capture_per_nw: f64,
    /// Auger ionization rate out of the excited state per nW of resonant
    /// power, 1/s/nW.
    pub auger_per_nw: f64,
    /// Above-band recharge channel.
    pub recharge: RechargeModel,
    /// Stretched-exponential discharge time constant, seconds. Infinite
    /// disables the channel.
    pub discharge_scale_s: f64,
    /// Stretching exponent beta in (0, 1].
    pub discharge_beta: f64,
    /// Blinking telegraph rates; consumed by the stochastic engine only.
    pub telegraph: TelegraphRates,
}

impl EmitterModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rad > 0.0) {
            return Err(Error::domain("radiative rate must be positive"));
        }
        if self.k_exc_per_nw < 0.0 || self.capture_per_nw < 0.0 || self.auger_per_nw < 0.0 {
            return Err(Error::domain("rate coefficients must be non-negative"));
        }
        self.recharge.validate()?;
        if !(self.discharge_scale_s > 0.0) {
            return Err(Error::domain("discharge scale must be positive"));
        }
        if !(self.discharge_beta > 0.0 && self.discharge_beta <= 1.0) {
            return Err(Error::domain("discharge exponent must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// One constant-power interval of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub duration_s: f64,
    pub p_resonant_nw: f64,
    pub p_aboveband_nw: f64,
}

/// Piecewise-constant laser powers versus time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::domain("pulse sequence must have segments"));
        }
        for s in &segments {
            if !(s.duration_s > 0.0) {
                return Err(Error::domain("segment durations must be positive"));
            }
            if s.p_resonant_nw < 0.0 || s.p_aboveband_nw < 0.0 {
                return Err(Error::domain("powers must be non-negative"));
            }
        }
        Ok(Self { segments })
    }

    /// Single CW segment.
    pub fn cw(duration_s: f64, p_resonant_nw: f64, p_aboveband_nw: f64) -> Result<Self> {
        Self::new(vec![PulseSegment {
            duration_s,
            p_resonant_nw,
            p_aboveband_nw,
        }])
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }
}

/// Sampled scalar trace (time, value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::domain("trace arrays must have equal length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("trace times must strictly increase"));
        }
        Ok(Self { times, values })
    }
}

/// Population trajectory with the derived fluorescence intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    pub ground: Vec<f64>,
    pub excited: Vec<f64>,
    pub ionized: Vec<f64>,
    /// gamma_rad * excited(t); photons per second.
    pub rf_intensity: Vec<f64>,
}

impl PopulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The RF intensity as a plain trace.
    pub fn rf_trace(&self) -> TimeTrace {
        TimeTrace {
            times: self.times.clone(),
            values: self.rf_intensity.clone(),
        }
    }

    /// Restrict to `t in [start, end)`, shifting times to start at zero.
    pub fn window(&self, start: f64, end: f64) -> PopulationTrace {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= start && self.times[i] < end)
            .collect();
        PopulationTrace {
            times: idx.iter().map(|&i| self.times[i] - start).collect(),
            ground: idx.iter().map(|&i| self.ground[i]).collect(),
            excited: idx.iter().map(|&i| self.excited[i]).collect(),
            ionized: idx.iter().map(|&i| self.ionized[i]).collect(),
            rf_intensity: idx.iter().map(|&i| self.rf_intensity[i]).collect(),
        }
    }
}

/// Constant-power rate generator over {G, X, D}; columns sum to zero.
pub fn rate_generator(p_res_nw: f64, p_ab_nw: f64, m: &EmitterModel) -> Result<Matrix3<f64>> {
    if p_res_nw < 0.0 || p_ab_nw < 0.0 {
        return Err(Error::domain("powers must be non-negative"));
    }
    let exc = m.k_exc_per_nw * p_res_nw + m.capture_per_nw * p_ab_nw;
    let auger = m.auger_per_nw * p_res_nw;
    let recharge = m.recharge.rate(p_ab_nw);
    let mut gen = Matrix3::zeros();
    gen[(STATE_EXCITED, STATE_GROUND)] = exc;
    gen[(STATE_GROUND, STATE_EXCITED)] = m.gamma_rad;
    gen[(STATE_IONIZED, STATE_EXCITED)] = auger;
    gen[(STATE_GROUND, STATE_IONIZED)] = recharge;
    for j in 0..3 {
        let off: f64 = (0..3).filter(|&i| i != j).map(|i| gen[(i, j)]).sum();
        gen[(j, j)] = -off;
    }
    Ok(gen)
}

/// Propagator `exp(gen * dt)` with columns renormalized to sum exactly to
/// one, so repeated application cannot drift off the probability simplex.
pub fn stochastic_expm(gen: &Matrix3<f64>, dt: f64) -> Matrix3<f64> {
    let mut e = expm3(&(gen * dt));
    for j in 0..3 {
        let s: f64 = (0..3).map(|i| e[(i, j)]).sum();
        for i in 0..3 {
            e[(i, j)] /= s;
        }
    }
    e
}

/// Stationary distribution of the generator (null space, normalized).
pub fn steady_state(gen: &Matrix3<f64>) -> Result<Vector3<f64>> {
    // Replace the last row with the normalization constraint.
    let mut a = *gen;
    for j in 0..3 {
        a[(2, j)] = 1.0;
    }
    let b = Vector3::new(0.0, 0.0, 1.0);
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::domain("singular generator; no unique steady state"))
}

/// Survival probability of the charge against spontaneous discharge after
/// `t` seconds in the dark: `exp(-(t/scale)^beta)`.
pub fn discharge_survival(t_since_recharge_s: f64, m: &EmitterModel) -> Result<f64> {
    if t_since_recharge_s < 0.0 {
        return Err(Error::domain("time must be non-negative"));
    }
    if m.discharge_scale_s.is_infinite() {
        return Ok(1.0);
    }
    Ok((-(t_since_recharge_s / m.discharge_scale_s).powf(m.discharge_beta)).exp())
}

/// Integration scheme for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exact per-step propagator from the matrix exponential.
    MatrixExp,
    /// Classical Runge-Kutta with automatic substepping.
    Rk4,
}

/// Integrate the populations over a pulse sequence, sampling every `dt`
/// seconds. The spontaneous-discharge hazard is applied by exact survival
/// splitting in dark segments.
pub fn evolve(
    sequence: &PulseSequence,
    m: &EmitterModel,
    dt: f64,
    integrator: Integrator,
) -> Result<PopulationTrace> {
    m.validate()?;
    if !(dt > 0.0) {
        return Err(Error::domain("sample interval must be positive"));
    }

    let mut p = Vector3::new(1.0, 0.0, 0.0);
    let mut t = 0.0f64;
    let mut dark_clock = 0.0f64;

    let n_total: usize = sequence
        .segments
        .iter()
        .map(|s| (s.duration_s / dt).ceil() as usize + 1)
        .sum();
    let mut out = PopulationTrace {
        times: Vec::with_capacity(n_total),
        ground: Vec::with_capacity(n_total),
        excited: Vec::with_capacity(n_total),
        ionized: Vec::with_capacity(n_total),
        rf_intensity: Vec::with_capacity(n_total),
    };
    push_sample(&mut out, t, &p, m)?;

    for seg in &sequence.segments {
        let gen = rate_generator(seg.p_resonant_nw, seg.p_aboveband_nw, m)?;
        let dark = seg.p_resonant_nw == 0.0 && seg.p_aboveband_nw == 0.0;
        if !dark {
            dark_clock = 0.0;
        }
        let n_steps = (seg.duration_s / dt).ceil().max(1.0) as usize;
        let step = seg.duration_s / n_steps as f64;

        let propagate: Box<dyn Fn(&Vector3<f64>) -> Vector3<f64>> = match integrator {
            Integrator::MatrixExp => {
                let e = stochastic_expm(&gen, step);
                Box::new(move |v: &Vector3<f64>| e * v)
            }
            Integrator::Rk4 => {
                let max_rate = gen.abs().max();
                let n_sub = ((step * max_rate) / 0.05).ceil().max(1.0) as usize;
                let h = step / n_sub as f64;
                Box::new(move |v: &Vector3<f64>| {
                    let mut y = *v;
                    for _ in 0..n_sub {
                        let k1 = gen * y;
                        let k2 = gen * (y + k1 * (h / 2.0));
                        let k3 = gen * (y + k2 * (h / 2.0));
                        let k4 = gen * (y + k3 * h);
                        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                    }
                    y
                })
            }
        };

        for _ in 0..n_steps {
            p = propagate(&p);
            if dark && m.discharge_scale_s.is_finite() {
                // Exact survival over [clock, clock + step].
                let s0 = (dark_clock / m.discharge_scale_s).powf(m.discharge_beta);
                let s1 = ((dark_clock + step) / m.discharge_scale_s).powf(m.discharge_beta);
                let moved = p[STATE_GROUND] * (1.0 - (-(s1 - s0)).exp());
                p[STATE_GROUND] -= moved;
                p[STATE_IONIZED] += moved;
                dark_clock += step;
            }
            t += step;
            push_sample(&mut out, t, &p, m)?;
        }
    }
    Ok(out)
}

fn push_sample(out: &mut PopulationTrace, t: f64, p: &Vector3<f64>, m: &EmitterModel) -> Result<()> {
    let sum = p.sum();
    if (sum - 1.0).abs() > 1e-8 || p.iter().any(|&v| !(-1e-8..=1.0 + 1e-8).contains(&v)) {
        return Err(Error::Integration(format!(
            "populations left the simplex at t = {t:.3e}: {p:?}"
        )));
    }
    out.times.push(t);
    out.ground.push(p[STATE_GROUND]);
    out.excited.push(p[STATE_EXCITED]);
    out.ionized.push(p[STATE_IONIZED]);
    out.rf_intensity.push(m.gamma_rad * p[STATE_EXCITED]);
    Ok(())
}

/// Decay rate of the resonance fluorescence during a resonant-only probe:
/// the slow eigenvalue magnitude of the {G, X} block with `D` absorbing.
pub fn probe_decay_rate(p_res_nw: f64, auger_per_nw: f64, m: &EmitterModel) -> f64 {
    let kp = m.k_exc_per_nw * p_res_nw;
    let ap = auger_per_nw * p_res_nw;
    let trace = kp + m.gamma_rad + ap;
    let det = kp * ap;
    // Stable small-root formula for x^2 - trace x + det = 0.
    2.0 * det / (trace + (trace * trace - 4.0 * det).sqrt())
}

/// Find the Auger coefficient whose probe-segment slow eigenvalue equals
/// `observed_decay_rate` at resonant power `p_res_nw`, by bisection.
pub fn calibrate_auger(observed_decay_rate: f64, p_res_nw: f64, m: &EmitterModel) -> Result<f64> {
    if !(observed_decay_rate > 0.0) || !(p_res_nw > 0.0) {
        return Err(Error::domain("decay rate and power must be positive"));
    }
    let rate_at = |a: f64| probe_decay_rate(p_res_nw, a, m);
    let mut hi = observed_decay_rate / p_res_nw; // underestimates: rate(a) < a*p
    let mut guard = 0;
    while rate_at(hi) < observed_decay_rate {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Calibration(format!(
                "target decay rate {observed_decay_rate:.3e} 1/s is unreachable at {p_res_nw} nW"
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < observed_decay_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recharge rate that yields a recovery time constant `tau_target` when
/// the probe keeps ionizing at `p_res_probe`: the observed rise rate is
/// the sum of the recharge and re-ionization rates.
pub fn calibrate_recharge_point(
    tau_target_s: f64,
    p_res_probe_nw: f64,
    m: &EmitterModel,
) -> Result<f64> {
    if !(tau_target_s > 0.0) {
        return Err(Error::domain("target time constant must be positive"));
    }
    let ion = probe_decay_rate(p_res_probe_nw, m.auger_per_nw, m);
    let rate = 1.0 / tau_target_s - ion;
    if !(rate > 0.0) {
        return Err(Error::Calibration(format!(
            "re-ionization at {p_res_probe_nw} nW is faster than 1/{tau_target_s:.3e}s"
        )));
    }
    Ok(rate)
}

/// Simulate the charge-recovery protocol: the emitter starts fully
/// ionized under resonant drive, the above-band laser switches on at
/// t = 0, and the fluorescence rise is fitted to `I0 (1 - exp(-t/tau))`.
///
/// Returns the RF trace of the recovery segment and the fitted tau (s).
pub fn recovery_trace(
    p_ab_nw: f64,
    p_res_probe_nw: f64,
    m: &EmitterModel,
) -> Result<(TimeTrace, f64)> {
    if !(p_ab_nw > 0.0) {
        return Err(Error::domain("above-band power must be positive"));
    }
    m.validate()?;
    let ion = probe_decay_rate(p_res_probe_nw, m.auger_per_nw, m);
    let recharge = m.recharge.rate(p_ab_nw);
    let tau_est = 1.0 / (recharge + ion);
    let dt = tau_est / 100.0;
    let duration = 12.0 * tau_est;

    let gen = rate_generator(p_res_probe_nw, p_ab_nw, m)?;
    let mut p = Vector3::new(0.0, 0.0, 1.0);
    let e = stochastic_expm(&gen, dt);
    let n = (duration / dt).ceil() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    times.push(0.0);
    values.push(m.gamma_rad * p[STATE_EXCITED]);
    for i in 1..=n {
        p = e * p;
        times.push(i as f64 * dt);
        values.push(m.gamma_rad * p[STATE_EXCITED]);
    }
    let trace = TimeTrace::new(times, values)?;

    let fit = crate::fitting::fit_figure(
        crate::fitting::FigureId::Fig4d,
        crate::fitting::FigureData::Trace(&trace),
    )?;
    let tau = fit.headline("tau_s")?;
    Ok((trace, tau))
}

/// Integrated probe fluorescence versus dark delay: charge-stabilize,
/// wait `delay` in the dark, then probe resonantly; one point per delay.
pub fn delay_sweep(
    delays_s: &[f64],
    charge_s: f64,
    charge_p_ab_nw: f64,
    probe_s: f64,
    probe_p_res_nw: f64,
    m: &EmitterModel,
    dt: f64,
) -> Result<TimeTrace> {
    let mut values = Vec::with_capacity(delays_s.len());
    for &delay in delays_s {
        if !(delay > 0.0) {
            return Err(Error::domain("delays must be positive"));
        }
        let seq = PulseSequence::new(vec![
            PulseSegment {
                duration_s: charge_s,
                p_resonant_nw: 0.0,
                p_aboveband_nw: charge_p_ab_nw,
            },
            PulseSegment {
                duration_s: delay,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 0.0,
            },
            PulseSegment {
                duration_s: probe_s,
                p_resonant_nw: probe_p_res_nw,
                p_aboveband_nw: 0.0,
            },
        ])?;
        let trace = evolve(&seq, m, dt, Integrator::MatrixExp)?;
        let probe_start = charge_s + delay;
        let probe = trace.window(probe_start, probe_start + probe_s);
        // Trapezoid-integrated RF over the probe window.
        let integral: f64 = probe
            .times
            .windows(2)
            .zip(probe.rf_intensity.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum();
        values.push(integral);
    }
    TimeTrace::new(delays_s.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn test_model() -> EmitterModel {
        EmitterModel {
            gamma_rad: 5.208e9,
            k_exc_per_nw: 2.0e9,
            capture_per_nw: 1.4e7,
            auger_per_nw: 1.04e4,
            recharge: RechargeModel::Table {
                points: vec![(20.0, 3.99e6), (90.0, 1.064e8)],
            },
            discharge_scale_s: 21e-6,
            discharge_beta: 0.5,
            telegraph: TelegraphRates::new(1.1614, 0.3136).unwrap(),
        }
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let m = test_model();
        let gen = rate_generator(100.0, 32.0, &m).unwrap();
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| gen[(i, j)]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-6 * gen.abs().max());
        }
    }

    #[test]
    fn dark_generator_has_only_radiative_decay() {
        let m = test_model();
        let gen = rate_generator(0.0, 0.0, &m).unwrap();
        assert_eq!(gen[(STATE_EXCITED, STATE_GROUND)], 0.0);
        assert_eq!(gen[(STATE_IONIZED, STATE_EXCITED)], 0.0);
        assert_eq!(gen[(STATE_GROUND, STATE_IONIZED)], 0.0);
        assert_eq!(gen[(STATE_GROUND, STATE_EXCITED)], m.gamma_rad);
    }

    #[test]
    fn steady_state_fully_ionizes_without_recharge() {
        let m = test_model();
        // Vanishing above-band power: the ionized state absorbs everything.
        let gen = rate_generator(100.0, 1e-9, &m).unwrap();
        let ss = steady_state(&gen).unwrap();
        assert!(ss[STATE_IONIZED] > 0.999, "D occupation {}", ss[STATE_IONIZED]);
        // With recharge on, a solid neutral fraction survives.
        let gen2 = rate_generator(100.0, 32.0, &m).unwrap();
        let ss2 = steady_state(&gen2).unwrap();
        assert!(ss2[STATE_IONIZED] < 0.2);
        assert_relative_eq!(ss.sum(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn steady_state_rf_monotone_in_aboveband_power() {
        let m = test_model();
        let mut last = -1.0;
        for p_ab in [2.0, 5.0, 10.0, 20.0, 40.0, 90.0, 200.0] {
            let gen = rate_generator(100.0, p_ab, &m).unwrap();
            let ss = steady_state(&gen).unwrap();
            let rf = m.gamma_rad * ss[STATE_EXCITED];
            assert!(rf >= last, "RF fell from {last} to {rf} at {p_ab} nW");
            last = rf;
        }
    }

    #[test]
    fn evolve_conserves_probability() {
        let m = test_model();
        let seq = PulseSequence::new(vec![
            PulseSegment {
                duration_s: 5e-6,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 40.0,
            },
            PulseSegment {
                duration_s: 1.2e-6,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 0.0,
            },
            PulseSegment {
                duration_s: 4e-6,
                p_resonant_nw: 100.0,
                p_aboveband_nw: 0.0,
            },
        ])
        .unwrap();
        let trace = evolve(&seq, &m, 5e-9, Integrator::MatrixExp).unwrap();
        for i in 0..trace.len() {
            let sum = trace.ground[i] + trace.excited[i] + trace.ionized[i];
            assert!((sum - 1.0).abs() < 1e-8);
            assert!(trace.excited[i] >= -1e-10 && trace.excited[i] <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn evolve_zero_power_is_dark() {
        let m = test_model();
        let seq = PulseSequence::cw(1e-6, 0.0, 0.0).unwrap();
        let trace = evolve(&seq, &m, 1e-8, Integrator::MatrixExp).unwrap();
        assert!(trace.rf_intensity.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn integrators_agree_on_constant_segments() {
        let mut m = test_model();
        // Moderate rates keep the RK4 step count reasonable.
        m.k_exc_per_nw = 2.0e6;
        m.gamma_rad = 1.0e7;
        m.auger_per_nw = 1.0e4;
        let seq = PulseSequence::cw(2e-6, 50.0, 30.0).unwrap();
        let a = evolve(&seq, &m, 1e-8, Integrator::MatrixExp).unwrap();
        let b = evolve(&seq, &m, 1e-8, Integrator::Rk4).unwrap();
        for i in 0..a.len() {
            assert_abs_diff_eq!(a.ground[i], b.ground[i], epsilon = 1e-6);
            assert_abs_diff_eq!(a.excited[i], b.excited[i], epsilon = 1e-6);
            assert_abs_diff_eq!(a.ionized[i], b.ionized[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn no_quench_channels_means_constant_rf() {
        let mut m = test_model();
        m.auger_per_nw = 0.0;
        m.discharge_scale_s = f64::INFINITY;
        let seq = PulseSequence::cw(4e-6, 100.0, 0.0).unwrap();
        let trace = evolve(&seq, &m, 1e-9, Integrator::MatrixExp).unwrap();
        // After the excitation transient the RF must be flat.
        let settled: Vec<f64> = trace
            .times
            .iter()
            .zip(&trace.rf_intensity)
            .filter(|(t, _)| **t > 0.5e-6)
            .map(|(_, v)| *v)
            .collect();
        let first = settled[0];
        for v in settled {
            assert_relative_eq!(v, first, max_relative = 1e-9);
        }
    }

    #[test]
    fn calibration_is_a_fixed_point() {
        let m = test_model();
        let target = 1.013e6;
        let a = calibrate_auger(target, 100.0, &m).unwrap();
        let achieved = probe_decay_rate(100.0, a, &m);
        assert_relative_eq!(achieved, target, max_relative = 1e-4);
    }

    #[test]
    fn calibrated_rate_scales_linearly_with_power() {
        let m = test_model();
        let a = calibrate_auger(1.013e6, 100.0, &m).unwrap();
        let r1 = probe_decay_rate(100.0, a, &m);
        let r2 = probe_decay_rate(200.0, a, &m);
        assert!((r2 / r1 - 2.0).abs() < 0.05 * 2.0, "ratio {}", r2 / r1);
    }

    #[test]
    fn auger_coefficient_scales_inversely_with_power() {
        let m = test_model();
        let a1 = calibrate_auger(1.013e6, 100.0, &m).unwrap();
        let a2 = calibrate_auger(1.013e6, 200.0, &m).unwrap();
        let ratio = a2 / a1;
        assert!((0.45..0.55).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn calibration_rejects_unreachable_targets() {
        let mut m = test_model();
        m.k_exc_per_nw = 1.0; // excitation-starved: decay rate capped at kp
        assert!(calibrate_auger(1e9, 1.0, &m).is_err());
    }

    #[test]
    fn survival_scale_point_and_pure_exponential() {
        let mut m = test_model();
        for beta in [0.3, 0.5, 0.8, 1.0] {
            m.discharge_beta = beta;
            let s = discharge_survival(m.discharge_scale_s, &m).unwrap();
            assert_relative_eq!(s, (-1.0f64).exp(), max_relative = 1e-12);
        }
        m.discharge_beta = 1.0;
        let t = 7.3e-6;
        assert_relative_eq!(
            discharge_survival(t, &m).unwrap(),
            (-t / m.discharge_scale_s).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn recharge_table_interpolates_between_calibration_points() {
        let m = test_model();
        let r20 = m.recharge.rate(20.0);
        let r32 = m.recharge.rate(32.0);
        let r90 = m.recharge.rate(90.0);
        assert!(r20 < r32 && r32 < r90);
        assert_relative_eq!(r20, 3.99e6, max_relative = 1e-9);
        assert_relative_eq!(r90, 1.064e8, max_relative = 1e-9);
        assert_eq!(m.recharge.rate(0.0), 0.0);
        // Extrapolation keeps the boundary slope and stays monotone.
        assert!(m.recharge.rate(150.0) > r90);
        assert!(m.recharge.rate(5.0) < r20);
    }

    proptest! {
        #[test]
        fn generator_columns_conserve_for_random_inputs(
            p_res in 0.0f64..500.0,
            p_ab in 0.0f64..500.0,
        ) {
            let m = test_model();
            let gen = rate_generator(p_res, p_ab, &m).unwrap();
            for j in 0..3 {
                let s: f64 = (0..3).map(|i| gen[(i, j)]).sum();
                prop_assert!(s.abs() <= 1e-6 * gen.abs().max().max(1.0));
            }
        }

        #[test]
        fn recharge_table_is_monotone(p in 1.0f64..500.0) {
            let m = test_model();
            let r1 = m.recharge.rate(p);
            let r2 = m.recharge.rate(p * 1.1);
            prop_assert!(r2 >= r1);
        }
    }
}
