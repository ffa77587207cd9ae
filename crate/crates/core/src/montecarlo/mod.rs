//! Stochastic trajectory engine.
//!
//! Exact-event kinetic Monte Carlo over the charge-state machine of
//! [`crate::dynamics`], with a random-telegraph gate on the resonant
//! excitation channel, photon detection (splitter, jitter, dead time,
//! dark counts) and time-tag stream synthesis. All randomness flows from
//! derived [`rng`] streams, so results are bit-identical for a given
//! master seed regardless of parallelism.

pub mod rng;
mod stream;

pub use stream::{DetectorModel, TagRecord, TimeTagStream, FLAG_DARK};

use crate::constants::{seconds_to_ticks, TIME_UNIT_FS};
use crate::correlation::{accumulate_pairs, CoincidenceHistogram, TelegraphRates};
use crate::dynamics::{EmitterModel, PulseSequence};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rng::{derive_rng, StreamDomain};

/// Charge state of the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeState {
    Ground,
    Excited,
    Ionized,
}

impl ChargeState {
    /// Index in the dynamics module's population vectors.
    pub fn index(self) -> usize {
        match self {
            ChargeState::Ground => crate::dynamics::STATE_GROUND,
            ChargeState::Excited => crate::dynamics::STATE_EXCITED,
            ChargeState::Ionized => crate::dynamics::STATE_IONIZED,
        }
    }
}

/// The two-state blinking gate as a continuous-time Markov process.
///
/// Dwell rates are chosen so the stationary intensity autocorrelation of
/// gated emission reproduces the fitted bunching law
/// `1 + (k_off/k_on) exp(-|tau| (k_on k_off)/(k_on + k_off))`: amplitude
/// `k_off/k_on`, duty cycle `k_on/(k_on+k_off)` and correlation time
/// `tau1 = 1/k_on + 1/k_off`.
#[derive(Debug, Clone, Copy)]
pub struct TelegraphProcess {
    /// OFF -> ON rate, 1/s.
    pub rate_to_on: f64,
    /// ON -> OFF rate, 1/s.
    pub rate_to_off: f64,
}

impl TelegraphProcess {
    pub fn from_rates(rates: &TelegraphRates) -> Self {
        let tau1_s = rates.tau1_ns() * 1e-9;
        let b = rates.bunch_ratio();
        let rate_to_on = 1.0 / (tau1_s * (1.0 + b));
        TelegraphProcess {
            rate_to_on,
            rate_to_off: b * rate_to_on,
        }
    }

    pub fn duty_cycle(&self) -> f64 {
        self.rate_to_on / (self.rate_to_on + self.rate_to_off)
    }

    fn relaxation_rate(&self) -> f64 {
        self.rate_to_on + self.rate_to_off
    }

    /// Explicit switch path up to `t_end`: returns (switch time, new state)
    /// events starting from the stationary distribution at t = 0.
    pub fn sample_path(&self, t_end: f64, seed: u64) -> (bool, Vec<(f64, bool)>) {
        let mut r = derive_rng(seed, StreamDomain::Aux, 0);
        let initial = r.random::<f64>() < self.duty_cycle();
        let mut on = initial;
        let mut t = 0.0;
        let mut path = Vec::new();
        loop {
            let rate = if on { self.rate_to_off } else { self.rate_to_on };
            t += exp_sample(&mut r, rate);
            if t >= t_end {
                break;
            }
            on = !on;
            path.push((t, on));
        }
        (initial, path)
    }

    /// Fraction of `[0, t_end]` spent ON along a sampled path.
    pub fn on_fraction(&self, t_end: f64, seed: u64) -> f64 {
        let (initial, path) = self.sample_path(t_end, seed);
        let mut on = initial;
        let mut last = 0.0;
        let mut time_on = 0.0;
        for &(t, next) in &path {
            if on {
                time_on += t - last;
            }
            last = t;
            on = next;
        }
        if on {
            time_on += t_end - last;
        }
        time_on / t_end
    }
}

/// Lazily propagated telegraph state: the marginal law of a two-state
/// Markov chain lets the gate be sampled only at query times.
struct TelegraphGate {
    process: TelegraphProcess,
    t_last: f64,
    on: bool,
}

impl TelegraphGate {
    fn new(process: TelegraphProcess, rng: &mut ChaCha8Rng, initial_on: Option<bool>) -> Self {
        let on = initial_on.unwrap_or_else(|| rng.random::<f64>() < process.duty_cycle());
        TelegraphGate {
            process,
            t_last: 0.0,
            on,
        }
    }

    fn state_at(&mut self, t: f64, rng: &mut ChaCha8Rng) -> bool {
        debug_assert!(t >= self.t_last);
        let pi = self.process.duty_cycle();
        let decay = (-self.process.relaxation_rate() * (t - self.t_last)).exp();
        let p_on = if self.on {
            pi + (1.0 - pi) * decay
        } else {
            pi * (1.0 - decay)
        };
        self.on = rng.random::<f64>() < p_on;
        self.t_last = t;
        self.on
    }
}

#[inline]
fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random::<f64>();
    -(1.0 - u).ln() / rate
}

/// Starting conditions and recording options for a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub initial_charge: ChargeState,
    /// None draws the stationary telegraph state.
    pub initial_telegraph_on: Option<bool>,
    /// Record every charge-state transition (off for long streams).
    pub record_transitions: bool,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            initial_charge: ChargeState::Ground,
            initial_telegraph_on: None,
            record_transitions: true,
        }
    }
}

/// Result of one stochastic trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Radiative emission times, seconds, strictly increasing.
    pub emissions_s: Vec<f64>,
    /// Charge-state path as (time, new state); first entry is the initial
    /// state at t = 0. Empty if transition recording was disabled.
    pub transitions: Vec<(f64, ChargeState)>,
}

impl Trajectory {
    /// Charge state at time `t` from the recorded path.
    pub fn state_at(&self, t: f64) -> ChargeState {
        let idx = self.transitions.partition_point(|&(tt, _)| tt <= t);
        self.transitions[idx.saturating_sub(1)].1
    }
}

/// Exact-event simulation of the emitter over a pulse sequence.
///
/// Exponential waiting times drive every constant-rate channel. The
/// telegraph gates resonant excitation through thinning: candidate
/// excitations are generated at the full rate and accepted only when the
/// lazily-sampled gate is ON. The spontaneous discharge channel samples
/// its Weibull waiting time by inverse CDF from the accumulated dark age;
/// its clock runs only across dark segments and resets on recharge or
/// illumination. Deterministic per seed.
pub fn simulate_trajectory(m: &EmitterModel, seq: &PulseSequence, seed: u64) -> Result<Trajectory> {
    simulate_trajectory_with(m, seq, seed, TrajectoryOptions::default())
}

pub fn simulate_trajectory_with(
    m: &EmitterModel,
    seq: &PulseSequence,
    seed: u64,
    opts: TrajectoryOptions,
) -> Result<Trajectory> {
    m.validate()?;
    let mut rng = derive_rng(seed, StreamDomain::Trajectory, 0);
    let mut emissions = Vec::new();
    let mut transitions = Vec::new();
    run_trajectory(m, seq, &mut rng, opts, &mut emissions, &mut transitions)?;
    Ok(Trajectory {
        emissions_s: emissions,
        transitions,
    })
}

fn run_trajectory(
    m: &EmitterModel,
    seq: &PulseSequence,
    rng: &mut ChaCha8Rng,
    opts: TrajectoryOptions,
    emissions: &mut Vec<f64>,
    transitions: &mut Vec<(f64, ChargeState)>,
) -> Result<()> {
    let process = TelegraphProcess::from_rates(&m.telegraph);
    let mut gate = TelegraphGate::new(process, rng, opts.initial_telegraph_on);
    let mut charge = opts.initial_charge;
    let mut t = 0.0f64;
    // Start of the running dark interval; None while illuminated.
    let mut dark_origin: Option<f64> = None;
    if opts.record_transitions {
        transitions.push((0.0, charge));
    }

    let mut seg_start = 0.0f64;
    for seg in &seq.segments {
        let seg_end = seg_start + seg.duration_s;
        let kp = m.k_exc_per_nw * seg.p_resonant_nw;
        let cap = m.capture_per_nw * seg.p_aboveband_nw;
        let aug = m.auger_per_nw * seg.p_resonant_nw;
        let rech = m.recharge.rate(seg.p_aboveband_nw);
        let dark = seg.p_resonant_nw == 0.0 && seg.p_aboveband_nw == 0.0;
        if dark {
            dark_origin.get_or_insert(seg_start);
        } else {
            dark_origin = None;
        }

        t = t.max(seg_start);
        loop {
            match charge {
                ChargeState::Excited => {
                    let exit = m.gamma_rad + aug;
                    let t_ev = t + exp_sample(rng, exit);
                    if t_ev >= seg_end {
                        t = seg_end;
                        break;
                    }
                    t = t_ev;
                    if rng.random::<f64>() * exit < m.gamma_rad {
                        emissions.push(t);
                        charge = ChargeState::Ground;
                    } else {
                        charge = ChargeState::Ionized;
                    }
                    if opts.record_transitions {
                        transitions.push((t, charge));
                    }
                }
                ChargeState::Ionized => {
                    let t_ev = t + exp_sample(rng, rech);
                    if t_ev >= seg_end {
                        t = seg_end;
                        break;
                    }
                    t = t_ev;
                    charge = ChargeState::Ground;
                    dark_origin = if dark { Some(t) } else { None };
                    if opts.record_transitions {
                        transitions.push((t, charge));
                    }
                }
                ChargeState::Ground => {
                    // Spontaneous discharge: inverse-CDF sample conditioned
                    // on the accumulated dark age.
                    let t_dis = match (dark, m.discharge_scale_s.is_finite()) {
                        (true, true) => {
                            let origin = dark_origin.unwrap_or(seg_start);
                            let age = (t - origin).max(0.0);
                            let s = m.discharge_scale_s;
                            let beta = m.discharge_beta;
                            let u: f64 = rng.random();
                            let arg = (age / s).powf(beta) - (1.0 - u).ln();
                            origin + s * arg.powf(1.0 / beta)
                        }
                        _ => f64::INFINITY,
                    };
                    let t_cap = t + exp_sample(rng, cap);
                    let limit = seg_end.min(t_cap).min(t_dis);

                    // Thinned excitation: candidates at the full rate,
                    // accepted when the gate is ON.
                    let mut accepted = f64::INFINITY;
                    if kp > 0.0 {
                        let mut t_cand = t;
                        loop {
                            t_cand += exp_sample(rng, kp);
                            if t_cand >= limit {
                                break;
                            }
                            if gate.state_at(t_cand, rng) {
                                accepted = t_cand;
                                break;
                            }
                        }
                    }

                    if accepted < limit {
                        t = accepted;
                        charge = ChargeState::Excited;
                    } else if t_cap < seg_end && t_cap <= t_dis {
                        t = t_cap;
                        charge = ChargeState::Excited;
                    } else if t_dis < seg_end {
                        t = t_dis;
                        charge = ChargeState::Ionized;
                    } else {
                        t = seg_end;
                        break;
                    }
                    if opts.record_transitions {
                        transitions.push((t, charge));
                    }
                }
            }
        }
        seg_start = seg_end;
    }
    Ok(())
}

/// Detector response: Bernoulli survival, 50:50 routing, Gaussian jitter,
/// same-channel dead time and Poisson dark counts. Tags outside
/// `[0, span]` after jitter are dropped; output is sorted.
///
/// Survival, routing and jitter variates are drawn for every emission
/// whether or not it survives, so runs with different efficiencies share
/// the rest of their randomness.
pub fn detect(
    emissions_s: &[f64],
    det: &DetectorModel,
    span_s: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    det.validate()?;
    if !(span_s > 0.0) {
        return Err(Error::domain("span must be positive"));
    }
    if emissions_s.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("emissions must be sorted"));
    }
    let mut rng_det = derive_rng(seed, StreamDomain::Detection, 0);
    let mut rng_dark0 = derive_rng(seed, StreamDomain::DarkCounts, 0);
    let mut rng_dark1 = derive_rng(seed, StreamDomain::DarkCounts, 1);
    detect_with_rngs(
        emissions_s,
        det,
        span_s,
        &mut rng_det,
        &mut rng_dark0,
        &mut rng_dark1,
    )
}

fn detect_with_rngs(
    emissions_s: &[f64],
    det: &DetectorModel,
    span_s: f64,
    rng_det: &mut ChaCha8Rng,
    rng_dark0: &mut ChaCha8Rng,
    rng_dark1: &mut ChaCha8Rng,
) -> Result<TimeTagStream> {
    let jitter_s = det.jitter_sigma_ps * 1e-12;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let span_ticks = seconds_to_ticks(span_s);

    let mut records: Vec<TagRecord> = Vec::with_capacity(emissions_s.len() / 2);
    for &t in emissions_s {
        let u_surv: f64 = rng_det.random();
        let u_chan: f64 = rng_det.random();
        let z: f64 = normal.sample(rng_det);
        if u_surv >= det.efficiency {
            continue;
        }
        let channel = if u_chan < det.splitter_ratio { 0 } else { 1 };
        let jittered = t + z * jitter_s;
        if jittered < 0.0 || jittered > span_s {
            continue;
        }
        let ticks = seconds_to_ticks(jittered);
        if ticks > span_ticks {
            continue;
        }
        records.push(TagRecord {
            timestamp: ticks,
            channel,
            flags: 0,
        });
    }

    // Independent Poisson dark tags per channel.
    for (channel, rng_dark) in [(0u32, rng_dark0), (1u32, rng_dark1)] {
        if det.dark_rate <= 0.0 {
            continue;
        }
        let mut t = 0.0f64;
        loop {
            t += exp_sample(rng_dark, det.dark_rate);
            if t >= span_s {
                break;
            }
            records.push(TagRecord {
                timestamp: seconds_to_ticks(t),
                channel,
                flags: FLAG_DARK,
            });
        }
    }

    records.sort_by_key(|r| (r.timestamp, r.channel, r.flags));

    // Greedy same-channel dead-time filter.
    if det.dead_time_ns > 0.0 {
        let dead_ticks = seconds_to_ticks(det.dead_time_ns * 1e-9);
        let mut last: [Option<u64>; 2] = [None, None];
        records.retain(|r| {
            let slot = &mut last[r.channel as usize];
            match *slot {
                Some(prev) if r.timestamp - prev < dead_ticks => false,
                _ => {
                    *slot = Some(r.timestamp);
                    true
                }
            }
        });
    }

    TimeTagStream::new(TIME_UNIT_FS, span_ticks, records)
}

/// Outcome of a complete correlation experiment, with the ground truth
/// the stream was generated from.
#[derive(Debug, Clone)]
pub struct G2Experiment {
    pub histogram: CoincidenceHistogram,
    /// Realized per-channel count rates, counts/s.
    pub rate_ch0: f64,
    pub rate_ch1: f64,
    /// Generating bunching parameters.
    pub truth_tau1_ns: f64,
    pub truth_bunch_ratio: f64,
    /// Design signal fraction implied by the detector's dark rate.
    pub design_signal_fraction: f64,
}

/// CW correlation experiment: simulate, detect and histogram in
/// independent acquisition segments whose partial histograms merge
/// exactly. Each segment owns derived RNG streams keyed by its index, so
/// the result is identical for any degree of parallelism.
#[allow(clippy::too_many_arguments)]
pub fn simulate_g2_experiment(
    m: &EmitterModel,
    det: &DetectorModel,
    p_res_nw: f64,
    p_ab_nw: f64,
    duration_s: f64,
    bin_width_s: f64,
    max_delay_s: f64,
    seed: u64,
) -> Result<G2Experiment> {
    m.validate()?;
    det.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::domain("duration must be positive"));
    }
    let tick_s = 1e-15;
    let bin_ticks = (bin_width_s / tick_s).round() as i64;
    let half_bins = (max_delay_s / bin_width_s).round() as i64;
    if bin_ticks < 1 || half_bins < 1 {
        return Err(Error::domain("bin width and delay window are too small"));
    }
    let window = bin_ticks * half_bins + bin_ticks / 2;

    const SEGMENT_S: f64 = 1.0;
    let n_segments = (duration_s / SEGMENT_S).ceil().max(1.0) as u64;
    let seg_len = duration_s / n_segments as f64;

    let n_bins = (2 * half_bins + 1) as usize;
    let (counts, n0, n1) = (0..n_segments)
        .into_par_iter()
        .map(|i| segment_histogram(m, det, p_res_nw, p_ab_nw, seg_len, seed, i, window, bin_ticks, half_bins, n_bins))
        .try_reduce(
            || (vec![0u64; n_bins], 0u64, 0u64),
            |mut acc, item| {
                for (a, b) in acc.0.iter_mut().zip(&item.0) {
                    *a += b;
                }
                Ok((acc.0, acc.1 + item.1, acc.2 + item.2))
            },
        )?;

    let r0 = n0 as f64 / duration_s;
    let r1 = n1 as f64 / duration_s;
    let normalization = r0 * r1 * duration_s * bin_width_s;
    let bin_ps = bin_ticks as f64 * tick_s * 1e12;
    let delays_ps = (-half_bins..=half_bins).map(|k| k as f64 * bin_ps).collect();

    let process = TelegraphProcess::from_rates(&m.telegraph);
    let emission_rate = expected_emission_rate(m, p_res_nw, p_ab_nw);
    let signal_per_channel = det.efficiency * emission_rate * 0.5;
    let design_r = signal_per_channel / (signal_per_channel + det.dark_rate);

    Ok(G2Experiment {
        histogram: CoincidenceHistogram {
            bin_width_ps: bin_ps,
            delays_ps,
            counts,
            normalization,
        },
        rate_ch0: r0,
        rate_ch1: r1,
        truth_tau1_ns: 1e9 / process.relaxation_rate(),
        truth_bunch_ratio: process.rate_to_off / process.rate_to_on,
        design_signal_fraction: design_r,
    })
}

#[allow(clippy::too_many_arguments)]
fn segment_histogram(
    m: &EmitterModel,
    det: &DetectorModel,
    p_res_nw: f64,
    p_ab_nw: f64,
    seg_len: f64,
    seed: u64,
    index: u64,
    window: i64,
    bin_ticks: i64,
    half_bins: i64,
    n_bins: usize,
) -> Result<(Vec<u64>, u64, u64)> {
    let seq = PulseSequence::cw(seg_len, p_res_nw, p_ab_nw)?;
    let mut rng = derive_rng(seed, StreamDomain::Trajectory, index);
    let mut emissions = Vec::new();
    let mut transitions = Vec::new();
    run_trajectory(
        m,
        &seq,
        &mut rng,
        TrajectoryOptions {
            initial_charge: ChargeState::Ground,
            initial_telegraph_on: None,
            record_transitions: false,
        },
        &mut emissions,
        &mut transitions,
    )?;

    let mut rng_det = derive_rng(seed, StreamDomain::Detection, index);
    let mut rng_d0 = derive_rng(seed, StreamDomain::DarkCounts, 2 * index);
    let mut rng_d1 = derive_rng(seed, StreamDomain::DarkCounts, 2 * index + 1);
    let stream = detect_with_rngs(&emissions, det, seg_len, &mut rng_det, &mut rng_d0, &mut rng_d1)?;

    let t0 = stream.channel_timestamps(0);
    let t1 = stream.channel_timestamps(1);
    let mut counts = vec![0u64; n_bins];
    accumulate_pairs(&t0, &t1, window, bin_ticks, half_bins, &mut counts);
    Ok((counts, t0.len() as u64, t1.len() as u64))
}

/// Expected radiative emission rate under CW drive, ignoring the (slow)
/// ionized fraction: duty * kp * gamma / (kp + gamma) branching.
pub fn expected_emission_rate(m: &EmitterModel, p_res_nw: f64, p_ab_nw: f64) -> f64 {
    let process = TelegraphProcess::from_rates(&m.telegraph);
    let kp = m.k_exc_per_nw * p_res_nw + m.capture_per_nw * p_ab_nw;
    let cycle = kp * m.gamma_rad / (kp + m.gamma_rad + m.auger_per_nw * p_res_nw);
    process.duty_cycle() * cycle
}

/// Merge per-segment streams into one absolute-time stream; used when a
/// simulated experiment is persisted as a `.ttag` file.
pub fn simulate_g2_stream(
    m: &EmitterModel,
    det: &DetectorModel,
    p_res_nw: f64,
    p_ab_nw: f64,
    duration_s: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    m.validate()?;
    det.validate()?;
    const SEGMENT_S: f64 = 1.0;
    let n_segments = (duration_s / SEGMENT_S).ceil().max(1.0) as u64;
    let seg_len = duration_s / n_segments as f64;
    let mut records = Vec::new();
    for index in 0..n_segments {
        let seq = PulseSequence::cw(seg_len, p_res_nw, p_ab_nw)?;
        let mut rng = derive_rng(seed, StreamDomain::Trajectory, index);
        let mut emissions = Vec::new();
        let mut transitions = Vec::new();
        run_trajectory(
            m,
            &seq,
            &mut rng,
            TrajectoryOptions {
                initial_charge: ChargeState::Ground,
                initial_telegraph_on: None,
                record_transitions: false,
            },
            &mut emissions,
            &mut transitions,
        )?;
        let mut rng_det = derive_rng(seed, StreamDomain::Detection, index);
        let mut rng_d0 = derive_rng(seed, StreamDomain::DarkCounts, 2 * index);
        let mut rng_d1 = derive_rng(seed, StreamDomain::DarkCounts, 2 * index + 1);
        let seg_stream =
            detect_with_rngs(&emissions, det, seg_len, &mut rng_det, &mut rng_d0, &mut rng_d1)?;
        let base = seconds_to_ticks(index as f64 * seg_len);
        records.extend(seg_stream.records.iter().map(|r| TagRecord {
            timestamp: base + r.timestamp,
            ..*r
        }));
    }
    records.sort_by_key(|r| (r.timestamp, r.channel, r.flags));
    TimeTagStream::new(TIME_UNIT_FS, seconds_to_ticks(duration_s), records)
}

/// Two independent Poisson tag streams at `rate` per channel; the flat-g2
/// null instrument for the correlation estimator.
pub fn poisson_pair_stream(rate_per_channel: f64, span_s: f64, seed: u64) -> Result<TimeTagStream> {
    if !(rate_per_channel > 0.0) || !(span_s > 0.0) {
        return Err(Error::domain("rate and span must be positive"));
    }
    let mut records = Vec::new();
    for channel in 0..2u32 {
        let mut rng = derive_rng(seed, StreamDomain::Aux, 100 + channel as u64);
        let mut t = 0.0;
        loop {
            t += exp_sample(&mut rng, rate_per_channel);
            if t >= span_s {
                break;
            }
            records.push(TagRecord {
                timestamp: seconds_to_ticks(t),
                channel,
                flags: 0,
            });
        }
    }
    records.sort_by_key(|r| (r.timestamp, r.channel));
    TimeTagStream::new(TIME_UNIT_FS, seconds_to_ticks(span_s), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::coincidence_histogram;
    use crate::dynamics::{PulseSegment, RechargeModel};
    use approx::assert_relative_eq;

    fn quiet_telegraph() -> TelegraphRates {
        // Duty cycle ~ 1, vanishing bunching: effectively no blinking.
        TelegraphRates::new(1.0, 1e-9).unwrap()
    }

    fn base_model() -> EmitterModel {
        EmitterModel {
            gamma_rad: 1.0 / 192e-12,
            k_exc_per_nw: 7.0e3,
            capture_per_nw: 0.0,
            auger_per_nw: 0.0,
            recharge: RechargeModel::Linear { per_nw: 1.0e5 },
            discharge_scale_s: f64::INFINITY,
            discharge_beta: 0.5,
            telegraph: quiet_telegraph(),
        }
    }

    #[test]
    fn dark_decay_from_excited_state() {
        // No drive, initial state X: exactly one emission per trajectory,
        // exponentially distributed with the radiative lifetime.
        let m = base_model();
        let seq = PulseSequence::cw(10e-9, 0.0, 0.0).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            let tr = simulate_trajectory_with(
                &m,
                &seq,
                1000 + i,
                TrajectoryOptions {
                    initial_charge: ChargeState::Excited,
                    initial_telegraph_on: Some(true),
                    record_transitions: false,
                },
            )
            .unwrap();
            assert!(tr.emissions_s.len() <= 1);
            if let Some(&t) = tr.emissions_s.first() {
                sum += t;
                count += 1;
            }
        }
        // All but e^-52 of the decays land inside the 10 ns window.
        assert!(count > n as usize * 999 / 1000);
        let mean = sum / count as f64;
        let se = 192e-12 / (count as f64).sqrt();
        assert!(
            (mean - 192e-12).abs() < 3.0 * se,
            "mean {mean:.3e}, expected 192 ps +/- {:.1e}",
            3.0 * se
        );
    }

    #[test]
    fn same_seed_is_bit_exact() {
        let mut m = base_model();
        m.telegraph = TelegraphRates::new(1.1614, 0.31358).unwrap();
        let seq = PulseSequence::cw(2e-3, 100.0, 32.0).unwrap();
        let a = simulate_trajectory(&m, &seq, 99).unwrap();
        let b = simulate_trajectory(&m, &seq, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&m, &seq, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn telegraph_on_fraction_matches_duty_cycle() {
        let rates = crate::correlation::telegraph_rates(4.05, 0.27).unwrap();
        let process = TelegraphProcess::from_rates(&rates);
        let t_end = 1e-3;
        let f = process.on_fraction(t_end, 7);
        let duty = 1.0 / 1.27;
        // Standard error of a time average over T with correlation time tau1.
        let tau1 = 4.05e-9;
        let se = (2.0 * duty * (1.0 - duty) * tau1 / t_end).sqrt();
        assert!(
            (f - duty).abs() < 3.0 * se,
            "on fraction {f:.5} vs duty {duty:.5} (3se {:.1e})",
            3.0 * se
        );
        assert_relative_eq!(process.duty_cycle(), duty, max_relative = 1e-12);
    }

    #[test]
    fn telegraph_autocorrelation_time_matches_tau1() {
        // The dwell rates are derived so the two-state relaxation rate is
        // 1/tau1 = k_on k_off / (k_on + k_off).
        let rates = crate::correlation::telegraph_rates(4.05, 0.27).unwrap();
        let p = TelegraphProcess::from_rates(&rates);
        assert_relative_eq!(1.0 / p.relaxation_rate(), 4.05e-9, max_relative = 1e-12);
        assert_relative_eq!(p.rate_to_off / p.rate_to_on, 0.27, max_relative = 1e-12);
    }

    #[test]
    fn waiting_times_pass_ks_against_hypoexponential() {
        // ON-state CW drive with no other channels: the inter-emission
        // waiting time is Exp(kp) + Exp(gamma).
        let m = base_model();
        let kp = m.k_exc_per_nw * 100.0;
        let gamma = m.gamma_rad;
        let seq = PulseSequence::cw(2.0, 100.0, 0.0).unwrap();
        let tr = simulate_trajectory_with(
            &m,
            &seq,
            31,
            TrajectoryOptions {
                initial_charge: ChargeState::Ground,
                initial_telegraph_on: Some(true),
                record_transitions: false,
            },
        )
        .unwrap();
        let mut gaps: Vec<f64> = tr.emissions_s.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.len() >= 100_000, "only {} gaps", gaps.len());
        gaps.truncate(100_000);
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |t: f64| {
            1.0 - (kp * (-gamma * t).exp() - gamma * (-kp * t).exp()) / (kp - gamma)
        };
        let n = gaps.len() as f64;
        let mut d = 0.0f64;
        for (i, &g) in gaps.iter().enumerate() {
            let f = cdf(g);
            d = d.max((f - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - f).abs());
        }
        // 1% critical value of the Kolmogorov distribution.
        let crit = 1.628 / n.sqrt();
        assert!(d < crit, "KS statistic {d:.3e} exceeds {crit:.3e}");
    }

    #[test]
    fn detect_lossless_limit_partitions_emissions() {
        let emissions: Vec<f64> = (1..2000).map(|i| i as f64 * 3.7e-7).collect();
        let det = DetectorModel::ideal();
        let stream = detect(&emissions, &det, 1e-3, 5).unwrap();
        assert_eq!(stream.records.len(), emissions.len());
        let mut recovered: Vec<u64> = stream.records.iter().map(|r| r.timestamp).collect();
        recovered.sort_unstable();
        let expected: Vec<u64> = emissions.iter().map(|&t| seconds_to_ticks(t)).collect();
        assert_eq!(recovered, expected);
        assert!(stream.channel_count(0) > 0 && stream.channel_count(1) > 0);
    }

    #[test]
    fn detect_zero_efficiency_leaves_dark_counts() {
        let emissions: Vec<f64> = (1..50_000).map(|i| i as f64 * 1e-8).collect();
        let det = DetectorModel {
            efficiency: 0.0,
            dark_rate: 2.0e4,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 0.0,
            splitter_ratio: 0.5,
        };
        let span = 0.5;
        let stream = detect(&emissions, &det, span, 11).unwrap();
        assert!(stream.records.iter().all(|r| r.flags & FLAG_DARK != 0));
        for ch in 0..2 {
            let rate = stream.channel_count(ch) as f64 / span;
            let se = (det.dark_rate / span).sqrt();
            assert!(
                (rate - det.dark_rate).abs() < 3.0 * se,
                "channel {ch} rate {rate}"
            );
        }
    }

    #[test]
    fn detection_is_monotone_in_efficiency() {
        let emissions: Vec<f64> = (1..40_000).map(|i| i as f64 * 2.3e-8).collect();
        let span = 1e-3;
        let mut last = [usize::MAX, usize::MAX];
        for eff in [1.0, 0.8, 0.5, 0.2, 0.05] {
            let det = DetectorModel {
                efficiency: eff,
                dark_rate: 1e4,
                jitter_sigma_ps: 20.0,
                dead_time_ns: 10.0,
                splitter_ratio: 0.5,
            };
            let stream = detect(&emissions, &det, span, 17).unwrap();
            for ch in 0..2usize {
                let n = stream.channel_count(ch as u32);
                assert!(n <= last[ch], "channel {ch} count grew as efficiency fell");
                last[ch] = n;
            }
        }
    }

    #[test]
    fn dead_time_filter_is_exact() {
        let emissions: Vec<f64> = (1..20_000).map(|i| i as f64 * 5e-9).collect();
        let det = DetectorModel {
            efficiency: 1.0,
            dark_rate: 0.0,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 25.0,
            splitter_ratio: 0.5,
        };
        let stream = detect(&emissions, &det, 1e-3, 23).unwrap();
        let dead_ticks = seconds_to_ticks(25e-9);
        for ch in 0..2 {
            let ts = stream.channel_timestamps(ch);
            assert!(ts.windows(2).all(|w| w[1] - w[0] >= dead_ticks));
        }
        assert!(stream
            .records
            .windows(2)
            .all(|w| w[1].timestamp >= w[0].timestamp));
    }

    #[test]
    fn ideal_emitter_antibunches() {
        // Blinking-free, background-free: the central bin of the
        // normalized histogram must show a deep dip.
        let m = base_model();
        let det = DetectorModel::ideal();
        let exp = simulate_g2_experiment(&m, &det, 100.0, 0.0, 8.0, 40e-12, 20e-9, 3).unwrap();
        let g2 = exp.histogram.g2_values();
        let center = g2.len() / 2;
        assert!(
            g2[center] < 0.1,
            "central-bin g2 {} should be < 0.1",
            g2[center]
        );
        // Plateau sits at 1 without blinking.
        let edge_mean: f64 = g2[..100].iter().sum::<f64>() / 100.0;
        assert!((edge_mean - 1.0).abs() < 0.05, "plateau {edge_mean}");
    }

    #[test]
    fn poisson_streams_give_flat_g2() {
        let stream = poisson_pair_stream(1e8, 0.01, 12).unwrap();
        assert!(stream.channel_count(0) >= 900_000);
        let h = coincidence_histogram(&stream, 2e-9, 25e-9).unwrap();
        let g2 = h.g2_values();
        for (i, v) in g2.iter().enumerate() {
            assert!(
                (v - 1.0).abs() < 0.01,
                "bin {i} deviates: {v} (expected 1.00 +/- 0.01)"
            );
        }
        // Chi-square per bin around 1.
        let chi2: f64 = h
            .counts
            .iter()
            .map(|&c| {
                let e = h.normalization;
                (c as f64 - e).powi(2) / e
            })
            .sum::<f64>()
            / h.counts.len() as f64;
        assert!((0.5..2.0).contains(&chi2), "chi2/bin {chi2}");
    }

    #[test]
    fn ensemble_matches_ode_populations() {
        // The central simulator cross-check: ensemble charge-state
        // fractions against the rate-equation solution, telegraph
        // effectively always on.
        let m = EmitterModel {
            gamma_rad: 1.0e7,
            k_exc_per_nw: 4.0e4,
            capture_per_nw: 1.0e3,
            auger_per_nw: 2.0e3,
            recharge: RechargeModel::Linear { per_nw: 2.0e4 },
            discharge_scale_s: f64::INFINITY,
            discharge_beta: 0.5,
            telegraph: quiet_telegraph(),
        };
        let seq = PulseSequence::new(vec![
            PulseSegment {
                duration_s: 4e-6,
                p_resonant_nw: 100.0,
                p_aboveband_nw: 20.0,
            },
            PulseSegment {
                duration_s: 4e-6,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 40.0,
            },
        ])
        .unwrap();
        let ode = crate::dynamics::evolve(&seq, &m, 4e-7, crate::dynamics::Integrator::MatrixExp)
            .unwrap();

        let n_traj = 10_000usize;
        let checkpoints: Vec<f64> = (1..=20).map(|i| i as f64 * 4e-7).collect();
        let mut occupancy = vec![[0u32; 3]; checkpoints.len()];
        for traj_idx in 0..n_traj {
            let tr = simulate_trajectory(&m, &seq, 40_000 + traj_idx as u64).unwrap();
            for (k, &tc) in checkpoints.iter().enumerate() {
                occupancy[k][tr.state_at(tc).index()] += 1;
            }
        }
        for (k, &tc) in checkpoints.iter().enumerate() {
            let oi = ode
                .times
                .iter()
                .position(|&t| (t - tc).abs() < 1e-12)
                .expect("checkpoint on the ODE grid");
            let probs = [ode.ground[oi], ode.excited[oi], ode.ionized[oi]];
            for s in 0..3 {
                let frac = occupancy[k][s] as f64 / n_traj as f64;
                let se = (probs[s] * (1.0 - probs[s]) / n_traj as f64).sqrt();
                assert!(
                    (frac - probs[s]).abs() <= 3.0 * se + 1e-9,
                    "state {s} at t {tc:.2e}: MC {frac:.4} vs ODE {:.4} (3se {:.1e})",
                    probs[s],
                    3.0 * se
                );
            }
        }
    }

    #[test]
    fn g2_standard_errors_shrink_with_duration() {
        let mut m = base_model();
        m.telegraph = crate::correlation::telegraph_rates(4.05, 0.27).unwrap();
        let det = DetectorModel {
            efficiency: 0.9,
            dark_rate: 4.4e4,
            jitter_sigma_ps: 18.0,
            dead_time_ns: 0.0,
            splitter_ratio: 0.5,
        };
        let short = simulate_g2_experiment(&m, &det, 100.0, 0.0, 8.0, 40e-12, 20e-9, 21).unwrap();
        let long = simulate_g2_experiment(&m, &det, 100.0, 0.0, 16.0, 40e-12, 20e-9, 22).unwrap();
        let fit_s = crate::fitting::fit_g2_histogram(&short.histogram).unwrap();
        let fit_l = crate::fitting::fit_g2_histogram(&long.histogram).unwrap();
        // q0 and b standard errors should fall by ~sqrt(2).
        for name in ["q0", "bunch_ratio"] {
            let ss = fit_s.std_error(name).unwrap();
            let sl = fit_l.std_error(name).unwrap();
            let ratio = ss / sl;
            assert!(
                (ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2,
                "{name}: SE ratio {ratio}"
            );
        }
    }
}
