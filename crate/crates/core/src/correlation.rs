//! Second-order correlation models and estimators.
//!
//! The measured correlation factorizes into a short-time antibunching dip
//! and a long-time blinking bunching envelope,
//! `g2_total = amplitude * g2_short * g2_long`. This module carries the
//! closed-form models, the telegraph-rate algebra behind the bunching
//! term, uncorrelated-background correction, and the coincidence-histogram
//! estimator that turns time-tag streams into sampled `g2(tau)` data.

use crate::error::{Error, Result};
use crate::montecarlo::TimeTagStream;
use serde::{Deserialize, Serialize};

/// Parameters of the combined correlation model.
///
/// Times are in nanoseconds. `bunch_ratio` is the off/on rate ratio that
/// sets the bunching amplitude; `amplitude` scales raw count histograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    pub q0: f64,
    pub tau0_ns: f64,
    pub bunch_ratio: f64,
    pub tau1_ns: f64,
    pub amplitude: f64,
}

impl G2Params {
    pub fn new(q0: f64, tau0_ns: f64, bunch_ratio: f64, tau1_ns: f64, amplitude: f64) -> Result<Self> {
        if q0 < 0.0 || bunch_ratio < 0.0 {
            return Err(Error::domain("q0 and bunch ratio must be non-negative"));
        }
        if !(tau0_ns > 0.0) || !(tau1_ns > 0.0) || !(amplitude > 0.0) {
            return Err(Error::domain("tau0, tau1 and amplitude must be positive"));
        }
        Ok(Self {
            q0,
            tau0_ns,
            bunch_ratio,
            tau1_ns,
            amplitude,
        })
    }
}

/// Random-telegraph switching rates, per nanosecond. `k_on` drives the
/// dark-to-emissive transition and `k_off` the reverse, so the emissive
/// duty cycle is `k_on / (k_on + k_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphRates {
    pub k_on_per_ns: f64,
    pub k_off_per_ns: f64,
}

impl TelegraphRates {
    pub fn new(k_on_per_ns: f64, k_off_per_ns: f64) -> Result<Self> {
        if !(k_on_per_ns > 0.0) || !(k_off_per_ns > 0.0) {
            return Err(Error::domain("telegraph rates must be strictly positive"));
        }
        Ok(Self {
            k_on_per_ns,
            k_off_per_ns,
        })
    }

    /// Bunching correlation time tau1 = 1/k_on + 1/k_off, in ns.
    pub fn tau1_ns(&self) -> f64 {
        1.0 / self.k_on_per_ns + 1.0 / self.k_off_per_ns
    }

    /// Bunching amplitude b = k_off / k_on.
    pub fn bunch_ratio(&self) -> f64 {
        self.k_off_per_ns / self.k_on_per_ns
    }

    /// Fraction of time spent in the emissive state.
    pub fn duty_cycle(&self) -> f64 {
        self.k_on_per_ns / (self.k_on_per_ns + self.k_off_per_ns)
    }
}

/// Short-time antibunching factor `1 - (1 - q0) exp(-|tau|/tau0)`.
pub fn g2_short(tau_ns: f64, q0: f64, tau0_ns: f64) -> f64 {
    debug_assert!(tau0_ns > 0.0);
    1.0 - (1.0 - q0) * (-tau_ns.abs() / tau0_ns).exp()
}

/// Long-time blinking factor `1 + b exp(-|tau|/tau1)`.
pub fn g2_long(tau_ns: f64, bunch_ratio: f64, tau1_ns: f64) -> f64 {
    debug_assert!(tau1_ns > 0.0);
    1.0 + bunch_ratio * (-tau_ns.abs() / tau1_ns).exp()
}

/// Combined model: `amplitude * g2_short * g2_long`.
pub fn g2_total(tau_ns: f64, p: &G2Params) -> f64 {
    p.amplitude * g2_short(tau_ns, p.q0, p.tau0_ns) * g2_long(tau_ns, p.bunch_ratio, p.tau1_ns)
}

/// Solve the pair `tau1 = 1/k_on + 1/k_off`, `b = k_off/k_on` for the
/// unique positive rates.
pub fn telegraph_rates(tau1_ns: f64, bunch_ratio: f64) -> Result<TelegraphRates> {
    if !(tau1_ns > 0.0) {
        return Err(Error::domain("tau1 must be positive"));
    }
    if !(bunch_ratio > 0.0) {
        return Err(Error::domain(
            "bunch ratio must be positive for a finite off rate",
        ));
    }
    let k_on = (1.0 + 1.0 / bunch_ratio) / tau1_ns;
    TelegraphRates::new(k_on, bunch_ratio * k_on)
}

/// Background-corrected zero-delay value with its clamp indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedG2 {
    pub value: f64,
    /// True when the raw correction was negative and clamped to zero.
    pub clamped: bool,
}

/// Correct a measured correlation value for uncorrelated background with
/// signal fraction `r`: `(g2 - (1 - r^2)) / r^2`, clamped at zero.
pub fn background_correct(g2_measured: f64, signal_fraction: f64) -> Result<CorrectedG2> {
    if !(signal_fraction > 0.0) || signal_fraction > 1.0 {
        return Err(Error::domain("signal fraction must lie in (0, 1]"));
    }
    let r2 = signal_fraction * signal_fraction;
    let raw = (g2_measured - (1.0 - r2)) / r2;
    if raw < 0.0 {
        Ok(CorrectedG2 {
            value: 0.0,
            clamped: true,
        })
    } else {
        Ok(CorrectedG2 {
            value: raw,
            clamped: false,
        })
    }
}

/// Signal fraction R = S / (S + B) from signal and background rates.
pub fn estimate_r(signal_rate: f64, background_rate: f64) -> Result<f64> {
    if signal_rate < 0.0 || background_rate < 0.0 {
        return Err(Error::domain("rates must be non-negative"));
    }
    let total = signal_rate + background_rate;
    if !(total > 0.0) {
        return Err(Error::domain("rate sum must be positive"));
    }
    Ok(signal_rate / total)
}

/// Signal fraction from the measured total rate and the separately
/// measured background rate, treating the total as S + B.
pub fn estimate_r_from_total(total_rate: f64, background_rate: f64) -> Result<f64> {
    if total_rate <= 0.0 || background_rate < 0.0 {
        return Err(Error::domain("total rate must be positive"));
    }
    if background_rate > total_rate {
        return Err(Error::domain("background rate exceeds total rate"));
    }
    Ok((total_rate - background_rate) / total_rate)
}

/// Start-stop coincidence histogram between two detector channels.
///
/// Bins are centered on integer multiples of the bin width; the center bin
/// straddles zero delay. `normalization` is the expected accidental
/// (uncorrelated) coincidence count per bin, `r0 * r1 * T * bin`, so
/// `counts[i] / normalization` estimates `g2` in bin `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: f64,
    /// Signed bin centers in picoseconds, symmetric about zero.
    pub delays_ps: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalization: f64,
}

impl CoincidenceHistogram {
    /// Normalized correlation estimate per bin.
    pub fn g2_values(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.normalization)
            .collect()
    }

    /// Bin centers in nanoseconds.
    pub fn delays_ns(&self) -> Vec<f64> {
        self.delays_ps.iter().map(|d| d * 1e-3).collect()
    }

    /// Bin-wise sum of two histograms from disjoint acquisition segments.
    /// Counts add exactly; normalizations add because the accidental level
    /// is proportional to acquisition time at fixed rates.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.bin_width_ps != other.bin_width_ps || self.counts.len() != other.counts.len() {
            return Err(Error::domain("histograms must share binning to merge"));
        }
        Ok(Self {
            bin_width_ps: self.bin_width_ps,
            delays_ps: self.delays_ps.clone(),
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            normalization: self.normalization + other.normalization,
        })
    }
}

/// Cross-correlate channel-0 against channel-1 tags of `stream` within
/// `(-max_delay, +max_delay)`, all pairs counted (not first-photon-only).
///
/// Delay is `t1 - t0`. The accidental normalization `r0 * r1 * T * bin`
/// is attached for conversion to `g2`.
pub fn coincidence_histogram(
    stream: &TimeTagStream,
    bin_width_s: f64,
    max_delay_s: f64,
) -> Result<CoincidenceHistogram> {
    if !(bin_width_s > 0.0) || !(max_delay_s > 0.0) {
        return Err(Error::domain("bin width and max delay must be positive"));
    }
    let t0 = stream.channel_timestamps(0);
    let t1 = stream.channel_timestamps(1);
    if t0.is_empty() || t1.is_empty() {
        return Err(Error::domain(
            "coincidence histogram requires tags on both channels",
        ));
    }
    let tick_s = stream.time_unit_fs as f64 * 1e-15;
    let bin_ticks = (bin_width_s / tick_s).round() as i64;
    if bin_ticks < 1 {
        return Err(Error::domain("bin width is below the stream resolution"));
    }
    let half_bins = (max_delay_s / (bin_ticks as f64 * tick_s)).round() as i64;
    if half_bins < 1 {
        return Err(Error::domain("max delay must cover at least one bin"));
    }

    let span_s = stream.span_seconds();
    if !(span_s > 0.0) {
        return Err(Error::domain("stream span must be positive"));
    }

    let mut counts = vec![0u64; (2 * half_bins + 1) as usize];
    // Delays within (-window, +window] in ticks; window chosen so that the
    // outermost bins are complete.
    let window = bin_ticks * half_bins + bin_ticks / 2;
    accumulate_pairs(&t0, &t1, window, bin_ticks, half_bins, &mut counts);

    let r0 = t0.len() as f64 / span_s;
    let r1 = t1.len() as f64 / span_s;
    let normalization = r0 * r1 * span_s * (bin_ticks as f64 * tick_s);

    let bin_ps = bin_ticks as f64 * tick_s * 1e12;
    let delays_ps = (-half_bins..=half_bins).map(|k| k as f64 * bin_ps).collect();
    Ok(CoincidenceHistogram {
        bin_width_ps: bin_ps,
        delays_ps,
        counts,
        normalization,
    })
}

/// Two-pointer sweep over the sorted channel timestamps, binning signed
/// delays `t1 - t0` with round-half-away-from-zero so the histogram is
/// exactly even under channel exchange.
pub(crate) fn accumulate_pairs(
    t0: &[u64],
    t1: &[u64],
    window: i64,
    bin_ticks: i64,
    half_bins: i64,
    counts: &mut [u64],
) {
    let mut lo = 0usize;
    for &a in t0 {
        let a = a as i64;
        while lo < t1.len() && (t1[lo] as i64) < a - window {
            lo += 1;
        }
        let mut j = lo;
        while j < t1.len() {
            let d = t1[j] as i64 - a;
            if d > window {
                break;
            }
            let k = div_round_half_away(d, bin_ticks);
            if k.abs() <= half_bins {
                counts[(k + half_bins) as usize] += 1;
            }
            j += 1;
        }
    }
}

/// Round `d / bin` to the nearest integer, halves away from zero, so that
/// `bin(-d) == -bin(d)` exactly.
#[inline]
fn div_round_half_away(d: i64, bin: i64) -> i64 {
    let sign = if d < 0 { -1 } else { 1 };
    let mag = d.unsigned_abs() as i64;
    sign * ((2 * mag + bin) / (2 * bin))
}
