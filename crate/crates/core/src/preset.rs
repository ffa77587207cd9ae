//! Reference parameter bundle and the model instances built from it.
//!
//! `PaperPreset` collects every externally reported value the toolkit
//! reproduces, each with a short provenance anchor. Two emitter models
//! derive from it:
//!
//! * [`PaperPreset::emitter_dynamics`] — rate-equation scale, with the
//!   resonant drive near saturation so the ionization rate is linear in
//!   power. Used by the deterministic kinetics experiments.
//! * [`PaperPreset::emitter_g2`] — event scale, with the pump rate
//!   compressed so a 60 s photon stream is tractable event by event. The
//!   antibunching time stays pinned by the radiative rate, and blinking,
//!   background fraction and bin width are untouched, so every fitted
//!   correlation observable is preserved.

use crate::correlation::{telegraph_rates, TelegraphRates};
use crate::dynamics::{
    calibrate_auger, calibrate_recharge_point, EmitterModel, PulseSegment, PulseSequence,
    RechargeModel,
};
use crate::error::Result;
use crate::interferometry::ScattererParams;
use crate::montecarlo::{expected_emission_rate, DetectorModel};
use crate::spectral::LineshapeParams;

/// Reference values the round trips target. Immutable by convention:
/// construct with [`PaperPreset::default`] and read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperPreset {
    /// Radiative lifetime of the excited state, seconds.
    pub tau_rad_s: f64,
    /// Zero-phonon-line fraction of the total emission.
    pub f_dw: f64,
    /// Emission line center, eV.
    pub zpl_center_ev: f64,
    /// Measured (wandering-broadened) linewidth, eV.
    pub measured_linewidth_ev: f64,
    /// Raw zero-delay correlation value.
    pub q0_raw: f64,
    /// Background-corrected zero-delay value.
    pub q0_corrected: f64,
    /// Signal fraction R = S/(S+B) used for the correction.
    pub signal_fraction: f64,
    /// Bunching amplitude k_off/k_on.
    pub bunch_ratio: f64,
    /// Bunching correlation time, ns.
    pub tau1_ns: f64,
    /// Correlation histogram bin width, s.
    pub g2_bin_s: f64,
    /// Resonant pump power of the correlation experiment, nW.
    pub g2_pump_nw: f64,
    /// Per-detector count rate, 1/s.
    pub detector_rate_cps: f64,
    /// Per-detector background rate, 1/s.
    pub background_rate_cps: f64,
    /// Probe-decay rate attributed to Auger ionization, 1/s.
    pub auger_decay_rate: f64,
    /// Resonant power assigned to that decay rate, nW.
    pub auger_probe_nw: f64,
    /// Spontaneous-discharge stretched-exponential scale, s.
    pub discharge_scale_s: f64,
    /// Stretching exponent held fixed in fits.
    pub discharge_beta: f64,
    /// Charge recovery time constant at the lower above-band power, s.
    pub recovery_slow_s: f64,
    pub recovery_slow_nw: f64,
    /// Charge recovery time constant at the higher above-band power, s.
    pub recovery_fast_s: f64,
    pub recovery_fast_nw: f64,
    /// Above-band power that stabilizes the charge state, nW.
    pub stabilize_nw: f64,
    /// Fraction of total fluorescence excited by the above-band laser.
    pub aboveband_pl_fraction: f64,
    /// Above-band saturation power, nW.
    pub aboveband_psat_nw: f64,
    /// Cross-polarization intensity extinction ratio.
    pub extinction_ratio: f64,
    /// Interferometry sweep powers, nW.
    pub interferometry_low_nw: f64,
    pub interferometry_high_nw: f64,
}

impl Default for PaperPreset {
    fn default() -> Self {
        PaperPreset {
            tau_rad_s: 192e-12,
            f_dw: 0.94,
            zpl_center_ev: 2.8233,
            measured_linewidth_ev: 0.12e-3,
            q0_raw: 0.37,
            q0_corrected: 0.13,
            signal_fraction: 0.85,
            bunch_ratio: 0.27,
            tau1_ns: 4.05,
            g2_bin_s: 40e-12,
            g2_pump_nw: 100.0,
            detector_rate_cps: 5.0e3,
            background_rate_cps: 1.1e3,
            auger_decay_rate: 1.013e6,
            auger_probe_nw: 100.0,
            discharge_scale_s: 21e-6,
            discharge_beta: 0.5,
            recovery_slow_s: 200e-9,
            recovery_slow_nw: 20.0,
            recovery_fast_s: 9.3e-9,
            recovery_fast_nw: 90.0,
            stabilize_nw: 32.0,
            aboveband_pl_fraction: 0.022,
            aboveband_psat_nw: 2.9e3,
            extinction_ratio: 1e6,
            interferometry_low_nw: 7.0,
            interferometry_high_nw: 30.0,
        }
    }
}

/// Provenance anchors, one line per preset value.
pub const PRESET_ANCHORS: &[(&str, &str)] = &[
    ("tau_rad_s", "radiative lifetime 192 ps"),
    ("f_dw", "zero-phonon-line emission fraction 0.94"),
    ("zpl_center_ev", "bound-exciton line at 2.8233 eV"),
    ("measured_linewidth_ev", "scan linewidth 0.12 meV, 35x the lifetime limit of 3.43 ueV"),
    ("q0_raw", "raw zero-delay correlation 0.37"),
    ("q0_corrected", "background-corrected zero-delay value 0.13"),
    ("signal_fraction", "signal fraction R = 0.85"),
    ("bunch_ratio", "bunching on/off amplitude 0.27"),
    ("tau1_ns", "bunching correlation time 4.05 ns"),
    ("g2_bin_s", "coincidence binning 40 ps"),
    ("g2_pump_nw", "correlation measurement at 100 nW resonant pump"),
    ("detector_rate_cps", "per-detector rate 5e3 counts/s"),
    ("background_rate_cps", "background 1.1e3 counts/s"),
    ("auger_decay_rate", "probe fluorescence decay 1.013 /us, linear in pump power"),
    ("discharge_scale_s", "stretched-exponential dark discharge, 21 us"),
    ("recovery_slow_s", "charge recovery 200 ns at 20 nW above-band"),
    ("recovery_fast_s", "charge recovery 9.3 ns at 90 nW above-band"),
    ("stabilize_nw", "32 nW above-band stabilizes the charge"),
    ("aboveband_pl_fraction", "above-band photoluminescence ~2.2% of total"),
    ("aboveband_psat_nw", "above-band saturation power 2.9 uW"),
    ("extinction_ratio", "cross-polarization extinction beyond 1e6"),
    ("interferometry_low_nw", "interference scans at 7 nW and 30 nW"),
];

/// Formatted anchor lines for result summaries.
pub fn preset_anchor_lines() -> Vec<String> {
    PRESET_ANCHORS
        .iter()
        .map(|(field, anchor)| format!("{field}: {anchor}"))
        .collect()
}

/// Pump-rate compression applied to the event-scale emitter: the
/// dynamics-scale excitation coefficient divided by this factor keeps a
/// 60 s stream at ~1e6 excitation cycles per second.
const G2_RATE_COMPRESSION: f64 = 2.0e9 / 7.0e3;

/// Excitation coefficient of the near-saturated dynamics model, 1/s/nW.
const K_EXC_DYNAMICS: f64 = 2.0e9;

/// Auger coefficient of the event-scale emitter, sized for a 1e-4
/// per-cycle ionization branching at the correlation pump power.
const AUGER_G2: f64 = 5.2e3;

impl PaperPreset {
    pub fn gamma_rad(&self) -> f64 {
        1.0 / self.tau_rad_s
    }

    pub fn telegraph(&self) -> Result<TelegraphRates> {
        telegraph_rates(self.tau1_ns, self.bunch_ratio)
    }

    /// Above-band capture coefficient relative to the resonant one, sized
    /// so above-band light at the stabilization power contributes the
    /// reported fraction of the fluorescence next to a 10 nW resonant
    /// drive.
    fn capture_ratio(&self) -> f64 {
        let f = self.aboveband_pl_fraction;
        f / (1.0 - f) * 10.0 / self.stabilize_nw
    }

    /// Rate-equation-scale emitter with the Auger coefficient calibrated
    /// to the reported probe decay rate and the recharge table calibrated
    /// to both reported recovery times.
    pub fn emitter_dynamics(&self) -> Result<EmitterModel> {
        let mut m = EmitterModel {
            gamma_rad: self.gamma_rad(),
            k_exc_per_nw: K_EXC_DYNAMICS,
            capture_per_nw: self.capture_ratio() * K_EXC_DYNAMICS,
            auger_per_nw: 0.0,
            recharge: RechargeModel::Linear { per_nw: 1.0 },
            discharge_scale_s: self.discharge_scale_s,
            discharge_beta: self.discharge_beta,
            telegraph: self.telegraph()?,
        };
        m.auger_per_nw = calibrate_auger(self.auger_decay_rate, self.auger_probe_nw, &m)?;
        let slow = calibrate_recharge_point(self.recovery_slow_s, self.auger_probe_nw, &m)?;
        let fast = calibrate_recharge_point(self.recovery_fast_s, self.auger_probe_nw, &m)?;
        m.recharge = RechargeModel::Table {
            points: vec![(self.recovery_slow_nw, slow), (self.recovery_fast_nw, fast)],
        };
        m.validate()?;
        Ok(m)
    }

    /// Event-scale emitter for stochastic photon streams; see the module
    /// docs for what the compression preserves.
    pub fn emitter_g2(&self) -> Result<EmitterModel> {
        let k_exc = K_EXC_DYNAMICS / G2_RATE_COMPRESSION;
        let m = EmitterModel {
            gamma_rad: self.gamma_rad(),
            k_exc_per_nw: k_exc,
            capture_per_nw: self.capture_ratio() * k_exc,
            auger_per_nw: AUGER_G2,
            recharge: self.emitter_dynamics()?.recharge,
            discharge_scale_s: self.discharge_scale_s,
            discharge_beta: self.discharge_beta,
            telegraph: self.telegraph()?,
        };
        m.validate()?;
        Ok(m)
    }

    /// Detector tuned for 60 s-equivalent correlation statistics: high
    /// efficiency, dark rate set so the expected signal fraction equals
    /// the preset `signal_fraction`.
    pub fn detector_g2(&self) -> Result<DetectorModel> {
        let m = self.emitter_g2()?;
        let emission = expected_emission_rate(&m, self.g2_pump_nw, self.stabilize_nw);
        let efficiency = 0.9;
        let signal_per_channel = 0.5 * efficiency * emission;
        let r = self.signal_fraction;
        let det = DetectorModel {
            efficiency,
            dark_rate: signal_per_channel * (1.0 - r) / r,
            jitter_sigma_ps: 18.0,
            dead_time_ns: 0.0,
            splitter_ratio: 0.5,
        };
        det.validate()?;
        Ok(det)
    }

    /// Detector tuned to the reported absolute count rates (5e3 counts/s
    /// per channel with a 1.1e3 counts/s background).
    pub fn detector_counts(&self) -> Result<DetectorModel> {
        let m = self.emitter_g2()?;
        let emission = expected_emission_rate(&m, self.g2_pump_nw, self.stabilize_nw);
        let signal_per_channel = self.detector_rate_cps - self.background_rate_cps;
        let det = DetectorModel {
            efficiency: 2.0 * signal_per_channel / emission,
            dark_rate: self.background_rate_cps,
            jitter_sigma_ps: 18.0,
            dead_time_ns: 25.0,
            splitter_ratio: 0.5,
        };
        det.validate()?;
        Ok(det)
    }

    /// Zero-phonon line of the synthetic emission spectrum.
    pub fn zpl(&self) -> Result<LineshapeParams> {
        LineshapeParams::new(self.zpl_center_ev, self.measured_linewidth_ev, 0.0, self.f_dw)
    }

    /// Phonon sideband of the synthetic emission spectrum. The offset and
    /// width are not externally reported; these defaults put a broad
    /// red-shifted band under 6% of the total area.
    pub fn psb(&self) -> Result<LineshapeParams> {
        LineshapeParams::new(
            self.zpl_center_ev - 0.8e-3,
            0.0,
            1.0e-3,
            1.0 - self.f_dw,
        )
    }

    /// Energy grid covering the line and sideband.
    pub fn spectrum_grid(&self) -> Vec<f64> {
        let lo = self.zpl_center_ev - 4.0e-3;
        let n = 800usize;
        let step = 8.0e-3 / n as f64;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    /// Coherent scatterer behind the interference sweeps. The linewidth
    /// is the measured one; the efficiency default keeps the Fano zero
    /// crossing of small-angle sweeps inside a +/-20 linewidth window.
    pub fn scatterer(&self) -> ScattererParams {
        ScattererParams {
            gamma_ev: self.measured_linewidth_ev,
            mu: 0.002,
            e0: 1.0,
            psat_nw: 30.0,
        }
    }

    /// Pulse protocol of the time-resolved ionization experiment:
    /// charge-stabilize, wait in the dark, probe resonantly.
    pub fn ionization_sequence(&self, delay_s: f64) -> Result<PulseSequence> {
        PulseSequence::new(vec![
            PulseSegment {
                duration_s: 5e-6,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 40.0,
            },
            PulseSegment {
                duration_s: delay_s,
                p_resonant_nw: 0.0,
                p_aboveband_nw: 0.0,
            },
            PulseSegment {
                duration_s: 4e-6,
                p_resonant_nw: self.auger_probe_nw,
                p_aboveband_nw: 0.0,
            },
        ])
    }

    /// Dark delays of the discharge sweep, seconds.
    pub fn delay_sweep_s(&self) -> Vec<f64> {
        [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0]
            .iter()
            .map(|d| d * 1e-6)
            .collect()
    }
}
