//! Run configuration: TOML on disk, validated into module-level types.

use crate::dynamics::{EmitterModel, PulseSegment, PulseSequence};
use crate::error::{Error, Result};
use crate::interferometry::{Extinction, OpticalChain, ScattererParams};
use crate::montecarlo::DetectorModel;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    G2,
    Interferogram,
    Dynamics,
    Recovery,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::G2 => "g2",
            Experiment::Interferogram => "interferogram",
            Experiment::Dynamics => "dynamics",
            Experiment::Recovery => "recovery",
        }
    }
}

/// One drive segment as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub duration_us: f64,
    pub p_resonant_nw: f64,
    pub p_aboveband_nw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub segments: Vec<SegmentConfig>,
}

impl SequenceConfig {
    pub fn to_sequence(&self) -> Result<PulseSequence> {
        PulseSequence::new(
            self.segments
                .iter()
                .map(|s| PulseSegment {
                    duration_s: s.duration_us * 1e-6,
                    p_resonant_nw: s.p_resonant_nw,
                    p_aboveband_nw: s.p_aboveband_nw,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Config {
    pub p_resonant_nw: f64,
    pub p_aboveband_nw: f64,
    pub duration_s: f64,
    pub bin_width_ps: f64,
    pub max_delay_ns: f64,
    /// Persist the raw stream next to the histogram (large for long runs).
    #[serde(default)]
    pub save_ttag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub zpl_center_ev: f64,
    pub zpl_fwhm_ev: f64,
    pub zpl_area: f64,
    pub psb_center_ev: f64,
    pub psb_fwhm_ev: f64,
    pub psb_area: f64,
    pub grid_min_ev: f64,
    pub grid_max_ev: f64,
    pub grid_points: usize,
    pub noise_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    pub scatterer: ScattererParams,
    /// Waveplate offsets to sweep, degrees.
    pub dtheta_deg: Vec<f64>,
    pub power_nw: f64,
    pub extinction: Extinction,
    /// Detuning window half-width in units of the scatterer linewidth.
    pub window_linewidths: f64,
    pub points: usize,
    #[serde(default)]
    pub chain: Option<OpticalChain>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub p_aboveband_nw: f64,
    pub p_resonant_nw: f64,
}

/// Top-level run configuration. Sections are optional so presets can fill
/// them; validation names the missing field when one is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub emitter: Option<EmitterModel>,
    #[serde(default)]
    pub detector: Option<DetectorModel>,
    #[serde(default)]
    pub g2: Option<G2Config>,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub optics: Option<OpticsConfig>,
    #[serde(default)]
    pub sequence: Option<SequenceConfig>,
    #[serde(default)]
    pub recovery: Option<RecoveryConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| Error::config("<config>", e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    /// Check that every section the experiment needs is present.
    /// `preset_backed` runs may omit the sections a preset supplies.
    pub fn validate(&self, preset_backed: bool) -> Result<()> {
        let need = |present: bool, field: &str| -> Result<()> {
            if present || preset_backed {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!(
                        "section required for the `{}` experiment",
                        self.experiment.name()
                    ),
                ))
            }
        };
        match self.experiment {
            Experiment::Spectrum => need(self.spectrum.is_some(), "spectrum"),
            Experiment::G2 => {
                need(self.emitter.is_some(), "emitter")?;
                need(self.detector.is_some(), "detector")?;
                need(self.g2.is_some(), "g2")
            }
            Experiment::Interferogram => need(self.optics.is_some(), "optics"),
            Experiment::Dynamics => {
                need(self.sequence.is_some(), "sequence")?;
                need(self.emitter.is_some(), "emitter")
            }
            Experiment::Recovery => {
                need(self.recovery.is_some(), "recovery")?;
                need(self.emitter.is_some(), "emitter")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset::PaperPreset;

    fn sample_config() -> RunConfig {
        let preset = PaperPreset::default();
        RunConfig {
            experiment: Experiment::Dynamics,
            seed: 7,
            output_dir: Some(PathBuf::from("out")),
            emitter: Some(preset.emitter_dynamics().unwrap()),
            detector: Some(preset.detector_g2().unwrap()),
            g2: Some(G2Config {
                p_resonant_nw: 100.0,
                p_aboveband_nw: 32.0,
                duration_s: 60.0,
                bin_width_ps: 40.0,
                max_delay_ns: 20.0,
                save_ttag: false,
            }),
            spectrum: None,
            optics: None,
            sequence: Some(SequenceConfig {
                segments: vec![
                    SegmentConfig {
                        duration_us: 5.0,
                        p_resonant_nw: 0.0,
                        p_aboveband_nw: 40.0,
                    },
                    SegmentConfig {
                        duration_us: 1.2,
                        p_resonant_nw: 0.0,
                        p_aboveband_nw: 0.0,
                    },
                    SegmentConfig {
                        duration_us: 4.0,
                        p_resonant_nw: 100.0,
                        p_aboveband_nw: 0.0,
                    },
                ],
            }),
            recovery: None,
        }
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let config = sample_config();
        let text = config.to_toml().unwrap();
        let reparsed = RunConfig::parse(&text).unwrap();
        assert_eq!(reparsed, config);
        // And the serialized form itself is stable.
        assert_eq!(reparsed.to_toml().unwrap(), text);
    }

    #[test]
    fn missing_sequence_is_named_in_the_error() {
        let mut config = sample_config();
        config.sequence = None;
        match config.validate(false) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sequence"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn preset_backed_runs_tolerate_missing_sections() {
        let mut config = sample_config();
        config.experiment = Experiment::G2;
        config.emitter = None;
        config.detector = None;
        config.g2 = None;
        assert!(config.validate(true).is_ok());
        assert!(matches!(
            config.validate(false),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn sequence_units_convert_to_seconds() {
        let config = sample_config();
        let seq = config.sequence.unwrap().to_sequence().unwrap();
        assert!((seq.segments[0].duration_s - 5e-6).abs() < 1e-18);
        assert!((seq.total_duration() - 10.2e-6).abs() < 1e-12);
    }
}
