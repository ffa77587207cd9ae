//! Channel-tagged photon detection timestamps and the detector model.

use crate::constants::{ticks_to_seconds, TIME_UNIT_FS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Flag bit marking a tag as a dark/background count. Diagnostics only;
/// analyzers must ignore it.
pub const FLAG_DARK: u32 = 1;

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagRecord {
    /// Timestamp in integer ticks of `time_unit_fs` femtoseconds.
    pub timestamp: u64,
    pub channel: u32,
    pub flags: u32,
}

/// A time-ordered stream of detection events.
///
/// `span_ticks` is the acquisition span; it is not part of the binary file
/// format and is reconstructed as the last timestamp when a stream is read
/// back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub time_unit_fs: u64,
    pub span_ticks: u64,
    pub records: Vec<TagRecord>,
}

impl TimeTagStream {
    pub fn new(time_unit_fs: u64, span_ticks: u64, records: Vec<TagRecord>) -> Result<Self> {
        if time_unit_fs == 0 {
            return Err(Error::domain("time unit must be positive"));
        }
        if records.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::domain("timestamps must be non-decreasing"));
        }
        Ok(Self {
            time_unit_fs,
            span_ticks,
            records,
        })
    }

    /// Acquisition span in seconds.
    pub fn span_seconds(&self) -> f64 {
        ticks_to_seconds(self.span_ticks) * self.time_unit_fs as f64
    }

    /// Number of tags on the given channel.
    pub fn channel_count(&self, channel: u32) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }

    /// Timestamps (ticks) of the given channel, in order.
    pub fn channel_timestamps(&self, channel: u32) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.channel == channel)
            .map(|r| r.timestamp)
            .collect()
    }

    /// Empty stream at the native 1 fs resolution.
    pub fn empty(span_ticks: u64) -> Self {
        Self {
            time_unit_fs: TIME_UNIT_FS,
            span_ticks,
            records: Vec::new(),
        }
    }
}

/// Detection chain model: efficiency, beam splitter, timing jitter, dead
/// time and dark counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Probability that an emitted photon produces a tag at all.
    pub efficiency: f64,
    /// Dark/background rate per detector channel, counts per second.
    pub dark_rate: f64,
    /// Gaussian timing jitter sigma per detector, picoseconds.
    pub jitter_sigma_ps: f64,
    /// Same-channel dead time, nanoseconds.
    pub dead_time_ns: f64,
    /// Probability of routing to channel 0 (50:50 splitter by default).
    pub splitter_ratio: f64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::domain("efficiency must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return Err(Error::domain("splitter ratio must lie in [0, 1]"));
        }
        if self.dark_rate < 0.0 || self.jitter_sigma_ps < 0.0 || self.dead_time_ns < 0.0 {
            return Err(Error::domain(
                "dark rate, jitter and dead time must be non-negative",
            ));
        }
        Ok(())
    }

    /// Lossless, noiseless detector; useful as a test fixture.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 0.0,
            splitter_ratio: 0.5,
        }
    }
}
