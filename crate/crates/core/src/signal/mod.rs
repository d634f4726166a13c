//! Channel derivation from a raw load-cell stream.
//!
//! A [`RawStream`] of load samples is turned into a [`SignalFrame`] carrying
//! four time-aligned channels (load, band-passed vibration, occupancy and
//! in-bed duration), which is then sliced into fixed look-back [`Window`]s.

mod filter;
pub mod io;
mod occupancy;
mod window;

pub use filter::{bandpass_vibration, BandpassDesign, Biquad};
pub use occupancy::{detect_occupancy, detect_occupancy_with, in_bed_duration, OccupancyConfig};
pub use window::{extract_windows, label_at, window_at, window_ends, Label, LabelInterval, Window, WindowSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("sample rate must be positive and finite, got {0}")]
    SampleRate(f64),
    #[error("band edges must satisfy 0 < low < high < nyquist ({nyquist} Hz), got {low}..{high} Hz")]
    Band { low: f64, high: f64, nyquist: f64 },
    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("non-finite value at sample {0}")]
    NonFinite(usize),
    #[error("negative load {value} at sample {index}")]
    NegativeLoad { index: usize, value: f64 },
    #[error("timestamps and loads differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamp spacing at sample {index} is {dt} s, expected {expected} s")]
    Spacing { index: usize, dt: f64, expected: f64 },
    #[error("occupancy must be 0 or 1, got {value} at sample {index}")]
    NotBinary { index: usize, value: u8 },
    #[error("window spec invalid: {0}")]
    WindowSpec(String),
    #[error("frame invariant violated: {0}")]
    Invariant(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Uniformly sampled load readings in kilograms.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    sample_rate_hz: f64,
    timestamps: Vec<f64>,
    load: Vec<f64>,
}

/// Maximum deviation of consecutive timestamp spacing from `1 / sample_rate_hz`.
pub const TIMESTAMP_TOLERANCE_S: f64 = 1e-6;

impl RawStream {
    pub fn new(sample_rate_hz: f64, timestamps: Vec<f64>, load: Vec<f64>) -> Result<Self, SignalError> {
        check_rate(sample_rate_hz)?;
        if timestamps.len() != load.len() {
            return Err(SignalError::LengthMismatch(timestamps.len(), load.len()));
        }
        let expected = 1.0 / sample_rate_hz;
        for (i, w) in timestamps.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if !dt.is_finite() || (dt - expected).abs() > TIMESTAMP_TOLERANCE_S {
                return Err(SignalError::Spacing { index: i + 1, dt, expected });
            }
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        for (index, &value) in load.iter().enumerate() {
            if !value.is_finite() {
                return Err(SignalError::NonFinite(index));
            }
            if value < 0.0 {
                return Err(SignalError::NegativeLoad { index, value });
            }
        }
        Ok(Self { sample_rate_hz, timestamps, load })
    }

    /// Builds a stream whose timestamps start at `t0` and advance by exactly
    /// `1 / sample_rate_hz`.
    pub fn from_uniform(sample_rate_hz: f64, t0: f64, load: Vec<f64>) -> Result<Self, SignalError> {
        check_rate(sample_rate_hz)?;
        let timestamps = (0..load.len()).map(|i| t0 + i as f64 / sample_rate_hz).collect();
        Self::new(sample_rate_hz, timestamps, load)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.timestamps.first().copied().unwrap_or(0.0)
    }
}

fn check_rate(fs: f64) -> Result<(), SignalError> {
    if fs.is_finite() && fs > 0.0 {
        Ok(())
    } else {
        Err(SignalError::SampleRate(fs))
    }
}

/// Band and detector settings used by [`derive_frame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeriveConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub occupancy: OccupancyConfig,
}

impl Default for DeriveConfig {
    fn default() -> Self {
        Self { low_hz: 0.5, high_hz: 10.0, occupancy: OccupancyConfig::default() }
    }
}

/// The four time-aligned channels classified by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub sample_rate_hz: f64,
    /// Timestamp of the first sample, seconds.
    pub start_time: f64,
    pub load: Vec<f64>,
    pub vibration: Vec<f64>,
    pub occupancy: Vec<u8>,
    /// Minutes since the start of the current occupied run.
    pub in_bed_duration: Vec<f64>,
}

impl SignalFrame {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn check_invariants(&self) -> Result<(), SignalError> {
        let n = self.load.len();
        if self.vibration.len() != n || self.occupancy.len() != n || self.in_bed_duration.len() != n {
            return Err(SignalError::Invariant("channel lengths differ".into()));
        }
        let mut prev: Option<f64> = None;
        for i in 0..n {
            match self.occupancy[i] {
                0 => {
                    if self.in_bed_duration[i] != 0.0 {
                        return Err(SignalError::Invariant(format!(
                            "in-bed duration {} at unoccupied sample {i}",
                            self.in_bed_duration[i]
                        )));
                    }
                    prev = None;
                }
                1 => {
                    let d = self.in_bed_duration[i];
                    if !(d >= 0.0) || prev.is_some_and(|p| d < p) {
                        return Err(SignalError::Invariant(format!("in-bed duration decreases at sample {i}")));
                    }
                    prev = Some(d);
                }
                value => return Err(SignalError::NotBinary { index: i, value }),
            }
        }
        Ok(())
    }
}

/// Derives vibration, occupancy and in-bed duration from the raw load.
pub fn derive_frame(raw: &RawStream, config: &DeriveConfig) -> Result<SignalFrame, SignalError> {
    let fs = raw.sample_rate_hz();
    let vibration = bandpass_vibration(raw.load(), fs, config.low_hz, config.high_hz)?;
    let occupancy = detect_occupancy_with(raw.load(), fs, &config.occupancy)?;
    let in_bed_duration = in_bed_duration(&occupancy, fs)?;
    let frame = SignalFrame {
        sample_rate_hz: fs,
        start_time: raw.start_time(),
        load: raw.load().to_vec(),
        vibration,
        occupancy,
        in_bed_duration,
    };
    frame.check_invariants()?;
    Ok(frame)
}
