//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use bedexit::imaging::EncodingConfig;
use bedexit::model::train::TrainConfig;
use bedexit::model::ModelConfig;
use bedexit::pipeline::InputSpec;
use bedexit::signal::{DeriveConfig, OccupancyConfig, WindowSpec};
use bedexit::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub sample_rate_hz: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub lookback_s: f64,
    pub stride_s: f64,
    pub occupancy: OccupancyConfig,
}

impl Default for SignalSection {
    fn default() -> Self {
        let derive = DeriveConfig::default();
        let window = WindowSpec::default();
        Self {
            sample_rate_hz: 25.0,
            low_hz: derive.low_hz,
            high_hz: derive.high_hz,
            lookback_s: window.lookback_s,
            stride_s: window.stride_s,
            occupancy: derive.occupancy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Every field is optional; missing ones take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream (synthesis, splits, init, shuffling, dropout).
    pub seed: u64,
    pub alarm_threshold: f64,
    pub signal: SignalSection,
    pub encoding: EncodingConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            alarm_threshold: 0.5,
            signal: SignalSection::default(),
            encoding: EncodingConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            synth: SynthConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
            None => Ok(Self::default()),
        }
    }

    /// Applies the seed override, copies run-level values into the sections
    /// that carry them and validates everything.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.synth.seed = self.seed;
        self.training.seed = self.seed;
        self.synth.sample_rate_hz = self.signal.sample_rate_hz;
        if !(0.0..=1.0).contains(&self.alarm_threshold) {
            return Err(CliError::Config(format!("alarm_threshold {} outside [0, 1]", self.alarm_threshold)));
        }
        self.window_spec().samples(self.signal.sample_rate_hz).map_err(|e| CliError::Config(e.to_string()))?;
        bedexit::signal::BandpassDesign::new(self.signal.sample_rate_hz, self.signal.low_hz, self.signal.high_hz)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.encoding.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.training.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(self)
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec { lookback_s: self.signal.lookback_s, stride_s: self.signal.stride_s }
    }

    pub fn derive_config(&self) -> DeriveConfig {
        DeriveConfig { low_hz: self.signal.low_hz, high_hz: self.signal.high_hz, occupancy: self.signal.occupancy.clone() }
    }

    pub fn input_spec(&self) -> InputSpec {
        InputSpec {
            derive: self.derive_config(),
            window: self.window_spec(),
            encoding: self.encoding.clone(),
            input_size: self.model.input_size,
        }
    }

    /// The resolved configuration as written next to every output.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}
