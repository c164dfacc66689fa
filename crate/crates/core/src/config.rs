//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarParams, ReadMode, RowPolicy, VerifyParams};
use crate::device::{ResistanceDistribution, VariabilityMode, DEFAULT_OVERLAP_THRESHOLD};
use crate::error::{Error, Result};
use crate::mapper::FailurePolicy;
use crate::trainer::TrainingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Ideal,
    Sneak,
}

impl std::str::FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(ModeName::Ideal),
            "sneak" => Ok(ModeName::Sneak),
            _ => Err(Error::param(format!(
                "unknown read mode {s:?} (expected ideal or sneak)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub split_fraction: f64,
    pub dataset: Option<PathBuf>,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init_range: f64,
    pub bias: bool,

    pub rows: usize,
    pub cols: usize,
    pub median_lrs: f64,
    pub median_hrs: f64,
    pub sigma_lrs: f64,
    pub sigma_hrs: f64,
    pub variability: VariabilityMode,

    pub read_mode: ModeName,
    pub floating_row_policy: RowPolicy,
    pub line_resistance: f64,
    pub driver_resistance: f64,
    pub r_f: f64,
    /// 0 disables rail clipping.
    pub rail: f64,
    pub pulse_voltage: f64,

    pub verify_window_factor: f64,
    pub verify_max_attempts: u32,
    pub failure_policy: FailurePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let xbar = CrossbarParams::default();
        let train = TrainingParams::default();
        let verify = VerifyParams::default();
        Self {
            seed: 0,
            trials: 10,
            split_fraction: 0.8,
            dataset: None,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            init_range: train.init_range,
            bias: train.bias,
            rows: 8,
            cols: 8,
            median_lrs: xbar.dist.median_lrs,
            median_hrs: xbar.dist.median_hrs,
            sigma_lrs: xbar.dist.sigma_lrs,
            sigma_hrs: xbar.dist.sigma_hrs,
            variability: xbar.variability,
            read_mode: ModeName::Sneak,
            floating_row_policy: RowPolicy::Floating,
            line_resistance: xbar.line_resistance,
            driver_resistance: xbar.driver_resistance,
            r_f: xbar.r_f,
            rail: xbar.rail.unwrap_or(0.0),
            pulse_voltage: xbar.read_voltage,
            verify_window_factor: verify.window_factor,
            verify_max_attempts: verify.max_attempts,
            failure_policy: FailurePolicy::default(),
        }
    }
}

impl ExperimentConfig {
    /// Short training schedule calibrated to the reported software accuracy
    /// (~74% train / ~78% test); the library defaults train to convergence
    /// and land near 84%.
    pub fn table1() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            ..Self::default()
        }
    }

    /// Parse a config file; unknown keys are rejected so typos surface.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::param(format!("config: {}", e.message())))?;
        let mut unknown = Vec::new();
        let config: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::param(format!("config: {}", e.message())))?;
        if !unknown.is_empty() {
            return Err(Error::param(format!(
                "config: unknown field(s) {}",
                unknown.join(", ")
            )));
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dist(&self) -> ResistanceDistribution {
        ResistanceDistribution {
            median_lrs: self.median_lrs,
            median_hrs: self.median_hrs,
            sigma_lrs: self.sigma_lrs,
            sigma_hrs: self.sigma_hrs,
        }
    }

    pub fn crossbar_params(&self) -> CrossbarParams {
        CrossbarParams {
            dist: self.dist(),
            variability: self.variability,
            line_resistance: self.line_resistance,
            driver_resistance: self.driver_resistance,
            read_voltage: self.pulse_voltage,
            r_f: self.r_f,
            rail: (self.rail > 0.0).then_some(self.rail),
        }
    }

    pub fn training_params(&self) -> TrainingParams {
        TrainingParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            init_range: self.init_range,
            bias: self.bias,
            ..TrainingParams::default()
        }
    }

    pub fn verify_params(&self) -> VerifyParams {
        VerifyParams {
            window_factor: self.verify_window_factor,
            max_attempts: self.verify_max_attempts,
        }
    }

    pub fn read_mode(&self) -> ReadMode {
        match self.read_mode {
            ModeName::Ideal => ReadMode::Ideal,
            ModeName::Sneak => ReadMode::SneakPath {
                rows: self.floating_row_policy,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::param(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be >= 1"));
        }
        if self.rows < 2 || self.cols == 0 {
            return Err(Error::param("crossbar must have >= 2 rows and >= 1 column"));
        }
        if !(self.pulse_voltage.is_finite() && self.pulse_voltage >= 0.0) {
            return Err(Error::param("pulse_voltage must be finite and >= 0"));
        }
        if self.rail.is_nan() || self.rail < 0.0 {
            return Err(Error::param("rail must be >= 0"));
        }
        let params = self.crossbar_params();
        params.validate()?;
        params.dist.check_separable(DEFAULT_OVERLAP_THRESHOLD)?;
        self.verify_params().validate()?;
        Ok(())
    }
}
