//! Binary OxRAM device model.
//!
//! A device holds one of two logical states. Its physical resistance is a
//! lognormal draw around the state's median, re-sampled on every programming
//! pulse (cycle-to-cycle) or fixed per device (device-to-device).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default bound on `P(R_LRS > R_HRS)` for a usable distribution.
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 1e-3;

/// SET pulse amplitude used on the testbench (metadata only).
pub const V_SET: f64 = 3.3;
/// RESET pulse amplitude (metadata only).
pub const V_RESET: f64 = -5.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceState {
    #[serde(rename = "HRS")]
    Hrs,
    #[serde(rename = "LRS")]
    Lrs,
}

impl DeviceState {
    pub fn complement(self) -> Self {
        match self {
            DeviceState::Hrs => DeviceState::Lrs,
            DeviceState::Lrs => DeviceState::Hrs,
        }
    }

    /// Nominal pulse amplitude that switches a device into this state.
    pub fn programming_voltage(self) -> f64 {
        match self {
            DeviceState::Lrs => V_SET,
            DeviceState::Hrs => V_RESET,
        }
    }
}

/// Lognormal resistance statistics of the two states. Medians are in MΩ,
/// sigmas are standard deviations of `ln R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceDistribution {
    pub median_lrs: f64,
    pub median_hrs: f64,
    pub sigma_lrs: f64,
    pub sigma_hrs: f64,
}

impl Default for ResistanceDistribution {
    fn default() -> Self {
        Self {
            median_lrs: 2.0,
            median_hrs: 50.0,
            sigma_lrs: 0.15,
            sigma_hrs: 0.15,
        }
    }
}

impl ResistanceDistribution {
    /// Zero-variance distribution: every device of a state has its median.
    pub fn ideal(median_lrs: f64, median_hrs: f64) -> Self {
        Self {
            median_lrs,
            median_hrs,
            sigma_lrs: 0.0,
            sigma_hrs: 0.0,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self {
            sigma_lrs: sigma,
            sigma_hrs: sigma,
            ..self
        }
    }

    pub fn median(&self, state: DeviceState) -> f64 {
        match state {
            DeviceState::Lrs => self.median_lrs,
            DeviceState::Hrs => self.median_hrs,
        }
    }

    pub fn sigma(&self, state: DeviceState) -> f64 {
        match state {
            DeviceState::Lrs => self.sigma_lrs,
            DeviceState::Hrs => self.sigma_hrs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.median_lrs,
            self.median_hrs,
            self.sigma_lrs,
            self.sigma_hrs,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param(
                "resistance distribution has non-finite values",
            ));
        }
        if self.median_lrs.is_nan() || self.median_lrs <= 0.0 {
            return Err(Error::param(format!(
                "median_lrs must be > 0, got {}",
                self.median_lrs
            )));
        }
        if self.median_hrs.is_nan() || self.median_hrs <= self.median_lrs {
            return Err(Error::param(format!(
                "median_hrs ({}) must exceed median_lrs ({})",
                self.median_hrs, self.median_lrs
            )));
        }
        if self.sigma_lrs < 0.0 || self.sigma_hrs < 0.0 {
            return Err(Error::param("sigma must be >= 0"));
        }
        Ok(())
    }

    /// Probability that an LRS draw exceeds an independent HRS draw.
    pub fn overlap_probability(&self) -> f64 {
        let spread = (self.sigma_lrs.powi(2) + self.sigma_hrs.powi(2)).sqrt();
        if spread == 0.0 {
            return 0.0;
        }
        let z = (self.median_hrs / self.median_lrs).ln() / spread;
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    }

    pub fn check_separable(&self, threshold: f64) -> Result<()> {
        let p = self.overlap_probability();
        if p > threshold {
            return Err(Error::param(format!(
                "LRS/HRS overlap probability {p:.3e} exceeds {threshold:.1e}"
            )));
        }
        Ok(())
    }
}

/// Whether a programming pulse re-samples resistance or the device keeps a
/// fixed deviate drawn at fabrication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariabilityMode {
    #[default]
    CycleToCycle,
    DeviceToDevice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceCell {
    pub state: DeviceState,
    /// MΩ, always finite and positive.
    pub resistance: f64,
    pub program_count: u32,
    /// Per-device standard-normal deviate, set only in device-to-device mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviate: Option<f64>,
}

impl DeviceCell {
    pub fn conductance_siemens(&self) -> f64 {
        mohm_to_siemens(self.resistance)
    }
}

/// Resistances are stored in MΩ; every read converts with this.
#[inline]
pub fn mohm_to_siemens(r_mohm: f64) -> f64 {
    1.0 / (r_mohm * 1e6)
}

/// One lognormal draw around the median of `state`.
pub fn sample_resistance<R: Rng + ?Sized>(
    state: DeviceState,
    dist: &ResistanceDistribution,
    rng: &mut R,
) -> Result<f64> {
    dist.validate()?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(resistance_from_deviate(state, dist, z))
}

fn resistance_from_deviate(state: DeviceState, dist: &ResistanceDistribution, z: f64) -> f64 {
    let sigma = dist.sigma(state);
    if sigma == 0.0 {
        dist.median(state)
    } else {
        dist.median(state) * (sigma * z).exp()
    }
}

/// Fresh device as fabricated, before any pulse.
pub fn fabricate<R: Rng + ?Sized>(mode: VariabilityMode, rng: &mut R) -> DeviceCell {
    let deviate = match mode {
        VariabilityMode::CycleToCycle => None,
        VariabilityMode::DeviceToDevice => Some(rng.sample(StandardNormal)),
    };
    DeviceCell {
        state: DeviceState::Hrs,
        resistance: f64::NAN,
        program_count: 0,
        deviate,
    }
}

/// Apply one programming pulse towards `target`. The count increments even
/// when the state does not change.
pub fn transition<R: Rng + ?Sized>(
    cell: DeviceCell,
    target: DeviceState,
    dist: &ResistanceDistribution,
    rng: &mut R,
) -> DeviceCell {
    let z = match cell.deviate {
        Some(z) => z,
        None => rng.sample(StandardNormal),
    };
    DeviceCell {
        state: target,
        resistance: resistance_from_deviate(target, dist, z),
        program_count: cell.program_count + 1,
        deviate: cell.deviate,
    }
}
