//! Input preprocessing and PWM drive generation.
//!
//! Features are min-max normalized on the training split, quantized to 8 bits
//! and applied to the columns as a thermometer-coded pulse train: a value `n`
//! keeps its column at the pulse voltage for the first `n` of 255 cycles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarState, ReadMode, RowPolicy};
use crate::error::{Error, Result};
use crate::solver::PreparedRead;

pub const PWM_CYCLES: usize = 255;
pub const CYCLE_PERIOD_MS: f64 = 17.0;
pub const DEFAULT_PULSE_VOLTAGE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Per-feature min/max over the training samples.
pub fn fit_normalization(samples: &[Vec<f64>]) -> Result<NormalizationStats> {
    let first = samples
        .first()
        .ok_or_else(|| Error::param("cannot fit normalization on zero samples"))?;
    let mut min = first.clone();
    let mut max = first.clone();
    for (i, s) in samples.iter().enumerate() {
        if s.len() != min.len() {
            return Err(Error::dim(format!(
                "sample {i} has {} features, expected {}",
                s.len(),
                min.len()
            )));
        }
        for (f, &v) in s.iter().enumerate() {
            min[f] = min[f].min(v);
            max[f] = max[f].max(v);
        }
    }
    Ok(NormalizationStats { min, max })
}

impl NormalizationStats {
    pub fn features(&self) -> usize {
        self.min.len()
    }

    /// `round(clamp((x - min) / (max - min), 0, 1) × 255)`, rounding half away
    /// from zero. Constant features encode to 0.
    pub fn quantize(&self, x: &[f64]) -> Result<QuantizedSample> {
        if x.len() != self.features() {
            return Err(Error::dim(format!(
                "sample has {} features, stats have {}",
                x.len(),
                self.features()
            )));
        }
        let values = x
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span.is_nan() || span <= 0.0 {
                    return 0;
                }
                let n = ((v - lo) / span).clamp(0.0, 1.0);
                (n * 255.0).round() as u8
            })
            .collect();
        Ok(QuantizedSample { values })
    }

    pub fn quantize_all(&self, xs: &[Vec<f64>]) -> Result<Vec<QuantizedSample>> {
        xs.iter().map(|x| self.quantize(x)).collect()
    }
}

/// 8-bit input vector. `u8` storage keeps every value in `[0, 255]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedSample {
    pub values: Vec<u8>,
}

impl QuantizedSample {
    pub fn new(values: Vec<u8>) -> Self {
        Self { values }
    }

    pub fn features(&self) -> usize {
        self.values.len()
    }

    pub fn slice(&self, start: usize, len: usize) -> QuantizedSample {
        QuantizedSample {
            values: self.values[start..start + len].to_vec(),
        }
    }

    /// Same sample with an always-on bias input appended.
    pub fn with_bias(&self) -> QuantizedSample {
        let mut values = self.values.clone();
        values.push(u8::MAX);
        QuantizedSample { values }
    }
}

/// Thermometer-coded pulse train, `PWM_CYCLES × features` flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PwmTrace {
    features: usize,
    active: Vec<bool>,
    pub pulse_voltage: f64,
    pub cycle_period_ms: f64,
}

pub fn pwm_expand(q: &QuantizedSample) -> PwmTrace {
    pwm_expand_with(q, DEFAULT_PULSE_VOLTAGE)
}

pub fn pwm_expand_with(q: &QuantizedSample, pulse_voltage: f64) -> PwmTrace {
    let features = q.features();
    let mut active = vec![false; PWM_CYCLES * features];
    for c in 0..PWM_CYCLES {
        for (f, &v) in q.values.iter().enumerate() {
            active[c * features + f] = c < usize::from(v);
        }
    }
    PwmTrace {
        features,
        active,
        pulse_voltage,
        cycle_period_ms: CYCLE_PERIOD_MS,
    }
}

impl PwmTrace {
    pub fn features(&self) -> usize {
        self.features
    }

    pub fn cycle(&self, c: usize) -> &[bool] {
        &self.active[c * self.features..(c + 1) * self.features]
    }

    pub fn is_active(&self, c: usize, f: usize) -> bool {
        self.active[c * self.features + f]
    }

    /// Active cycle count per feature.
    pub fn duty(&self) -> Vec<u32> {
        (0..self.features)
            .map(|f| (0..PWM_CYCLES).filter(|&c| self.is_active(c, f)).count() as u32)
            .collect()
    }

    /// Distinct activation patterns with their cycle counts.
    pub fn patterns(&self) -> BTreeMap<Vec<bool>, u32> {
        let mut out = BTreeMap::new();
        for c in 0..PWM_CYCLES {
            *out.entry(self.cycle(c).to_vec()).or_insert(0) += 1;
        }
        out
    }

    pub fn column_voltages(&self, pattern: &[bool], cols: usize) -> Vec<f64> {
        let mut v = vec![0.0; cols];
        for (f, &on) in pattern.iter().enumerate() {
            if on {
                v[f] = self.pulse_voltage;
            }
        }
        v
    }

    pub fn latency_ms(&self) -> f64 {
        PWM_CYCLES as f64 * self.cycle_period_ms
    }
}

/// Sum of sensed TIA voltages over all PWM cycles of one row read.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulation {
    /// Σ over cycles of the sensed TIA voltage, V·cycle.
    pub value: f64,
    /// Number of distinct drive patterns solved.
    pub solves: usize,
    pub clipped_cycles: u32,
    pub max_kcl_residual: f64,
}

/// Integrate one row over the trace. Identical column patterns are solved
/// once and weighted by their cycle count.
pub fn pwm_accumulate(
    xbar: &CrossbarState,
    row: usize,
    trace: &PwmTrace,
    mode: ReadMode,
) -> Result<Accumulation> {
    let prepared = match mode {
        ReadMode::Ideal => None,
        ReadMode::SneakPath { rows } => Some(prepare_row(xbar, row, rows)?),
    };
    accumulate_with(xbar, row, trace, prepared.as_ref())
}

pub(crate) fn prepare_row(
    xbar: &CrossbarState,
    row: usize,
    rows: RowPolicy,
) -> Result<PreparedRead> {
    PreparedRead::new(xbar, row, rows)
}

pub(crate) fn accumulate_with(
    xbar: &CrossbarState,
    row: usize,
    trace: &PwmTrace,
    prepared: Option<&PreparedRead>,
) -> Result<Accumulation> {
    xbar.check_row(row)?;
    if trace.features() > xbar.cols() {
        return Err(Error::dim(format!(
            "trace has {} features, crossbar has {} columns",
            trace.features(),
            xbar.cols()
        )));
    }
    let mut acc = Accumulation::default();
    for (pattern, count) in trace.patterns() {
        if !pattern.iter().any(|&on| on) {
            continue;
        }
        let v = trace.column_voltages(&pattern, xbar.cols());
        let read = match prepared {
            None => xbar.read_row(row, &v, ReadMode::Ideal)?,
            Some(p) => xbar.sense(p.sensed_current(&v)?, 0.0),
        };
        acc.value += f64::from(count) * read.tia_voltage;
        acc.solves += 1;
        if read.clipped {
            acc.clipped_cycles += count;
        }
    }
    Ok(acc)
}
