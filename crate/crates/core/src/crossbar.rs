//! Crossbar state, programming protocol and row reads.
//!
//! Inputs drive the columns and current is integrated on one row at a time
//! by a TIA holding that row at virtual ground.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceCell, DeviceState, ResistanceDistribution, VariabilityMode};
use crate::error::{Error, Result};
use crate::solver::{self, ReadBoundaryConditions};

/// Default column driver impedance, Ω.
pub const DEFAULT_DRIVER_RESISTANCE: f64 = 1e6;

/// Electrical state of rows that are not being sensed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPolicy {
    #[default]
    Floating,
    Grounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReadMode {
    /// Each row read in isolation: `I = Σ V_c · G_rc`.
    Ideal,
    /// Full nodal solve of the selector-free array.
    SneakPath { rows: RowPolicy },
}

impl ReadMode {
    pub fn sneak() -> Self {
        ReadMode::SneakPath {
            rows: RowPolicy::Floating,
        }
    }
}

/// Electrical and device parameters shared by every crossbar of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossbarParams {
    pub dist: ResistanceDistribution,
    pub variability: VariabilityMode,
    /// Ω per line segment between adjacent junctions.
    pub line_resistance: f64,
    /// Ω, lumped output impedance of each column driver (DAC plus switch).
    /// Zero makes every column an ideal source, in which case floating rows
    /// cannot disturb the sensed row.
    pub driver_resistance: f64,
    /// Read pulse magnitude in volts (applied as a positive column drive).
    pub read_voltage: f64,
    /// TIA feedback resistance, Ω.
    pub r_f: f64,
    /// TIA output rail magnitude in volts; `None` disables clipping.
    pub rail: Option<f64>,
}

impl Default for CrossbarParams {
    fn default() -> Self {
        Self {
            dist: ResistanceDistribution::default(),
            variability: VariabilityMode::CycleToCycle,
            line_resistance: 0.0,
            driver_resistance: DEFAULT_DRIVER_RESISTANCE,
            read_voltage: 0.8,
            r_f: 1e6,
            rail: Some(3.3),
        }
    }
}

impl CrossbarParams {
    pub fn ideal_devices(median_lrs: f64, median_hrs: f64) -> Self {
        Self {
            dist: ResistanceDistribution::ideal(median_lrs, median_hrs),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if !(self.line_resistance >= 0.0 && self.line_resistance.is_finite()) {
            return Err(Error::param("line_resistance must be finite and >= 0"));
        }
        if !(self.driver_resistance >= 0.0 && self.driver_resistance.is_finite()) {
            return Err(Error::param("driver_resistance must be finite and >= 0"));
        }
        if !(self.r_f > 0.0 && self.r_f.is_finite()) {
            return Err(Error::param("r_f must be > 0"));
        }
        if let Some(rail) = self.rail {
            if rail.is_nan() || rail <= 0.0 {
                return Err(Error::param("rail must be > 0"));
            }
        }
        Ok(())
    }
}

/// Result of one row read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowRead {
    /// A, into the TIA.
    pub current: f64,
    /// V, `r_f × current` after rail clipping.
    pub tia_voltage: f64,
    pub clipped: bool,
    /// Max KCL residual of the nodal solve, 0 for ideal reads.
    pub kcl_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    /// Verify window is `[median / factor, median × factor]`.
    pub window_factor: f64,
    pub max_attempts: u32,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            window_factor: 1.5,
            max_attempts: 10,
        }
    }
}

impl VerifyParams {
    pub fn window(&self, dist: &ResistanceDistribution, state: DeviceState) -> (f64, f64) {
        let m = dist.median(state);
        (m / self.window_factor, m * self.window_factor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_factor.is_nan() || self.window_factor < 1.0 || self.max_attempts == 0 {
            return Err(Error::param(
                "verify window_factor must be >= 1 and max_attempts >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarState {
    rows: usize,
    cols: usize,
    cells: Vec<DeviceCell>,
    pub params: CrossbarParams,
}

impl CrossbarState {
    /// Fabricate a crossbar and RESET every device to HRS.
    pub fn init<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        params: CrossbarParams,
        rng: &mut R,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param(format!(
                "crossbar dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        params.validate()?;
        let cells = (0..rows * cols)
            .map(|_| {
                let fresh = device::fabricate(params.variability, rng);
                device::transition(fresh, DeviceState::Hrs, &params.dist, rng)
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            cells,
            params,
        })
    }

    /// Build from explicit cells (row-major).
    pub fn from_cells(
        rows: usize,
        cols: usize,
        cells: Vec<DeviceCell>,
        params: CrossbarParams,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("crossbar dimensions must be >= 1"));
        }
        if cells.len() != rows * cols {
            return Err(Error::dim(format!(
                "expected {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        if let Some(c) = cells
            .iter()
            .find(|c| !(c.resistance > 0.0 && c.resistance.is_finite()))
        {
            return Err(Error::param(format!(
                "cell resistance must be finite and > 0, got {}",
                c.resistance
            )));
        }
        params.validate()?;
        Ok(Self {
            rows,
            cols,
            cells,
            params,
        })
    }

    /// Crossbar whose cells have the given resistances (MΩ), states inferred
    /// from the nearer median in log space.
    pub fn from_resistances(
        rows: usize,
        cols: usize,
        resistances: &[f64],
        params: CrossbarParams,
    ) -> Result<Self> {
        let split = (params.dist.median_lrs * params.dist.median_hrs).sqrt();
        let cells = resistances
            .iter()
            .map(|&r| DeviceCell {
                state: if r < split {
                    DeviceState::Lrs
                } else {
                    DeviceState::Hrs
                },
                resistance: r,
                program_count: 1,
                deviate: None,
            })
            .collect();
        Self::from_cells(rows, cols, cells, params)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[DeviceCell] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> &DeviceCell {
        &self.cells[row * self.cols + col]
    }

    pub fn set_cell(&mut self, row: usize, col: usize, cell: DeviceCell) {
        self.cells[row * self.cols + col] = cell;
    }

    /// Conductance in siemens.
    pub fn conductance(&self, row: usize, col: usize) -> f64 {
        self.cell(row, col).conductance_siemens()
    }

    pub fn row_conductances(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|c| self.conductance(row, c)).collect()
    }

    pub fn states(&self) -> Vec<DeviceState> {
        self.cells.iter().map(|c| c.state).collect()
    }

    pub(crate) fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.rows {
            return Err(Error::OutOfBounds {
                what: "row",
                index: row,
                len: self.rows,
            });
        }
        Ok(())
    }

    pub(crate) fn check_columns(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::dim(format!(
                "{} column voltages for {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(())
    }

    /// Program-and-verify: pulse towards `target` until the resistance lies in
    /// `window` (MΩ, inclusive). Returns the number of pulses used.
    pub fn program_cell<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        target: DeviceState,
        window: (f64, f64),
        max_attempts: u32,
        rng: &mut R,
    ) -> Result<u32> {
        self.check_row(row)?;
        if col >= self.cols {
            return Err(Error::OutOfBounds {
                what: "column",
                index: col,
                len: self.cols,
            });
        }
        if max_attempts == 0 {
            return Err(Error::param("max_attempts must be >= 1"));
        }
        let (lo, hi) = window;
        let mut cell = *self.cell(row, col);
        for attempt in 1..=max_attempts {
            cell = device::transition(cell, target, &self.params.dist, rng);
            if cell.resistance >= lo && cell.resistance <= hi {
                self.set_cell(row, col, cell);
                return Ok(attempt);
            }
        }
        self.set_cell(row, col, cell);
        Err(Error::ProgramFailure {
            row,
            col,
            attempts: max_attempts,
            resistance_mohm: cell.resistance,
        })
    }

    /// Ideal virtual-ground read of one row, without rail clipping.
    /// Returns `(current [A], r_f × current [V])`.
    pub fn ideal_read_row(&self, row: usize, column_voltages: &[f64]) -> Result<(f64, f64)> {
        self.check_row(row)?;
        self.check_columns(column_voltages)?;
        let current: f64 = column_voltages
            .iter()
            .enumerate()
            .map(|(c, v)| v * self.conductance(row, c))
            .sum();
        Ok((current, self.params.r_f * current))
    }

    /// Read one row in the given mode and pass the current through the TIA.
    pub fn read_row(&self, row: usize, column_voltages: &[f64], mode: ReadMode) -> Result<RowRead> {
        let (current, residual) = match mode {
            ReadMode::Ideal => (self.ideal_read_row(row, column_voltages)?.0, 0.0),
            ReadMode::SneakPath { rows } => {
                let bc = ReadBoundaryConditions {
                    driven_column_voltages: column_voltages.to_vec(),
                    sensed_row: row,
                    nonsensed_row_policy: rows,
                };
                let sol = if self.params.line_resistance > 0.0 {
                    solver::solve_read_with_line_resistance(self, &bc)?
                } else {
                    solver::solve_read(self, &bc)?
                };
                (sol.sensed_row_current, sol.kcl_residual)
            }
        };
        Ok(self.sense(current, residual))
    }

    pub(crate) fn sense(&self, current: f64, kcl_residual: f64) -> RowRead {
        let raw = self.params.r_f * current;
        let (tia_voltage, clipped) = match self.params.rail {
            Some(rail) if raw.abs() > rail => (rail.copysign(raw), true),
            _ => (raw, false),
        };
        RowRead {
            current,
            tia_voltage,
            clipped,
            kcl_residual,
        }
    }
}
