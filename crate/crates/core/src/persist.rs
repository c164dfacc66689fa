//! Versioned JSON artifacts.
//!
//! Every file is a flat JSON object carrying `schema_version` and `kind`
//! next to the payload fields. Loading rejects other versions and wrong
//! kinds, reports a missing field by name, and accepts unknown fields with a
//! warning so newer writers stay readable.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::crossbar::{CrossbarParams, CrossbarState};
use crate::device::{DeviceCell, DeviceState, ResistanceDistribution, VariabilityMode};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentResult, SweepTable};
use crate::mapper::{MappingPlan, ProgrammedPlan, ProgrammingReport};
use crate::trainer::TrainedModel;

pub const SCHEMA_VERSION: u32 = 1;

/// A structure that can be written as a standalone artifact file.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Artifact for TrainedModel {
    const KIND: &'static str = "model";
}

impl Artifact for CrossbarDocument {
    const KIND: &'static str = "crossbar";
}

impl Artifact for MappingPlan {
    const KIND: &'static str = "plan";
}

impl Artifact for ProgrammedDocument {
    const KIND: &'static str = "programmed";
}

impl Artifact for ExperimentResult {
    const KIND: &'static str = "result";
}

impl Artifact for SweepTable {
    const KIND: &'static str = "sweep";
}

/// A loaded artifact plus the unknown fields that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

pub fn to_json<T: Artifact>(value: &T) -> Result<String> {
    let payload = serde_json::to_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let Value::Object(fields) = payload else {
        return Err(Error::Schema(format!(
            "{} does not serialize to an object",
            T::KIND
        )));
    };
    let mut doc = Map::new();
    doc.insert("schema_version".into(), SCHEMA_VERSION.into());
    doc.insert("kind".into(), T::KIND.into());
    for (k, v) in fields {
        if doc.contains_key(&k) {
            return Err(Error::Schema(format!(
                "payload field {k:?} collides with the envelope"
            )));
        }
        doc.insert(k, v);
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))
        .map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn from_json<T: Artifact>(text: &str) -> Result<Loaded<T>> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    let Value::Object(mut fields) = doc else {
        return Err(Error::Schema("artifact must be a JSON object".into()));
    };
    match fields.remove("schema_version") {
        None => return Err(Error::Schema("missing field `schema_version`".into())),
        Some(v) if v.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "unsupported schema_version {v} (this build reads {SCHEMA_VERSION})"
            )))
        }
    }
    match fields.remove("kind") {
        None => return Err(Error::Schema("missing field `kind`".into())),
        Some(Value::String(k)) if k == T::KIND => {}
        Some(k) => {
            return Err(Error::Schema(format!(
                "expected kind \"{}\", found {k}",
                T::KIND
            )))
        }
    }
    let mut warnings = Vec::new();
    let value = serde_ignored::deserialize(Value::Object(fields), |path| {
        warnings.push(format!("ignoring unknown field `{path}`"));
    })
    .map_err(|e| Error::Schema(e.to_string()))?;
    for w in &warnings {
        log::warn!("{} artifact: {w}", T::KIND);
    }
    Ok(Loaded { value, warnings })
}

pub fn save<T: Artifact>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn load<T: Artifact>(path: impl AsRef<Path>) -> Result<Loaded<T>> {
    from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub row: usize,
    pub col: usize,
    pub state: DeviceState,
    pub resistance_mohm: f64,
    pub program_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviate: Option<f64>,
}

/// On-disk form of a [`CrossbarState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarDocument {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellRecord>,
    pub dist_params: ResistanceDistribution,
    pub variability: VariabilityMode,
    pub line_resistance: f64,
    pub driver_resistance: f64,
    pub read_voltage: f64,
    pub r_f: f64,
    pub rail: Option<f64>,
}

impl From<&CrossbarState> for CrossbarDocument {
    fn from(x: &CrossbarState) -> Self {
        let p = x.params;
        let cells = (0..x.rows())
            .flat_map(|r| (0..x.cols()).map(move |c| (r, c)))
            .map(|(row, col)| {
                let cell = x.cell(row, col);
                CellRecord {
                    row,
                    col,
                    state: cell.state,
                    resistance_mohm: cell.resistance,
                    program_count: cell.program_count,
                    deviate: cell.deviate,
                }
            })
            .collect();
        Self {
            rows: x.rows(),
            cols: x.cols(),
            cells,
            dist_params: p.dist,
            variability: p.variability,
            line_resistance: p.line_resistance,
            driver_resistance: p.driver_resistance,
            read_voltage: p.read_voltage,
            r_f: p.r_f,
            rail: p.rail,
        }
    }
}

impl CrossbarDocument {
    /// Rebuild the crossbar; every cell must appear exactly once.
    pub fn to_state(&self) -> Result<CrossbarState> {
        let n = self.rows * self.cols;
        let mut cells: Vec<Option<DeviceCell>> = vec![None; n];
        for rec in &self.cells {
            if rec.row >= self.rows || rec.col >= self.cols {
                return Err(Error::Schema(format!(
                    "cell ({}, {}) outside a {}x{} crossbar",
                    rec.row, rec.col, self.rows, self.cols
                )));
            }
            let slot = &mut cells[rec.row * self.cols + rec.col];
            if slot.is_some() {
                return Err(Error::Schema(format!(
                    "cell ({}, {}) listed twice",
                    rec.row, rec.col
                )));
            }
            *slot = Some(DeviceCell {
                state: rec.state,
                resistance: rec.resistance_mohm,
                program_count: rec.program_count,
                deviate: rec.deviate,
            });
        }
        let cells = cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| {
                    Error::Schema(format!(
                        "cell ({}, {}) missing",
                        i / self.cols,
                        i % self.cols
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = CrossbarParams {
            dist: self.dist_params,
            variability: self.variability,
            line_resistance: self.line_resistance,
            driver_resistance: self.driver_resistance,
            read_voltage: self.read_voltage,
            r_f: self.r_f,
            rail: self.rail,
        };
        CrossbarState::from_cells(self.rows, self.cols, cells, params)
    }
}

/// On-disk form of a [`ProgrammedPlan`]: the plan, one crossbar per phase
/// and the programming report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgrammedDocument {
    pub plan: MappingPlan,
    pub crossbars: Vec<CrossbarDocument>,
    pub report: ProgrammingReport,
}

impl From<&ProgrammedPlan> for ProgrammedDocument {
    fn from(p: &ProgrammedPlan) -> Self {
        Self {
            plan: p.plan.clone(),
            crossbars: p.crossbars.iter().map(CrossbarDocument::from).collect(),
            report: p.report.clone(),
        }
    }
}

impl ProgrammedDocument {
    pub fn to_programmed(&self) -> Result<ProgrammedPlan> {
        if self.crossbars.len() != self.plan.phases {
            return Err(Error::Schema(format!(
                "plan has {} phases but {} crossbars are stored",
                self.plan.phases,
                self.crossbars.len()
            )));
        }
        Ok(ProgrammedPlan {
            plan: self.plan.clone(),
            crossbars: self
                .crossbars
                .iter()
                .map(CrossbarDocument::to_state)
                .collect::<Result<_>>()?,
            report: self.report.clone(),
        })
    }
}
