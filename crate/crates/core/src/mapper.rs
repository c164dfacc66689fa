//! Complementary-pair weight mapping and the inference read schedule.
//!
//! Each logical weight occupies two cells of one column on consecutive rows:
//! a `Plus` row and a `Minus` row, programmed to complementary states. Weight
//! vectors longer than the column count are split into partitions, one row
//! pair per (class, partition). Row pairs are packed class-major into phases;
//! a phase is one full programming of the physical crossbar.
//!
//! A class score is `Σ_p V⁺_p − Σ_p V⁻_p` where each `V_p` is the PWM-integrated
//! TIA output of one row.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarParams, CrossbarState, ReadMode, VerifyParams};
use crate::device::DeviceState;
use crate::encoder::{self, pwm_expand_with, QuantizedSample};
use crate::error::{Error, Result};
use crate::solver::PreparedRead;

/// Scores closer than this fraction of the largest polarity sum are ties.
pub const TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    pub fn index(self) -> usize {
        match self {
            Polarity::Plus => 0,
            Polarity::Minus => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightSlot {
    pub class: usize,
    pub polarity: Polarity,
    pub partition: usize,
    pub feature: usize,
    pub phase: usize,
    pub row: usize,
    pub col: usize,
    pub logical_weight: i8,
}

impl WeightSlot {
    /// +1 is (Plus LRS, Minus HRS); −1 is the inverse.
    pub fn target_state(&self) -> DeviceState {
        match (self.polarity, self.logical_weight > 0) {
            (Polarity::Plus, true) | (Polarity::Minus, false) => DeviceState::Lrs,
            _ => DeviceState::Hrs,
        }
    }
}

/// One (class, partition) row pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPair {
    pub class: usize,
    pub partition: usize,
    pub phase: usize,
    /// Plus row; the Minus row is `plus_row + 1`.
    pub plus_row: usize,
    pub first_feature: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub classes: usize,
    pub features: usize,
    pub rows: usize,
    pub cols: usize,
    pub n_partitions: usize,
    pub phases: usize,
    /// Features mapped to columns `0..len` of each partition.
    pub feature_order: Vec<Vec<usize>>,
    pub pairs: Vec<RowPair>,
    pub slots: Vec<WeightSlot>,
}

impl MappingPlan {
    pub fn pair_capacity(&self) -> usize {
        self.rows / 2
    }

    pub fn slots_in_phase(&self, phase: usize) -> impl Iterator<Item = &WeightSlot> {
        self.slots.iter().filter(move |s| s.phase == phase)
    }

    /// Target state of every cell of a phase, row-major; unused cells stay HRS.
    pub fn phase_targets(&self, phase: usize) -> Vec<DeviceState> {
        let mut t = vec![DeviceState::Hrs; self.rows * self.cols];
        for s in self.slots_in_phase(phase) {
            t[s.row * self.cols + s.col] = s.target_state();
        }
        t
    }

    /// Logical weight matrix reconstructed from the slots.
    pub fn logical_weights(&self) -> Vec<Vec<i8>> {
        let mut w = vec![vec![0i8; self.features]; self.classes];
        for s in self.slots.iter().filter(|s| s.polarity == Polarity::Plus) {
            w[s.class][s.feature] = s.logical_weight;
        }
        w
    }
}

pub fn expected_phases(classes: usize, features: usize, rows: usize, cols: usize) -> usize {
    let pairs = classes * features.div_ceil(cols);
    pairs.div_ceil(rows / 2)
}

/// Place a `K × F` matrix of ±1 weights on a `rows × cols` crossbar.
pub fn plan_mapping(weights: &[Vec<i8>], rows: usize, cols: usize) -> Result<MappingPlan> {
    if rows < 2 {
        return Err(Error::param(format!(
            "complementary mapping needs >= 2 rows, got {rows}"
        )));
    }
    if cols == 0 {
        return Err(Error::param("crossbar needs >= 1 column"));
    }
    let classes = weights.len();
    let features = weights.first().map_or(0, Vec::len);
    if classes == 0 || features == 0 {
        return Err(Error::param("weight matrix is empty"));
    }
    for (k, w) in weights.iter().enumerate() {
        if w.len() != features {
            return Err(Error::dim(format!(
                "class {k} has {} weights, expected {features}",
                w.len()
            )));
        }
        if let Some(bad) = w.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::param(format!(
                "class {k} has non-binary weight {bad}"
            )));
        }
    }

    let n_partitions = features.div_ceil(cols);
    let capacity = rows / 2;
    let feature_order: Vec<Vec<usize>> = (0..n_partitions)
        .map(|p| (p * cols..((p + 1) * cols).min(features)).collect())
        .collect();

    let mut pairs = Vec::with_capacity(classes * n_partitions);
    let mut slots = Vec::with_capacity(2 * classes * features);
    for (k, wk) in weights.iter().enumerate() {
        for (p, cols_of_p) in feature_order.iter().enumerate() {
            let j = k * n_partitions + p;
            let phase = j / capacity;
            let plus_row = 2 * (j % capacity);
            pairs.push(RowPair {
                class: k,
                partition: p,
                phase,
                plus_row,
                first_feature: cols_of_p[0],
                width: cols_of_p.len(),
            });
            for (col, &f) in cols_of_p.iter().enumerate() {
                for (polarity, row) in [(Polarity::Plus, plus_row), (Polarity::Minus, plus_row + 1)]
                {
                    slots.push(WeightSlot {
                        class: k,
                        polarity,
                        partition: p,
                        feature: f,
                        phase,
                        row,
                        col,
                        logical_weight: wk[f],
                    });
                }
            }
        }
    }
    let phases = pairs.last().map_or(0, |p| p.phase + 1);
    Ok(MappingPlan {
        classes,
        features,
        rows,
        cols,
        n_partitions,
        phases,
        feature_order,
        pairs,
        slots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Abort,
    #[default]
    AcceptAndLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub phase: usize,
    pub row: usize,
    pub col: usize,
    pub target: DeviceState,
    pub attempts: u32,
    pub resistance_mohm: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProgrammingReport {
    /// Every LRS-target cell, in programming order.
    pub cells: Vec<CellRecord>,
    pub failures: usize,
    pub total_pulses: u64,
}

/// Plan plus one programmed crossbar per phase.
#[derive(Debug, Clone)]
pub struct ProgrammedPlan {
    pub plan: MappingPlan,
    pub crossbars: Vec<CrossbarState>,
    pub report: ProgrammingReport,
}

/// Program every phase: RESET the whole array to HRS, then SET only the
/// LRS-target cells with program-and-verify.
pub fn program_plan<R: Rng + ?Sized>(
    plan: &MappingPlan,
    params: CrossbarParams,
    verify: VerifyParams,
    policy: FailurePolicy,
    rng: &mut R,
) -> Result<ProgrammedPlan> {
    verify.validate()?;
    let mut report = ProgrammingReport::default();
    let mut crossbars = Vec::with_capacity(plan.phases.max(1));
    let window = verify.window(&params.dist, DeviceState::Lrs);
    for phase in 0..plan.phases.max(1) {
        let mut xbar = CrossbarState::init(plan.rows, plan.cols, params, rng)?;
        report.total_pulses += (plan.rows * plan.cols) as u64;
        for slot in plan.slots_in_phase(phase) {
            if slot.target_state() != DeviceState::Lrs {
                continue;
            }
            let outcome = xbar.program_cell(
                slot.row,
                slot.col,
                DeviceState::Lrs,
                window,
                verify.max_attempts,
                rng,
            );
            let (attempts, verified) = match outcome {
                Ok(a) => (a, true),
                Err(Error::ProgramFailure {
                    attempts,
                    resistance_mohm,
                    ..
                }) => {
                    if policy == FailurePolicy::Abort {
                        return Err(Error::ProgramFailure {
                            row: slot.row,
                            col: slot.col,
                            attempts,
                            resistance_mohm,
                        });
                    }
                    log::warn!(
                        "phase {phase}: cell ({}, {}) left at {resistance_mohm:.3} MΩ after {attempts} pulses",
                        slot.row,
                        slot.col
                    );
                    report.failures += 1;
                    (attempts, false)
                }
                Err(e) => return Err(e),
            };
            report.total_pulses += u64::from(attempts);
            report.cells.push(CellRecord {
                phase,
                row: slot.row,
                col: slot.col,
                target: DeviceState::Lrs,
                attempts,
                resistance_mohm: xbar.cell(slot.row, slot.col).resistance,
                verified,
            });
        }
        crossbars.push(xbar);
    }
    Ok(ProgrammedPlan {
        plan: plan.clone(),
        crossbars,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    /// `partial[k][p] = [V⁺, V⁻]` for class k, partition p.
    pub partial: Vec<Vec<[f64; 2]>>,
    /// `[Σ_p V⁺, Σ_p V⁻]` per class.
    pub polarity_sums: Vec<[f64; 2]>,
    /// `V⁺ − V⁻` per class.
    pub scores: Vec<f64>,
    pub decision: usize,
}

impl ClassScore {
    fn assemble(partial: Vec<Vec<[f64; 2]>>) -> Self {
        let polarity_sums: Vec<[f64; 2]> = partial
            .iter()
            .map(|parts| {
                parts
                    .iter()
                    .fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]])
            })
            .collect();
        let scores: Vec<f64> = polarity_sums.iter().map(|s| s[0] - s[1]).collect();
        let scale = polarity_sums
            .iter()
            .map(|s| s[0].abs() + s[1].abs())
            .fold(0.0, f64::max);
        let tol = TIE_RTOL * scale;
        let mut decision = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[decision] + tol {
                decision = k;
            }
        }
        ClassScore {
            partial,
            polarity_sums,
            scores,
            decision,
        }
    }
}

/// Counters gathered while running inference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub row_integrations: u64,
    pub solves: u64,
    pub clipped_cycles: u64,
    /// Max over prepared networks of `kcl_residual / max_branch_current`,
    /// checked on an all-columns-on drive.
    pub max_relative_kcl_residual: f64,
}

impl SolverDiagnostics {
    fn merge(self, o: Self) -> Self {
        Self {
            row_integrations: self.row_integrations + o.row_integrations,
            solves: self.solves + o.solves,
            clipped_cycles: self.clipped_cycles + o.clipped_cycles,
            max_relative_kcl_residual: self
                .max_relative_kcl_residual
                .max(o.max_relative_kcl_residual),
        }
    }
}

/// Programmed crossbars plus pre-factored read networks, ready for many samples.
pub struct InferenceEngine<'a> {
    programmed: &'a ProgrammedPlan,
    /// Indexed by pair, `[plus, minus]`. `None` in ideal mode.
    prepared: Vec<Option<[PreparedRead; 2]>>,
    base: SolverDiagnostics,
}

impl<'a> InferenceEngine<'a> {
    pub fn new(programmed: &'a ProgrammedPlan, mode: ReadMode) -> Result<Self> {
        let plan = &programmed.plan;
        if programmed.crossbars.len() < plan.phases {
            return Err(Error::dim("fewer programmed crossbars than phases"));
        }
        let mut base = SolverDiagnostics::default();
        let prepared = match mode {
            ReadMode::Ideal => plan.pairs.iter().map(|_| None).collect(),
            ReadMode::SneakPath { rows } => plan
                .pairs
                .iter()
                .map(|pair| {
                    let xbar = &programmed.crossbars[pair.phase];
                    let all_on = vec![xbar.params.read_voltage; xbar.cols()];
                    let mut prep = |row| -> Result<PreparedRead> {
                        let p = encoder::prepare_row(xbar, row, rows)?;
                        let sol = p.solve(&all_on)?;
                        if sol.max_branch_current > 0.0 {
                            base.max_relative_kcl_residual = base
                                .max_relative_kcl_residual
                                .max(sol.kcl_residual / sol.max_branch_current);
                        }
                        Ok(p)
                    };
                    Ok(Some([prep(pair.plus_row)?, prep(pair.plus_row + 1)?]))
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            programmed,
            prepared,
            base,
        })
    }

    pub fn infer(&self, q: &QuantizedSample) -> Result<(ClassScore, SolverDiagnostics)> {
        let plan = &self.programmed.plan;
        if q.features() != plan.features {
            return Err(Error::dim(format!(
                "sample has {} features, plan expects {}",
                q.features(),
                plan.features
            )));
        }
        let mut partial = vec![vec![[0.0; 2]; plan.n_partitions]; plan.classes];
        let mut diag = SolverDiagnostics::default();
        // Phases are visited in order; partial sums are stored until the end.
        for phase in 0..plan.phases {
            let xbar = &self.programmed.crossbars[phase];
            for (idx, pair) in plan
                .pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| p.phase == phase)
            {
                let slice = q.slice(pair.first_feature, pair.width);
                let trace = pwm_expand_with(&slice, xbar.params.read_voltage);
                for pol in [Polarity::Plus, Polarity::Minus] {
                    let row = pair.plus_row + pol.index();
                    let prepared = self.prepared[idx].as_ref().map(|p| &p[pol.index()]);
                    let acc = encoder::accumulate_with(xbar, row, &trace, prepared)?;
                    partial[pair.class][pair.partition][pol.index()] = acc.value;
                    diag.row_integrations += 1;
                    diag.solves += acc.solves as u64;
                    diag.clipped_cycles += u64::from(acc.clipped_cycles);
                }
            }
        }
        Ok((ClassScore::assemble(partial), diag))
    }

    pub fn base_diagnostics(&self) -> SolverDiagnostics {
        self.base
    }
}

/// Run the full read schedule for one sample.
pub fn schedule_inference(
    programmed: &ProgrammedPlan,
    q: &QuantizedSample,
    mode: ReadMode,
) -> Result<ClassScore> {
    Ok(InferenceEngine::new(programmed, mode)?.infer(q)?.0)
}

#[derive(Debug, Clone)]
pub struct HardwareOutput {
    pub predictions: Vec<usize>,
    pub scores: Vec<ClassScore>,
    pub diagnostics: SolverDiagnostics,
}

impl HardwareOutput {
    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self
            .predictions
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / labels.len() as f64
    }
}

/// Program once, infer every sample against the same crossbars.
pub fn hardware_forward_dataset(
    programmed: &ProgrammedPlan,
    samples: &[QuantizedSample],
    mode: ReadMode,
) -> Result<HardwareOutput> {
    let engine = InferenceEngine::new(programmed, mode)?;
    let results: Vec<(ClassScore, SolverDiagnostics)> = samples
        .par_iter()
        .map(|q| engine.infer(q))
        .collect::<Result<_>>()?;
    let diagnostics = results
        .iter()
        .fold(engine.base_diagnostics(), |d, (_, s)| d.merge(*s));
    let (scores, _): (Vec<ClassScore>, Vec<_>) = results.into_iter().unzip();
    Ok(HardwareOutput {
        predictions: scores.iter().map(|s| s.decision).collect(),
        scores,
        diagnostics,
    })
}
