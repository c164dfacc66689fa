//! Train/test orchestration, multi-trial aggregation and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::crossbar::RowPolicy;
use crate::dataset::{split_with, Dataset};
use crate::error::{Error, Result};
use crate::mapper::{
    hardware_forward_dataset, plan_mapping, program_plan, MappingPlan, ProgrammedPlan,
    ProgrammingReport, SolverDiagnostics,
};
use crate::rng::{self, SeedStreams};
use crate::trainer::{evaluate, train, TrainedModel};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub software_train_acc: f64,
    pub software_test_acc: f64,
    pub hardware_train_acc: f64,
    pub hardware_test_acc: f64,
    pub final_loss: f64,
    pub phases: usize,
    pub diagnostics: SolverDiagnostics,
    pub programming: ProgrammingReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (0 for a single value).
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub software_train_acc: MeanStd,
    pub software_test_acc: MeanStd,
    pub hardware_train_acc: MeanStd,
    pub hardware_test_acc: MeanStd,
    /// Fraction of trials with hardware test accuracy ≤ software test accuracy.
    pub hardware_not_better_fraction: f64,
}

impl Aggregate {
    pub fn of(trials: &[TrialResult]) -> Self {
        let not_better = trials
            .iter()
            .filter(|t| t.hardware_test_acc <= t.software_test_acc)
            .count();
        Self {
            software_train_acc: MeanStd::of(trials.iter().map(|t| t.software_train_acc)),
            software_test_acc: MeanStd::of(trials.iter().map(|t| t.software_test_acc)),
            hardware_train_acc: MeanStd::of(trials.iter().map(|t| t.hardware_train_acc)),
            hardware_test_acc: MeanStd::of(trials.iter().map(|t| t.hardware_test_acc)),
            hardware_not_better_fraction: if trials.is_empty() {
                0.0
            } else {
                not_better as f64 / trials.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
}

/// Seed streams owned by trial `t`.
pub fn trial_streams(config: &ExperimentConfig, trial: usize) -> SeedStreams {
    SeedStreams::new(config.seed).trial(trial)
}

/// Train/test split of trial `t`.
pub fn trial_split(
    config: &ExperimentConfig,
    data: &Dataset,
    trial: usize,
) -> Result<(Dataset, Dataset)> {
    split_with(data, config.split_fraction, &trial_streams(config, trial))
}

/// Train the software model of trial `t` on its training split.
pub fn train_trial(
    config: &ExperimentConfig,
    train_set: &Dataset,
    trial: usize,
) -> Result<TrainedModel> {
    let classes = crate::dataset::WDBC_CLASSES;
    train(
        &train_set.features,
        &train_set.labels,
        classes,
        &config.training_params(),
        trial_streams(config, trial).root(),
    )
}

/// Program a mapping plan with the device stream of trial `t`.
pub fn program_trial(
    config: &ExperimentConfig,
    plan: &MappingPlan,
    trial: usize,
) -> Result<ProgrammedPlan> {
    program_plan(
        plan,
        config.crossbar_params(),
        config.verify_params(),
        config.failure_policy,
        &mut trial_streams(config, trial).stream(rng::DEVICE),
    )
}

/// One full pipeline pass: split, train, software evaluate, map, program,
/// hardware evaluate.
pub fn run_trial(config: &ExperimentConfig, data: &Dataset, trial: usize) -> Result<TrialResult> {
    let (train_set, test_set) = trial_split(config, data, trial)?;
    let model = train_trial(config, &train_set, trial)?;
    let software_train_acc = evaluate(&model, &train_set.features, &train_set.labels)?;
    let software_test_acc = evaluate(&model, &test_set.features, &test_set.labels)?;

    let plan = plan_mapping(&model.binary_weights, config.rows, config.cols)?;
    let programmed = program_trial(config, &plan, trial)?;
    let mode = config.read_mode();
    let hw_train =
        hardware_forward_dataset(&programmed, &model.encode_all(&train_set.features)?, mode)?;
    let hw_test =
        hardware_forward_dataset(&programmed, &model.encode_all(&test_set.features)?, mode)?;
    let mut diagnostics = hw_train.diagnostics;
    diagnostics.row_integrations += hw_test.diagnostics.row_integrations;
    diagnostics.solves += hw_test.diagnostics.solves;
    diagnostics.clipped_cycles += hw_test.diagnostics.clipped_cycles;
    diagnostics.max_relative_kcl_residual = diagnostics
        .max_relative_kcl_residual
        .max(hw_test.diagnostics.max_relative_kcl_residual);

    Ok(TrialResult {
        trial,
        seed: trial_streams(config, trial).root(),
        train_size: train_set.len(),
        test_size: test_set.len(),
        software_train_acc,
        software_test_acc,
        hardware_train_acc: hw_train.accuracy(&train_set.labels),
        hardware_test_acc: hw_test.accuracy(&test_set.labels),
        final_loss: model.metrics.final_loss,
        phases: plan.phases,
        diagnostics,
        programming: programmed.report,
    })
}

pub fn run_experiment(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(config, data, t).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        aggregate: Aggregate::of(&trials),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKnob {
    /// Sets both LRS and HRS log-std.
    Sigma,
    /// Sets `median_hrs = median_lrs × value`.
    MedianRatio,
    LineResistance,
    DriverResistance,
    /// Values `floating` or `grounded`.
    FloatingPolicy,
}

impl std::str::FromStr for SweepKnob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma" => SweepKnob::Sigma,
            "median_ratio" => SweepKnob::MedianRatio,
            "line_resistance" => SweepKnob::LineResistance,
            "driver_resistance" => SweepKnob::DriverResistance,
            "floating_policy" => SweepKnob::FloatingPolicy,
            _ => return Err(Error::param(format!("unknown sweep knob {s:?}"))),
        })
    }
}

impl SweepKnob {
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        if self == SweepKnob::FloatingPolicy {
            c.floating_row_policy = match value {
                "floating" => RowPolicy::Floating,
                "grounded" => RowPolicy::Grounded,
                _ => return Err(Error::param(format!("floating_policy value {value:?}"))),
            };
            return Ok(c);
        }
        let x: f64 = value
            .parse()
            .map_err(|_| Error::param(format!("sweep value {value:?} is not a number")))?;
        match self {
            SweepKnob::Sigma => {
                c.sigma_lrs = x;
                c.sigma_hrs = x;
            }
            SweepKnob::MedianRatio => c.median_hrs = c.median_lrs * x,
            SweepKnob::LineResistance => c.line_resistance = x,
            SweepKnob::DriverResistance => c.driver_resistance = x,
            SweepKnob::FloatingPolicy => unreachable!(),
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub knob: SweepKnob,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "value,sw_train_mean,sw_test_mean,hw_train_mean,hw_train_std,hw_test_mean,hw_test_std,hw_not_better_fraction\n",
        );
        for r in &self.rows {
            let a = &r.aggregate;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.value,
                a.software_train_acc.mean,
                a.software_test_acc.mean,
                a.hardware_train_acc.mean,
                a.hardware_train_acc.std,
                a.hardware_test_acc.mean,
                a.hardware_test_acc.std,
                a.hardware_not_better_fraction
            ));
        }
        out
    }
}

/// One `run_experiment` per value, same seed for every point.
pub fn sweep(
    config: &ExperimentConfig,
    data: &Dataset,
    knob: SweepKnob,
    values: &[String],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::param("sweep needs at least one value"));
    }
    let rows = values
        .iter()
        .map(|v| {
            let c = knob.apply(config, v)?;
            let r = run_experiment(&c, data)?;
            Ok(SweepRow {
                value: v.clone(),
                aggregate: r.aggregate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { knob, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std() {
        let m = MeanStd::of([1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert_eq!(MeanStd::of([4.0]).std, 0.0);
    }

    #[test]
    fn knobs_apply() {
        let c = ExperimentConfig::default();
        assert_eq!(SweepKnob::Sigma.apply(&c, "0.2").unwrap().sigma_hrs, 0.2);
        assert_eq!(
            SweepKnob::MedianRatio.apply(&c, "10").unwrap().median_hrs,
            20.0
        );
        assert_eq!(
            SweepKnob::FloatingPolicy
                .apply(&c, "grounded")
                .unwrap()
                .floating_row_policy,
            RowPolicy::Grounded
        );
        assert!(SweepKnob::Sigma.apply(&c, "x").is_err());
        assert!("nope".parse::<SweepKnob>().is_err());
    }
}
