//! `binvmm`: train, map, program and evaluate binarized networks on simulated
//! binary RRAM crossbars.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 experiment failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use binvmm::config::ModeName;
use binvmm::dataset::{load_wdbc, Dataset};
use binvmm::experiment::{self, SweepKnob};
use binvmm::mapper::{hardware_forward_dataset, plan_mapping, SolverDiagnostics};
use binvmm::persist::{self, Artifact, CrossbarDocument, ProgrammedDocument};
use binvmm::trainer::evaluate;
use binvmm::{Error, ExperimentConfig, MappingPlan, TrainedModel};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

const DEFAULT_DATA: &str = "data/wdbc.data";

#[derive(Parser, Debug)]
#[command(name = "binvmm", version, about = "Binary RRAM crossbar VMM simulator")]
struct Cli {
    /// Flat TOML config mirroring the experiment fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Crossbar read model; overrides the config.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ModeName>,
    /// Number of trials; overrides the config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// WDBC data file; overrides the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the binarized model on the training split; writes model.json.
    Train {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Place a trained model's weights on crossbars; writes plan.json.
    Map {
        #[arg(long)]
        model: PathBuf,
    },
    /// Program every phase of a plan; writes programmed.json and one
    /// crossbar-<phase>.json per phase.
    Program {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run hardware inference on a split; writes inference.json.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        programmed: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Full multi-trial experiment; writes result.json.
    Experiment,
    /// One experiment per knob value; writes sweep.json and sweep.csv.
    Sweep {
        /// sigma, median_ratio, line_resistance, driver_resistance or floating_policy.
        #[arg(long, value_parser = parse_knob)]
        knob: SweepKnob,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    Train,
    Test,
}

fn parse_mode(s: &str) -> Result<ModeName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_knob(s: &str) -> Result<SweepKnob, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Experiment(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Experiment(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Experiment(m) => m,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: Error) -> Failure {
    Failure::Data(e.to_string())
}

fn failed(e: Error) -> Failure {
    Failure::Experiment(e.to_string())
}

#[derive(Serialize)]
struct InferenceReport {
    split: SplitArg,
    mode: ModeName,
    samples: usize,
    software_accuracy: f64,
    hardware_accuracy: f64,
    predictions: Vec<usize>,
    diagnostics: SolverDiagnostics,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = resolve_config(&cli)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| failed(e.into()))?;
    match &cli.command {
        Command::Train { trial } => {
            let ds = load_data(&cli, &config)?;
            let (train_set, test_set) =
                experiment::trial_split(&config, &ds, *trial).map_err(data)?;
            let model = experiment::train_trial(&config, &train_set, *trial).map_err(failed)?;
            let test_acc =
                evaluate(&model, &test_set.features, &test_set.labels).map_err(failed)?;
            let path = write(&cli.out, "model.json", &model)?;
            println!(
                "trained {} epochs: loss {:.4}, train accuracy {:.2}%, test accuracy {:.2}% -> {}",
                model.metrics.epochs_run,
                model.metrics.final_loss,
                100.0 * model.metrics.train_accuracy,
                100.0 * test_acc,
                path.display()
            );
        }
        Command::Map { model } => {
            let model: TrainedModel = read(model)?;
            let plan =
                plan_mapping(&model.binary_weights, config.rows, config.cols).map_err(failed)?;
            let path = write(&cli.out, "plan.json", &plan)?;
            println!(
                "mapped {}x{} weights onto {} phase(s) of a {}x{} crossbar -> {}",
                plan.classes,
                plan.features,
                plan.phases,
                plan.rows,
                plan.cols,
                path.display()
            );
        }
        Command::Program { plan, trial } => {
            let plan: MappingPlan = read(plan)?;
            let programmed = experiment::program_trial(&config, &plan, *trial).map_err(failed)?;
            for (phase, xbar) in programmed.crossbars.iter().enumerate() {
                write(
                    &cli.out,
                    &format!("crossbar-{phase}.json"),
                    &CrossbarDocument::from(xbar),
                )?;
            }
            let path = write(
                &cli.out,
                "programmed.json",
                &ProgrammedDocument::from(&programmed),
            )?;
            println!(
                "programmed {} phase(s): {} pulses, {} verify failure(s) -> {}",
                programmed.crossbars.len(),
                programmed.report.total_pulses,
                programmed.report.failures,
                path.display()
            );
        }
        Command::Infer {
            model,
            programmed,
            split,
            trial,
        } => {
            let model: TrainedModel = read(model)?;
            let doc: ProgrammedDocument = read(programmed)?;
            let programmed = doc.to_programmed().map_err(data)?;
            let ds = load_data(&cli, &config)?;
            let (train_set, test_set) =
                experiment::trial_split(&config, &ds, *trial).map_err(data)?;
            let set = match split {
                SplitArg::Train => train_set,
                SplitArg::Test => test_set,
            };
            let software_accuracy = evaluate(&model, &set.features, &set.labels).map_err(failed)?;
            let encoded = model.encode_all(&set.features).map_err(failed)?;
            let hw = hardware_forward_dataset(&programmed, &encoded, config.read_mode())
                .map_err(failed)?;
            let report = InferenceReport {
                split: *split,
                mode: config.read_mode,
                samples: set.len(),
                software_accuracy,
                hardware_accuracy: hw.accuracy(&set.labels),
                predictions: hw.predictions,
                diagnostics: hw.diagnostics,
            };
            let path = cli.out.join("inference.json");
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&path, text + "\n").map_err(|e| failed(e.into()))?;
            println!(
                "{} samples: software {:.2}%, hardware {:.2}% -> {}",
                report.samples,
                100.0 * report.software_accuracy,
                100.0 * report.hardware_accuracy,
                path.display()
            );
        }
        Command::Experiment => {
            let ds = load_data(&cli, &config)?;
            let result = experiment::run_experiment(&config, &ds).map_err(failed)?;
            println!("trial  sw_train  sw_test  hw_train  hw_test");
            for t in &result.trials {
                println!(
                    "{:>5}  {:>8.2}  {:>7.2}  {:>8.2}  {:>7.2}",
                    t.trial,
                    100.0 * t.software_train_acc,
                    100.0 * t.software_test_acc,
                    100.0 * t.hardware_train_acc,
                    100.0 * t.hardware_test_acc
                );
            }
            let a = &result.aggregate;
            println!(
                " mean  {:>8.2}  {:>7.2}  {:>8.2}  {:>7.2}",
                100.0 * a.software_train_acc.mean,
                100.0 * a.software_test_acc.mean,
                100.0 * a.hardware_train_acc.mean,
                100.0 * a.hardware_test_acc.mean
            );
            let path = write(&cli.out, "result.json", &result)?;
            println!("-> {}", path.display());
        }
        Command::Sweep { knob, values } => {
            let ds = load_data(&cli, &config)?;
            let table = experiment::sweep(&config, &ds, *knob, values).map_err(failed)?;
            let csv = table.to_csv();
            print!("{csv}");
            std::fs::write(cli.out.join("sweep.csv"), csv).map_err(|e| failed(e.into()))?;
            let path = write(&cli.out, "sweep.json", &table)?;
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_toml(&text).map_err(usage)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.read_mode = mode;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(path) = &cli.data {
        config.dataset = Some(path.clone());
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn load_data(_cli: &Cli, config: &ExperimentConfig) -> Result<Dataset, Failure> {
    let path = config
        .dataset
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA));
    load_wdbc(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read<T: Artifact>(path: &Path) -> Result<T, Failure> {
    let loaded =
        persist::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(loaded.value)
}

fn write<T: Artifact>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    persist::save(value, &path).map_err(failed)?;
    Ok(path)
}
