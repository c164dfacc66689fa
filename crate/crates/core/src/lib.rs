//! Simulation toolkit for vector-matrix multiplication on selector-free binary
//! RRAM crossbars.
//!
//! The crate is organised bottom-up:
//!
//! * [`device`]: binary OxRAM cell with lognormal resistance sampling.
//! * [`crossbar`]: crossbar state, HRS initialization, program-and-verify writes
//!   and the ideal TIA row read.
//! * [`solver`]: nodal analysis of the resistive network for sneak-path-aware reads.
//! * [`encoder`]: min-max normalization, 8-bit quantization and PWM expansion.
//! * [`trainer`]: ex-situ training of a binarized ADALINE (squared hinge + ADAM,
//!   straight-through estimator).
//! * [`mapper`]: complementary-pair weight placement, multi-phase programming and
//!   the inference read schedule.
//! * [`dataset`], [`config`], [`experiment`], [`persist`]: the experiment harness.

pub mod config;
pub mod crossbar;
pub mod dataset;
pub mod device;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod mapper;
pub mod persist;
pub mod rng;
pub mod solver;
pub mod trainer;

pub use config::{ExperimentConfig, ModeName};
pub use crossbar::{CrossbarParams, CrossbarState, ReadMode, RowPolicy};
pub use dataset::Dataset;
pub use device::{DeviceCell, DeviceState, ResistanceDistribution, VariabilityMode};
pub use encoder::{NormalizationStats, PwmTrace, QuantizedSample};
pub use error::{Error, Result};
pub use experiment::{ExperimentResult, TrialResult};
pub use mapper::{ClassScore, MappingPlan, Polarity, WeightSlot};
pub use solver::{NodalSolution, ReadBoundaryConditions};
pub use trainer::{TrainedModel, TrainingParams};
