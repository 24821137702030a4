//! Experiment runner: configuration documents and the `gen`, `train`, `eval`,
//! `boundary` and `oracle-check` commands behind the `cssi-lab` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_boundary, cmd_eval, cmd_gen, cmd_oracle, cmd_train, ensure_passed, run_pipeline, shuffled_null, BoundaryReport,
    GenReport, RunDirs, SeedSummary, Stat, Summary, TargetSummary, ThresholdCounts, TrainReport,
};
pub use config::{BoundaryBlock, DatasetSpec, EvalBlock, ExperimentConfig, ScoreSource};
pub use error::{exit, LabError, LabResult};
