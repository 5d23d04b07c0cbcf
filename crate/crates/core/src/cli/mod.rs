//! Experiment orchestration behind the `imgspam` binary: configuration,
//! the train / eval / synth / gradcheck / compare commands, and reports.

mod commands;
mod config;
mod report;

pub use commands::{
    cmd_compare, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, config_from_report, EvalOutcome,
    FeatureOverrides, RunArtifact, TrainOutcome, EVAL_REPORT_FILE, EVAL_ROC_FILE, HISTORY_FILE,
    MODEL_FILE, REPORT_FILE, ROC_FILE,
};
pub use config::{ClassifierKind, ExperimentConfig, KernelKind, SvmSettings, CONFIG_KEYS};
pub use report::{compare, config_hash, ComparisonRow, ComparisonTable, EvalReport};
