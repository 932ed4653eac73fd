//! Command-line entry point: configuration, subcommands and their artifacts.

mod args;
mod commands;
mod config;

pub use args::{main_with_args, run, Cli, Command};
pub use commands::{
    cmd_compare, cmd_evaluate, cmd_fixture, cmd_predict, cmd_preprocess, cmd_train, model_file, read_cleaning_report,
    render_comparison, write_predictions, CompareOutcome, ComparisonRow, EvaluateOutcome, FixtureOutcome, Prediction,
    PreprocessOutcome, TrainOutcome, FIXTURE_FILE, FIXTURE_LABELS_FILE, MODEL_FILE, TRAIN_LOG_FILE,
};
pub use config::{resolve_data_path, DataSource, ModelConfig, PartitionName, RunConfig, DATA_DIR_ENV};
