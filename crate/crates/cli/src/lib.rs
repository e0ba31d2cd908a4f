//! Command-line orchestration of the road segmentation pipeline: synthetic
//! data, LiDAR projection previews, training, evaluation, inference and the
//! RFU-count ablation.

pub mod commands;
pub mod config;
pub mod exit;
pub mod run_dir;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_infer, cmd_project, cmd_synth, cmd_train, EvalSubset, ABLATION_JSON, ABLATION_TABLE,
    REPORT_JSON, REPORT_TXT,
};
pub use config::{ConfigError, ConfigFile, Overrides, RunConfig};
pub use exit::exit_code;
pub use run_dir::MANIFEST_FILE;
