//! Library surface of the pipeline CLI, exposed so integration tests can
//! drive the stage commands directly.

pub mod commands;
pub mod config;
pub mod util;

pub use commands::{
    cmd_alias, cmd_annotate, cmd_eval, cmd_pipeline, cmd_synth, cmd_train, AliasFile, Manifest,
    SavedReport,
};
pub use config::{AttributeDef, RunConfig, StagePaths};
