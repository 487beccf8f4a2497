//! Pipeline configuration, synthetic scenario generator and subcommand drivers.

mod commands;
mod config;
pub mod synth;

pub use commands::{
    cmd_evaluate, cmd_extract, cmd_featurize, cmd_fit_errors, cmd_simulate, cmd_synth, cmd_train, journey_schedule,
    load_split, run, Command,
};
pub use config::{
    ClassifierSection, ErrorSection, FeatureSection, InputPaths, ModelKind, PipelineConfig, ResidualSection,
    SimulateSection, SynthSection,
};
