//! Configuration, on-disk formats and the command-line surface.

pub mod cli;
pub mod commands;
mod config;
mod records;

pub use config::{load_config, EnvConfig, EvalConfig, RunConfig};
pub use records::{
    dataset_to_string, read_dataset, write_csv, write_dataset, write_json, write_trajectories,
};
