//! Minimal network substrate: a fixed-topology conditional denoiser with a
//! hand-derived reverse pass, Adam, and a checkpoint format.

mod adam;
mod checkpoint;
mod denoiser;
mod mlp;
mod params;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT};
pub use denoiser::{embed_timestep, DenoiserBatch, DenoiserNet, DenoiserShape};
pub use mlp::{Activation, Mlp, Trace};
pub use params::{LayerSlot, Layout, ParameterVector};
