//! # dagger-lab
//!
//! A desk-scale laboratory for robot-gated interactive imitation learning.
//!
//! A diffusion policy is trained with the DDPM objective, and the same
//! objective, evaluated on the policy's own generated actions, serves as an
//! out-of-distribution signal that decides when the robot hands control to
//! an expert. The crate also ships an ensemble action-variance baseline,
//! behavior cloning, multi-modal 2D tasks with scripted experts, and an
//! evaluation harness for query quality, task success and wall-clock cost.
//!
//! Runnable walkthroughs live under `examples/`:
//!
//! ```bash
//! cargo run --release --example sample_two_modes
//! cargo run --release --example interactive_run
//! ```

pub mod baselines;
pub mod dagger;
pub mod diffusion;
pub mod env;
pub mod eval;
pub mod gate;
pub mod io;
pub mod nn;
pub mod seed;
pub mod session;

mod error;

pub use error::{Error, Result};
