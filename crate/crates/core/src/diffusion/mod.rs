//! DDPM machinery for action sequences: schedule, corruption, prediction
//! targets, training, ancestral sampling and the expected-loss estimator.

mod bundle;
mod normalize;
mod policy;
mod schedule;
mod train;

pub use bundle::{load_policy, save_policy, sidecar_path, PolicySidecar};
pub use normalize::{MinMax, Normalizer};
pub use policy::{DiffusionPolicy, PairTable, PolicyConfig, SAMPLE_CLIP};
pub use schedule::{noise_action, prediction_target, recover, NoiseSchedule, PredictionTarget};
pub use train::{train, TrainReport, TrainSchedule};
