//! Evaluation harness: query quality against episode outcomes, task
//! success, per-region uncertainty, and wall-clock cost.

mod confusion;
mod rank;
mod regions;
mod shadow;
mod timing;
mod tuning;

pub use confusion::{ConfusionMatrix, Metrics};
pub use rank::{mann_whitney_greater, RankTest};
pub use regions::{region_analysis, ProbeRecord, RegionAnalysis, RegionRow};
pub use shadow::{evaluate_queries, success_rate, ExpertPlanner, QueryEvaluation, ShadowActor, Signal, SuccessReport};
pub use timing::{measure_phases, TimingReport};
pub use tuning::{tune_bc_epochs, BcTuning, EpochTrial};
