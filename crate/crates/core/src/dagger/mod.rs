//! Robot-gated DAgger: expert demonstrations, gated rollouts with expert
//! takeover, data aggregation and periodic retraining.

mod dataset;
mod learner;
mod rollout;
mod run;

pub use dataset::{Dataset, Demonstration, Pair, Provenance};
pub use learner::{
    plan_with_loss, reference_losses, DiffusionLearner, Learner, LearnerSettings, Method, UpdateStats,
};
pub(crate) use learner::{chunk, prepare, write_threshold};
pub use rollout::{
    collect_initial, expert_episode, rollout_unassisted, rollout_with_gate, ControlSegment, Controller,
    EpisodeRecord, EpisodeSpec, ExpertSchedule, ExpertSource, ExpertStep, Outcome, Plan, Planner,
    RolloutObserver, ScriptedExpert, TrajectoryStep, UnassistedOutcome,
};
pub use run::{run_dagger, DaggerConfig, DaggerRun, InterventionLog, UpdateMetrics};
