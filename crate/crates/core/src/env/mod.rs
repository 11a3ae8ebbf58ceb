//! Deterministic 2D point-mass tasks with scripted experts.
//!
//! Observations are raw positions and actions are 2D displacements capped at
//! the task's step length. Both tasks have two expert modes whose paths share
//! a start region and then diverge, which is what makes them multi-modal.

mod circle;
mod two_goal;

use serde::{Deserialize, Serialize};

pub use circle::{CircleNav, NavConfig};
pub use two_goal::{TwoGoalConfig, TwoGoalReach};

use crate::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    Clockwise,
    CounterClockwise,
}

impl ExpertMode {
    pub fn other(self) -> Self {
        match self {
            ExpertMode::Clockwise => ExpertMode::CounterClockwise,
            ExpertMode::CounterClockwise => ExpertMode::Clockwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    IdUnimodal,
    IdMultimodal,
    OutOfDistribution,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 3] = [
        RegionLabel::IdUnimodal,
        RegionLabel::IdMultimodal,
        RegionLabel::OutOfDistribution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::IdUnimodal => "id_unimodal",
            RegionLabel::IdMultimodal => "id_multimodal",
            RegionLabel::OutOfDistribution => "ood",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub position: Point,
    pub steps: usize,
    pub done: bool,
    pub success: bool,
}

impl NavState {
    pub fn at(position: Point) -> Self {
        Self {
            position,
            steps: 0,
            done: false,
            success: false,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        self.position.to_vec()
    }

    /// Starts a fresh controller segment from the current position: the step
    /// counter restarts so an expert taking over gets the full time limit.
    pub fn begin_segment(&mut self) {
        self.steps = 0;
        self.done = self.success;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: NavState,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub observation: Vec<f64>,
    pub label: RegionLabel,
}

/// A multi-modal navigation task.
pub trait Task: Send + Sync {
    fn name(&self) -> &'static str;

    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    /// Steps a controller segment may take.
    fn time_limit(&self) -> usize;

    /// Largest displacement per step.
    fn max_step(&self) -> f64;

    fn goal_tolerance(&self) -> f64;

    /// Start state with the given tangential offset (length units).
    fn reset_at(&self, offset: f64) -> NavState;

    /// Start state with seeded tangential jitter.
    fn reset(&self, seed: u64) -> NavState;

    /// Distance to the nearest goal.
    fn goal_distance(&self, p: Point) -> f64;

    fn expert_action(&self, mode: ExpertMode, state: &NavState) -> Point;

    fn label_region(&self, p: Point) -> RegionLabel;

    fn probe_set(&self, per_region: usize, seed: u64) -> Vec<Probe>;

    /// Expert mode a position has already committed to, if any. Used to pick
    /// the expert that takes over mid-episode.
    fn committed_mode(&self, _p: Point) -> Option<ExpertMode> {
        None
    }

    /// Goal points, for rendering and the session protocol.
    fn goals(&self) -> Vec<Point>;

    fn step(&self, state: &NavState, action: &[f64]) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if action.len() != 2 {
            return Err(Error::shape(format!(
                "action has {} values, expected 2",
                action.len()
            )));
        }
        if !action.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite action"));
        }
        let d = clip_norm([action[0], action[1]], self.max_step());
        let position = [state.position[0] + d[0], state.position[1] + d[1]];
        let success = self.goal_distance(position) <= self.goal_tolerance();
        let steps = state.steps + 1;
        let done = success || steps >= self.time_limit();
        let next = NavState {
            position,
            steps,
            done,
            success,
        };
        Ok(StepOutcome {
            state: next,
            done,
            success,
        })
    }

    /// Capped displacement from the current position toward `target`.
    fn displacement_toward(&self, state: &NavState, target: Point) -> Point {
        clip_norm(sub(target, state.position), self.max_step())
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn clip_norm(v: Point, cap: f64) -> Point {
    let n = norm(v);
    if n <= cap || n == 0.0 {
        v
    } else {
        [v[0] * cap / n, v[1] * cap / n]
    }
}
