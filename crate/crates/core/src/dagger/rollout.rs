use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Demonstration, Provenance};
use crate::env::{clip_norm, ExpertMode, NavState, Point, Task};
use crate::gate::{GateDecision, QueryGate};
use crate::seed::{self, LabRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Robot,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The robot reached the goal on its own.
    RobotSuccess,
    /// The expert took over and reached the goal.
    ExpertSuccess,
    Failure,
    /// The expert source went away mid-episode; nothing was recorded.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum ExpertSchedule {
    Single(ExpertMode),
    #[default]
    Alternating,
}


impl ExpertSchedule {
    pub fn mode_for(self, index: u64) -> ExpertMode {
        match self {
            ExpertSchedule::Single(m) => m,
            ExpertSchedule::Alternating if index.is_multiple_of(2) => ExpertMode::Clockwise,
            ExpertSchedule::Alternating => ExpertMode::CounterClockwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    pub controller: Controller,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub episode: u64,
    pub step: usize,
    pub position: Point,
    pub action: Point,
    pub done: bool,
    pub success: bool,
    pub controller: Controller,
}

/// What happened in one DAgger episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub reset_seed: u64,
    /// Episode step at which the gate fired.
    pub query_step: Option<usize>,
    pub timeout: bool,
    pub timeline: Vec<ControlSegment>,
    pub outcome: Outcome,
    /// Uncertainty score of every robot inference.
    pub scores: Vec<f64>,
    pub expert_mode: Option<ExpertMode>,
    pub new_pairs: usize,
    pub trajectory: Vec<TrajectoryStep>,
}

impl EpisodeRecord {
    pub fn intervened(&self) -> bool {
        self.new_pairs > 0
    }
}

/// A planned action chunk in raw units, plus its uncertainty score when
/// one was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<Point>,
    pub score: Option<f64>,
}

/// Anything that can drive the robot.
pub trait Planner: Sync {
    fn plan(&self, obs: &[f64], scored: bool, rng: &mut LabRng) -> Result<Plan>;

    /// Length of the action windows stored for this learner.
    fn prediction_horizon(&self) -> usize;
}

pub enum ExpertStep {
    Act(Point),
    /// The expert is gone; the episode is dropped.
    Abort(String),
}

/// Source of expert actions once control passes to the expert.
pub trait ExpertSource {
    fn act(&mut self, task: &dyn Task, mode: ExpertMode, state: &NavState) -> Result<ExpertStep>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedExpert;

impl ExpertSource for ScriptedExpert {
    fn act(&mut self, task: &dyn Task, mode: ExpertMode, state: &NavState) -> Result<ExpertStep> {
        Ok(ExpertStep::Act(task.expert_action(mode, state)))
    }
}

/// Hooks for live monitoring. All methods default to no-ops.
pub trait RolloutObserver {
    fn episode_started(&mut self, _episode: u64, _state: &NavState) {}
    fn inference(&mut self, _episode: u64, _step: usize, _decision: &GateDecision, _tau: f64) {}
    fn stepped(&mut self, _step: &TrajectoryStep) {}
    fn control_changed(&mut self, _episode: u64, _step: usize, _controller: Controller, _timeout: bool) {}
    fn episode_finished(&mut self, _record: &EpisodeRecord) {}
}

impl RolloutObserver for () {}

struct ExpertSegment {
    observations: Vec<Vec<f64>>,
    actions: Vec<Point>,
    state: NavState,
    aborted: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn run_expert_segment(
    task: &dyn Task,
    expert: &mut dyn ExpertSource,
    mode: ExpertMode,
    mut state: NavState,
    episode: u64,
    first_step: usize,
    trajectory: &mut Vec<TrajectoryStep>,
    observer: &mut dyn RolloutObserver,
) -> Result<ExpertSegment> {
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    while !state.done {
        let a = match expert.act(task, mode, &state)? {
            ExpertStep::Act(a) => a,
            ExpertStep::Abort(why) => {
                return Ok(ExpertSegment {
                    observations,
                    actions,
                    state,
                    aborted: Some(why),
                })
            }
        };
        // Store what the environment executes, so human and scripted
        // actions share the clipped semantics.
        let a = clip_norm(a, task.max_step());
        observations.push(state.observation());
        let out = task.step(&state, &a)?;
        let rec = TrajectoryStep {
            episode,
            step: first_step + actions.len(),
            position: state.position,
            action: a,
            done: out.done,
            success: out.success,
            controller: Controller::Expert,
        };
        actions.push(a);
        observer.stepped(&rec);
        trajectory.push(rec);
        state = out.state;
    }
    Ok(ExpertSegment {
        observations,
        actions,
        state,
        aborted: None,
    })
}

/// Records one full scripted-expert episode from a seeded reset.
pub fn expert_episode(
    task: &dyn Task,
    mode: ExpertMode,
    episode: u64,
    reset_seed: u64,
    horizon: usize,
) -> Result<Demonstration> {
    let state = task.reset(reset_seed);
    let mut trajectory = Vec::new();
    let seg = run_expert_segment(task, &mut ScriptedExpert, mode, state, episode, 0, &mut trajectory, &mut ())?;
    if !seg.state.success {
        return Err(Error::Expert(format!(
            "{mode:?} expert failed episode {episode} (reset seed {reset_seed}) at {:?}",
            seg.state.position
        )));
    }
    Demonstration::from_segment(
        episode,
        Provenance::Initial,
        Some(mode),
        &seg.observations,
        &seg.actions,
        horizon,
    )
}

/// `count` scripted demonstrations with episode ids `0..count`.
pub fn collect_initial(
    task: &dyn Task,
    schedule: ExpertSchedule,
    count: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::config("need at least one initial demonstration"));
    }
    let mut ds = Dataset::new();
    for i in 0..count as u64 {
        let reset_seed = seed::derive(master_seed, &[seed::stream::DEMOS, i]);
        ds.push(expert_episode(task, schedule.mode_for(i), i, reset_seed, horizon)?);
    }
    Ok(ds)
}

/// Identifies one DAgger episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSpec {
    pub episode: u64,
    pub reset_seed: u64,
    /// Expert mode used when the position does not commit to one.
    pub fallback_mode: ExpertMode,
}

/// Robot-gated rollout: the robot acts in chunks until the gate fires, it
/// succeeds, or it runs out of time. A query or a timeout hands control to
/// the expert for the rest of the episode, and the expert segment becomes a
/// new demonstration.
#[allow(clippy::too_many_arguments)]
pub fn rollout_with_gate(
    task: &dyn Task,
    planner: &dyn Planner,
    gate: &mut QueryGate,
    expert: &mut dyn ExpertSource,
    observer: &mut dyn RolloutObserver,
    spec: EpisodeSpec,
    rng: &mut LabRng,
) -> Result<(EpisodeRecord, Option<Demonstration>)> {
    let mut state = task.reset(spec.reset_seed);
    gate.reset();
    observer.episode_started(spec.episode, &state);
    let mut trajectory = Vec::new();
    let mut scores = Vec::new();
    let mut query_step = None;
    let mut robot_steps = 0;
    'robot: while !state.done {
        let plan = planner.plan(&state.observation(), true, rng)?;
        let score = plan.score.unwrap_or(f64::NAN);
        scores.push(score);
        let decision = gate.observe(score);
        observer.inference(spec.episode, robot_steps, &decision, gate.tau());
        if decision.is_query() {
            query_step = Some(robot_steps);
            break;
        }
        for a in &plan.actions {
            let out = task.step(&state, a)?;
            let rec = TrajectoryStep {
                episode: spec.episode,
                step: robot_steps,
                position: state.position,
                action: *a,
                done: out.done,
                success: out.success,
                controller: Controller::Robot,
            };
            observer.stepped(&rec);
            trajectory.push(rec);
            robot_steps += 1;
            state = out.state;
            if state.done {
                break 'robot;
            }
        }
    }
    let mut timeline = vec![ControlSegment {
        controller: Controller::Robot,
        steps: robot_steps,
    }];
    let timeout = query_step.is_none() && !state.success;
    let mut record = EpisodeRecord {
        episode: spec.episode,
        reset_seed: spec.reset_seed,
        query_step,
        timeout,
        timeline: Vec::new(),
        outcome: if state.success {
            Outcome::RobotSuccess
        } else {
            Outcome::Failure
        },
        scores,
        expert_mode: None,
        new_pairs: 0,
        trajectory: Vec::new(),
    };
    let mut demo = None;
    if query_step.is_some() || timeout {
        let mode = task
            .committed_mode(state.position)
            .unwrap_or(spec.fallback_mode);
        record.expert_mode = Some(mode);
        observer.control_changed(spec.episode, robot_steps, Controller::Expert, timeout);
        state.begin_segment();
        let seg = run_expert_segment(
            task,
            expert,
            mode,
            state,
            spec.episode,
            robot_steps,
            &mut trajectory,
            observer,
        )?;
        timeline.push(ControlSegment {
            controller: Controller::Expert,
            steps: seg.actions.len(),
        });
        if let Some(why) = seg.aborted {
            log::warn!("episode {} aborted during expert control: {why}", spec.episode);
            record.outcome = Outcome::Aborted;
        } else {
            if !seg.state.success {
                log::warn!("expert did not finish episode {}", spec.episode);
            }
            record.outcome = if seg.state.success {
                Outcome::ExpertSuccess
            } else {
                Outcome::Failure
            };
            if !seg.actions.is_empty() {
                let d = Demonstration::from_segment(
                    spec.episode,
                    Provenance::Intervention,
                    Some(mode),
                    &seg.observations,
                    &seg.actions,
                    planner.prediction_horizon(),
                )?;
                record.new_pairs = d.pairs.len();
                demo = Some(d);
            }
        }
        observer.control_changed(spec.episode, robot_steps + seg.actions.len(), Controller::Robot, false);
    }
    record.timeline = timeline;
    record.trajectory = trajectory;
    observer.episode_finished(&record);
    Ok((record, demo))
}

/// Result of an intervention-free rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnassistedOutcome {
    pub success: bool,
    pub steps: usize,
    /// Whether a shadow gate would have queried at some inference.
    pub would_query: bool,
    pub scores: Vec<f64>,
}

/// Rolls the robot out with no expert. When `gate` is given it runs in
/// shadow mode: it sees every score but never changes the rollout.
pub fn rollout_unassisted(
    task: &dyn Task,
    planner: &dyn Planner,
    mut gate: Option<&mut QueryGate>,
    reset_seed: u64,
    rng: &mut LabRng,
) -> Result<UnassistedOutcome> {
    let mut state = task.reset(reset_seed);
    let scored = gate.is_some();
    if let Some(g) = gate.as_deref_mut() {
        g.reset();
    }
    let mut would_query = false;
    let mut scores = Vec::new();
    'episode: while !state.done {
        let plan = planner.plan(&state.observation(), scored, rng)?;
        if let Some(g) = gate.as_deref_mut() {
            let s = plan.score.unwrap_or(f64::NAN);
            scores.push(s);
            would_query |= g.observe(s).is_query();
        }
        for a in &plan.actions {
            state = task.step(&state, a)?.state;
            if state.done {
                break 'episode;
            }
        }
    }
    Ok(UnassistedOutcome {
        success: state.success,
        steps: state.steps,
        would_query,
        scores,
    })
}
