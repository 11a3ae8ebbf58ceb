//! Two-goal reach: one start, two goals, one straight-line expert per goal.
//! Multimodality is in the outcome rather than the route.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_norm, norm, sub, ExpertMode, NavState, Point, Probe, RegionLabel, Task};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoGoalConfig {
    pub start: Point,
    /// Goal of the clockwise expert.
    pub left_goal: Point,
    /// Goal of the counter-clockwise expert.
    pub right_goal: Point,
    pub max_step: f64,
    pub goal_tolerance: f64,
    pub ood_margin: f64,
    /// Distance from the start treated as the divergence region.
    pub divergence_window: f64,
    pub time_limit: usize,
    /// Half-width of the horizontal reset jitter (length units).
    pub reset_jitter: f64,
}

impl Default for TwoGoalConfig {
    fn default() -> Self {
        Self {
            start: [0.0, -0.6],
            left_goal: [-0.6, 0.6],
            right_goal: [0.6, 0.6],
            max_step: 0.05,
            goal_tolerance: 0.05,
            ood_margin: 0.15,
            divergence_window: 0.35,
            time_limit: 150,
            reset_jitter: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwoGoalReach {
    config: TwoGoalConfig,
}

impl TwoGoalReach {
    pub fn new(config: TwoGoalConfig) -> Result<Self> {
        let c = &config;
        if !(c.max_step > 0.0) || !(c.goal_tolerance > 0.0) || !(c.ood_margin > 0.0) {
            return Err(Error::config("max_step, goal_tolerance and ood_margin must be positive"));
        }
        if !(c.divergence_window > 0.0) || c.reset_jitter < 0.0 {
            return Err(Error::config("divergence_window must be positive, reset_jitter >= 0"));
        }
        let longest = norm(sub(c.left_goal, c.start)).max(norm(sub(c.right_goal, c.start)));
        let min_steps = (longest / c.max_step).ceil() as usize + 1;
        if c.time_limit < min_steps {
            return Err(Error::config(format!(
                "time_limit {} is below the {min_steps} steps an expert needs",
                c.time_limit
            )));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &TwoGoalConfig {
        &self.config
    }

    pub fn goal_of(&self, mode: ExpertMode) -> Point {
        match mode {
            ExpertMode::Clockwise => self.config.left_goal,
            ExpertMode::CounterClockwise => self.config.right_goal,
        }
    }

    /// Parameter in `[0, 1]` and distance of the projection of `p` onto the
    /// mode's start-goal segment.
    fn project(&self, mode: ExpertMode, p: Point) -> (f64, f64) {
        let a = self.config.start;
        let d = sub(self.goal_of(mode), a);
        let len2 = d[0] * d[0] + d[1] * d[1];
        let rel = sub(p, a);
        let s = ((rel[0] * d[0] + rel[1] * d[1]) / len2).clamp(0.0, 1.0);
        let q = [a[0] + s * d[0], a[1] + s * d[1]];
        (s, norm(sub(p, q)))
    }

    fn segment_point(&self, mode: ExpertMode, s: f64) -> Point {
        let a = self.config.start;
        let d = sub(self.goal_of(mode), a);
        [a[0] + s * d[0], a[1] + s * d[1]]
    }

    /// Distance to the nearer expert path.
    pub fn path_distance(&self, p: Point) -> f64 {
        let (_, l) = self.project(ExpertMode::Clockwise, p);
        let (_, r) = self.project(ExpertMode::CounterClockwise, p);
        l.min(r)
    }
}

impl Task for TwoGoalReach {
    fn name(&self) -> &'static str {
        "two_goal"
    }

    fn time_limit(&self) -> usize {
        self.config.time_limit
    }

    fn max_step(&self) -> f64 {
        self.config.max_step
    }

    fn goal_tolerance(&self) -> f64 {
        self.config.goal_tolerance
    }

    fn reset_at(&self, offset: f64) -> NavState {
        NavState::at([self.config.start[0] + offset, self.config.start[1]])
    }

    fn reset(&self, seed: u64) -> NavState {
        let mut rng = seed::rng(seed, &[seed::stream::RESET]);
        let half = self.config.reset_jitter;
        let offset = if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        };
        self.reset_at(offset)
    }

    fn goal_distance(&self, p: Point) -> f64 {
        norm(sub(p, self.config.left_goal)).min(norm(sub(p, self.config.right_goal)))
    }

    fn expert_action(&self, mode: ExpertMode, state: &NavState) -> Point {
        let p = state.position;
        let goal = self.goal_of(mode);
        if norm(sub(goal, p)) < 1e-12 {
            return [0.0, 0.0];
        }
        let (s, dist) = self.project(mode, p);
        let nearest = self.segment_point(mode, s);
        if dist > 0.5 * self.config.ood_margin {
            return clip_norm(sub(nearest, p), self.config.max_step);
        }
        let len = norm(sub(goal, self.config.start));
        let ahead = (s + self.config.max_step / len).min(1.0);
        clip_norm(sub(self.segment_point(mode, ahead), p), self.config.max_step)
    }

    fn label_region(&self, p: Point) -> RegionLabel {
        if self.path_distance(p) > self.config.ood_margin {
            RegionLabel::OutOfDistribution
        } else if norm(sub(p, self.config.start)) <= self.config.divergence_window {
            RegionLabel::IdMultimodal
        } else {
            RegionLabel::IdUnimodal
        }
    }

    fn probe_set(&self, per_region: usize, seed: u64) -> Vec<Probe> {
        let c = &self.config;
        let mut rng = seed::rng(seed, &[seed::stream::PROBE]);
        let jitter = 0.999 * c.ood_margin / 4.0;
        let modes = [ExpertMode::Clockwise, ExpertMode::CounterClockwise];
        let mut probes = Vec::with_capacity(3 * per_region);
        for label in RegionLabel::ALL {
            let mut made = 0;
            while made < per_region {
                let p = match label {
                    RegionLabel::OutOfDistribution => {
                        let pad = 4.0 * c.ood_margin;
                        let xs = [c.start[0], c.left_goal[0], c.right_goal[0]];
                        let ys = [c.start[1], c.left_goal[1], c.right_goal[1]];
                        let lo = |v: [f64; 3]| v.iter().copied().fold(f64::INFINITY, f64::min) - pad;
                        let hi = |v: [f64; 3]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
                        let p = [
                            rng.random_range(lo(xs)..hi(xs)),
                            rng.random_range(lo(ys)..hi(ys)),
                        ];
                        let d = self.path_distance(p);
                        if d < 2.0 * c.ood_margin || d > 4.0 * c.ood_margin {
                            continue;
                        }
                        p
                    }
                    _ => {
                        let mode = modes[rng.random_range(0..2)];
                        let q = self.segment_point(mode, rng.random_range(0.0..=1.0));
                        let a = rng.random_range(0.0..std::f64::consts::TAU);
                        let r = rng.random_range(0.0..=jitter);
                        [q[0] + r * a.cos(), q[1] + r * a.sin()]
                    }
                };
                if self.label_region(p) == label {
                    probes.push(Probe {
                        observation: p.to_vec(),
                        label,
                    });
                    made += 1;
                }
            }
        }
        probes
    }

    fn committed_mode(&self, p: Point) -> Option<ExpertMode> {
        if norm(sub(p, self.config.start)) <= self.config.divergence_window {
            return None;
        }
        let (_, l) = self.project(ExpertMode::Clockwise, p);
        let (_, r) = self.project(ExpertMode::CounterClockwise, p);
        Some(if l <= r {
            ExpertMode::Clockwise
        } else {
            ExpertMode::CounterClockwise
        })
    }

    fn goals(&self) -> Vec<Point> {
        vec![self.config.left_goal, self.config.right_goal]
    }
}
