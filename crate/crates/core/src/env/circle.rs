//! Circular navigation: start at the bottom of a circle, reach the top by
//! going either clockwise or counter-clockwise.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_norm, norm, sub, ExpertMode, NavState, Point, Probe, RegionLabel, Task};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavConfig {
    pub radius: f64,
    /// Degrees, counter-clockwise from +x.
    pub start_angle_deg: f64,
    pub goal_angle_deg: f64,
    pub max_step: f64,
    pub goal_tolerance: f64,
    /// Distance from the circle beyond which a point is out of distribution.
    pub ood_margin: f64,
    /// Arc length around the start treated as the divergence region.
    pub divergence_window: f64,
    pub time_limit: usize,
    /// Half-width of the tangential reset jitter, as a fraction of the radius.
    pub reset_jitter: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            start_angle_deg: -90.0,
            goal_angle_deg: 90.0,
            max_step: 0.05,
            goal_tolerance: 0.05,
            ood_margin: 0.15,
            divergence_window: 0.35,
            time_limit: 150,
            reset_jitter: 0.02,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self.radius;
        if !(r > 0.0) {
            return Err(Error::config("radius must be positive"));
        }
        if !(self.max_step > 0.0 && self.max_step < r) {
            return Err(Error::config("max_step must lie in (0, radius)"));
        }
        if !(self.goal_tolerance > 0.0) || !(self.ood_margin > 0.0) {
            return Err(Error::config("goal_tolerance and ood_margin must be positive"));
        }
        if !(self.divergence_window > 0.0) || self.reset_jitter < 0.0 {
            return Err(Error::config("divergence_window must be positive, reset_jitter >= 0"));
        }
        let longest_arc = r * PI.max(TAU - self.ccw_span());
        let min_steps = (longest_arc / self.max_step).ceil() as usize;
        if self.time_limit < min_steps {
            return Err(Error::config(format!(
                "time_limit {} is below the {min_steps} steps an expert needs",
                self.time_limit
            )));
        }
        Ok(())
    }

    fn start_angle(&self) -> f64 {
        self.start_angle_deg.to_radians()
    }

    fn ccw_span(&self) -> f64 {
        (self.goal_angle_deg - self.start_angle_deg).to_radians().rem_euclid(TAU)
    }

    pub fn start_point(&self) -> Point {
        self.point_at(self.start_angle())
    }

    pub fn goal_point(&self) -> Point {
        self.point_at(self.goal_angle_deg.to_radians())
    }

    fn point_at(&self, angle: f64) -> Point {
        [self.radius * angle.cos(), self.radius * angle.sin()]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct CircleNav {
    config: NavConfig,
}


/// Wraps an angle into `(-π, π]`.
fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

impl CircleNav {
    pub fn new(config: NavConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    /// Angular span and direction (+1 for counter-clockwise) of a mode's arc.
    fn arc(&self, mode: ExpertMode) -> (f64, f64) {
        let ccw = self.config.ccw_span();
        match mode {
            ExpertMode::CounterClockwise => (ccw, 1.0),
            ExpertMode::Clockwise => (TAU - ccw, -1.0),
        }
    }

    /// Progress angle along a mode's arc of the arc point nearest to `p`.
    fn arc_progress(&self, mode: ExpertMode, p: Point) -> f64 {
        let (span, dir) = self.arc(mode);
        let phi = p[1].atan2(p[0]);
        let u = (dir * (phi - self.config.start_angle())).rem_euclid(TAU);
        if u <= span {
            u
        } else if u - span < TAU - u {
            span
        } else {
            0.0
        }
    }

    fn arc_point(&self, mode: ExpertMode, progress: f64) -> Point {
        let (_, dir) = self.arc(mode);
        self.config
            .point_at(self.config.start_angle() + dir * progress)
    }

    /// Nearest point of a mode's arc and the distance to it.
    pub fn nearest_on_arc(&self, mode: ExpertMode, p: Point) -> (Point, f64) {
        let q = self.arc_point(mode, self.arc_progress(mode, p));
        (q, norm(sub(q, p)))
    }

    /// Absolute distance from the circle.
    pub fn circle_distance(&self, p: Point) -> f64 {
        (norm(p) - self.config.radius).abs()
    }

    /// Arc length from the start point to the angular position of `p`.
    pub fn arc_from_start(&self, p: Point) -> f64 {
        let phi = p[1].atan2(p[0]);
        self.config.radius * wrap_pi(phi - self.config.start_angle()).abs()
    }
}

impl Task for CircleNav {
    fn name(&self) -> &'static str {
        "circle"
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
        let angle = self.config.start_angle() + offset / self.config.radius;
        NavState::at(self.config.point_at(angle))
    }

    fn reset(&self, seed: u64) -> NavState {
        let mut rng = seed::rng(seed, &[seed::stream::RESET]);
        let half = self.config.reset_jitter * self.config.radius;
        let offset = if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        };
        self.reset_at(offset)
    }

    fn goal_distance(&self, p: Point) -> f64 {
        norm(sub(p, self.config.goal_point()))
    }

    fn expert_action(&self, mode: ExpertMode, state: &NavState) -> Point {
        let p = state.position;
        let d_max = self.config.max_step;
        let goal = self.config.goal_point();
        if norm(sub(goal, p)) < 1e-12 {
            return [0.0, 0.0];
        }
        let progress = self.arc_progress(mode, p);
        let nearest = self.arc_point(mode, progress);
        if norm(sub(nearest, p)) > 0.5 * self.config.ood_margin {
            return clip_norm(sub(nearest, p), d_max);
        }
        let (span, _) = self.arc(mode);
        // Angle subtending a chord of exactly d_max.
        let delta = 2.0 * (d_max / (2.0 * self.config.radius)).asin();
        let target = if progress + delta >= span {
            goal
        } else {
            self.arc_point(mode, progress + delta)
        };
        clip_norm(sub(target, p), d_max)
    }

    fn label_region(&self, p: Point) -> RegionLabel {
        if self.circle_distance(p) > self.config.ood_margin {
            RegionLabel::OutOfDistribution
        } else if self.arc_from_start(p) <= self.config.divergence_window {
            RegionLabel::IdMultimodal
        } else {
            RegionLabel::IdUnimodal
        }
    }

    fn probe_set(&self, per_region: usize, seed: u64) -> Vec<Probe> {
        let c = &self.config;
        let mut rng = seed::rng(seed, &[seed::stream::PROBE]);
        let jitter = 0.999 * c.ood_margin / 4.0;
        let max_arc = PI * c.radius;
        let start = c.start_angle();
        let mut probes = Vec::with_capacity(3 * per_region);
        for label in RegionLabel::ALL {
            let mut made = 0;
            while made < per_region {
                let p = match label {
                    RegionLabel::IdUnimodal | RegionLabel::IdMultimodal => {
                        let s = if label == RegionLabel::IdMultimodal {
                            rng.random_range(-c.divergence_window..=c.divergence_window)
                        } else {
                            let mag = rng.random_range(c.divergence_window..max_arc);
                            if rng.random_bool(0.5) {
                                mag
                            } else {
                                -mag
                            }
                        };
                        let rad = c.radius + rng.random_range(-jitter..=jitter);
                        let a = start + s / c.radius;
                        [rad * a.cos(), rad * a.sin()]
                    }
                    RegionLabel::OutOfDistribution => {
                        let a = rng.random_range(0.0..TAU);
                        let d = rng.random_range(2.0 * c.ood_margin..=4.0 * c.ood_margin);
                        let rad = if rng.random_bool(0.5) && c.radius > d {
                            c.radius - d
                        } else {
                            c.radius + d
                        };
                        [rad * a.cos(), rad * a.sin()]
                    }
                };
                // Rejection keeps labels consistent at region boundaries.
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
        if self.arc_from_start(p) <= self.config.divergence_window {
            return None;
        }
        // Signed angle from the start: positive is the counter-clockwise side.
        let phi = p[1].atan2(p[0]);
        let rel = wrap_pi(phi - self.config.start_angle());
        Some(if rel > 0.0 {
            ExpertMode::CounterClockwise
        } else {
            ExpertMode::Clockwise
        })
    }

    fn goals(&self) -> Vec<Point> {
        vec![self.config.goal_point()]
    }
}
