use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confusion::{ConfusionMatrix, Metrics};
use crate::baselines::EnsemblePolicy;
use crate::dagger::{chunk, rollout_unassisted, Plan, Planner, UnassistedOutcome};
use crate::diffusion::DiffusionPolicy;
use crate::env::Task;
use crate::gate::QueryGate;
use crate::seed::{self, LabRng};
use crate::{Error, Result};

/// Uncertainty signal attached to an acting policy.
#[derive(Debug, Clone, Copy)]
pub enum Signal<'a> {
    /// Expected diffusion loss of the sampled chunk, with this Monte-Carlo batch.
    Loss { batch: usize },
    /// Disagreement of an ensemble at the observation.
    Ensemble(&'a EnsemblePolicy),
}

/// Acts with one diffusion policy and scores with a chosen signal. Actions
/// depend only on the rollout rng, so two actors sharing a policy and seed
/// drive identical episodes whatever their signals.
#[derive(Debug, Clone, Copy)]
pub struct ShadowActor<'a> {
    pub policy: &'a DiffusionPolicy,
    pub signal: Signal<'a>,
}

impl Planner for ShadowActor<'_> {
    fn plan(&self, obs: &[f64], scored: bool, rng: &mut LabRng) -> Result<Plan> {
        let score_seed: u64 = rng.random();
        let obs_n = self.policy.normalize_obs(obs);
        let sample = self.policy.sample_normalized(&obs_n, 1, rng)?;
        let score = if scored {
            let mut srng = seed::rng(score_seed, &[]);
            Some(match self.signal {
                Signal::Loss { batch } => self.policy.expected_loss(&obs_n, &sample, batch, &mut srng)?,
                Signal::Ensemble(e) => e.score(obs, &mut srng)?.score,
            })
        } else {
            None
        };
        Ok(Plan {
            actions: chunk(self.policy, &self.policy.denormalize_actions(&sample)),
            score,
        })
    }

    fn prediction_horizon(&self) -> usize {
        self.policy.config().prediction_horizon
    }
}

fn episode_seeds(seed: u64, i: u64) -> (u64, LabRng) {
    (
        seed::derive(seed, &[seed::stream::RESET, i]),
        seed::rng(seed, &[seed::stream::EVAL, i]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEvaluation {
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub episodes: Vec<UnassistedOutcome>,
}

/// Intervention-free rollouts with the gate in shadow mode. An episode is a
/// query if the gate would have fired at any inference; a timeout is a
/// failure.
pub fn evaluate_queries(
    task: &dyn Task,
    planner: &dyn Planner,
    gate: &QueryGate,
    episodes: usize,
    seed: u64,
) -> Result<QueryEvaluation> {
    if episodes == 0 {
        return Err(Error::config("need at least one evaluation episode"));
    }
    let outcomes = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let (reset, mut rng) = episode_seeds(seed, i);
            let mut g = gate.clone();
            rollout_unassisted(task, planner, Some(&mut g), reset, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = ConfusionMatrix::default();
    for o in &outcomes {
        matrix.record(o.would_query, o.success);
    }
    Ok(QueryEvaluation {
        matrix,
        metrics: matrix.metrics(),
        episodes: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub rate: f64,
    pub outcomes: Vec<bool>,
}

/// Fraction of intervention-free rollouts that reach the goal.
pub fn success_rate(task: &dyn Task, planner: &dyn Planner, episodes: usize, seed: u64) -> Result<SuccessReport> {
    if episodes == 0 {
        return Err(Error::config("need at least one evaluation episode"));
    }
    let outcomes = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let (reset, mut rng) = episode_seeds(seed, i);
            Ok(rollout_unassisted(task, planner, None, reset, &mut rng)?.success)
        })
        .collect::<Result<Vec<bool>>>()?;
    let rate = outcomes.iter().filter(|&&s| s).count() as f64 / episodes as f64;
    Ok(SuccessReport { rate, outcomes })
}

/// Scripted expert exposed as a planner, for sanity baselines.
#[derive(Clone, Copy)]
pub struct ExpertPlanner<'a> {
    pub task: &'a dyn Task,
    pub mode: crate::env::ExpertMode,
}

impl Planner for ExpertPlanner<'_> {
    fn plan(&self, obs: &[f64], scored: bool, _rng: &mut LabRng) -> Result<Plan> {
        let state = crate::env::NavState::at([obs[0], obs[1]]);
        Ok(Plan {
            actions: vec![self.task.expert_action(self.mode, &state)],
            score: scored.then_some(0.0),
        })
    }

    fn prediction_horizon(&self) -> usize {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CircleNav, ExpertMode};

    #[test]
    fn expert_policy_with_silent_gate_is_perfect() {
        let task = CircleNav::default();
        let planner = ExpertPlanner {
            task: &task,
            mode: ExpertMode::Clockwise,
        };
        let gate = QueryGate::fit(&[0.0, 1.0], 1.0, 2).unwrap();
        let ev = evaluate_queries(&task, &planner, &gate, 20, 3).unwrap();
        assert_eq!(ev.matrix.tn, 20);
        assert_eq!(ev.metrics.acc, Some(1.0));
        assert_eq!(ev.metrics.tpr, None);
        assert_eq!(success_rate(&task, &planner, 20, 3).unwrap().rate, 1.0);
    }
}
