use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::learner::{Learner, LearnerSettings, UpdateStats};
use super::rollout::{
    collect_initial, rollout_with_gate, EpisodeRecord, EpisodeSpec, ExpertSchedule, ExpertSource, Outcome,
    RolloutObserver,
};
use crate::diffusion::{PolicyConfig, TrainSchedule};
use crate::env::Task;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaggerConfig {
    pub initial_demos: usize,
    pub final_demos: usize,
    pub interventions_per_update: usize,
    pub alpha: f64,
    pub patience: usize,
    pub loss_batch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub warm_start: bool,
    pub expert_schedule: ExpertSchedule,
    pub ensemble_members: usize,
    /// Hard cap on robot rollouts, in case the gate never fires.
    pub max_rollouts: usize,
    /// Master seed. Run configurations carry it at the top level.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        Self {
            initial_demos: 20,
            final_demos: 60,
            interventions_per_update: 4,
            alpha: 0.99,
            patience: 2,
            loss_batch: 512,
            epochs: 300,
            batch_size: 256,
            lr: 1e-3,
            lr_decay: 0.5,
            warm_start: true,
            expert_schedule: ExpertSchedule::Alternating,
            ensemble_members: 5,
            max_rollouts: 500,
            seed: 0,
        }
    }
}

impl DaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_demos == 0 || self.initial_demos > self.final_demos {
            return Err(Error::config(format!(
                "need 1 <= initial_demos ({}) <= final_demos ({})",
                self.initial_demos, self.final_demos
            )));
        }
        if self.interventions_per_update == 0 {
            return Err(Error::config("interventions_per_update must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be >= 1"));
        }
        if self.loss_batch == 0 || self.batch_size == 0 {
            return Err(Error::config("loss_batch and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::config("lr and lr_decay must be positive"));
        }
        if self.ensemble_members < 2 {
            return Err(Error::config("ensemble_members must be >= 2"));
        }
        Ok(())
    }

    pub fn train_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
        }
    }

    pub fn learner_settings(&self, policy: &PolicyConfig) -> LearnerSettings {
        LearnerSettings {
            policy: policy.clone(),
            train: self.train_schedule(),
            lr_decay: self.lr_decay,
            warm_start: self.warm_start,
            alpha: self.alpha,
            patience: self.patience,
            loss_batch: self.loss_batch,
            seed: self.seed,
        }
    }
}

/// Reproducible per-update summary; one row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub round: usize,
    pub demos: usize,
    pub pairs: usize,
    /// Robot rollouts since the previous update.
    pub rollouts: usize,
    /// Interventions (queries plus timeouts) since the previous update.
    pub interventions: usize,
    pub queries: usize,
    pub timeouts: usize,
    pub robot_successes: usize,
    pub final_train_loss: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionLog {
    pub episodes: Vec<EpisodeRecord>,
}

impl InterventionLog {
    pub fn interventions(&self) -> usize {
        self.episodes.iter().filter(|e| e.intervened()).count()
    }

    pub fn queries(&self) -> usize {
        self.episodes.iter().filter(|e| e.query_step.is_some()).count()
    }

    pub fn timeouts(&self) -> usize {
        self.episodes.iter().filter(|e| e.timeout).count()
    }
}

#[derive(Debug, Clone)]
pub struct DaggerRun {
    pub dataset: Dataset,
    pub log: InterventionLog,
    pub metrics: Vec<UpdateMetrics>,
    /// Wall-clock per update, kept apart from the reproducible metrics.
    pub updates: Vec<UpdateStats>,
}

fn metrics_row(stats: &UpdateStats, since: &[EpisodeRecord]) -> UpdateMetrics {
    UpdateMetrics {
        round: stats.round,
        demos: stats.demos,
        pairs: stats.pairs,
        rollouts: since.len(),
        interventions: since.iter().filter(|e| e.intervened()).count(),
        queries: since.iter().filter(|e| e.query_step.is_some()).count(),
        timeouts: since.iter().filter(|e| e.timeout).count(),
        robot_successes: since.iter().filter(|e| e.outcome == Outcome::RobotSuccess).count(),
        final_train_loss: stats.final_train_loss,
        tau: stats.tau,
    }
}

/// Interactive loop: fit on initial demonstrations, then alternate gated
/// rollouts and updates. An update follows every `interventions_per_update`
/// new demonstrations, plus one for a final partial batch. Checkpoints go to
/// `checkpoint_dir` when given.
pub fn run_dagger(
    task: &dyn Task,
    learner: &mut dyn Learner,
    config: &DaggerConfig,
    expert: &mut dyn ExpertSource,
    observer: &mut dyn RolloutObserver,
    checkpoint_dir: Option<&Path>,
) -> Result<DaggerRun> {
    config.validate()?;
    let mut dataset = collect_initial(
        task,
        config.expert_schedule,
        config.initial_demos,
        learner.prediction_horizon(),
        config.seed,
    )?;
    let mut log = InterventionLog::default();
    let mut metrics = Vec::new();
    let mut updates = Vec::new();
    let mut round = 0;
    let mut since_update = 0;
    let mut update = |learner: &mut dyn Learner, dataset: &Dataset, round: usize, log: &InterventionLog| -> Result<()> {
        let stats = learner.update(dataset, round)?;
        log::info!(
            "update {round}: {} demos, {} pairs, loss {:.5}, tau {:.5}",
            stats.demos,
            stats.pairs,
            stats.final_train_loss,
            stats.tau
        );
        if let Some(dir) = checkpoint_dir {
            learner.save(dir, round)?;
        }
        metrics.push(metrics_row(&stats, &log.episodes[since_update..]));
        since_update = log.episodes.len();
        updates.push(stats);
        Ok(())
    };
    update(learner, &dataset, round, &log)?;

    let mut pending = 0;
    let mut episode = config.initial_demos as u64;
    let mut rollouts = 0;
    while dataset.len() < config.final_demos && rollouts < config.max_rollouts {
        let mut gate = learner
            .gate()
            .cloned()
            .ok_or_else(|| Error::Usage("learner has no fitted gate".into()))?;
        let spec = EpisodeSpec {
            episode,
            reset_seed: seed::derive(config.seed, &[seed::stream::RESET, episode]),
            fallback_mode: config
                .expert_schedule
                .mode_for((dataset.len() - config.initial_demos) as u64),
        };
        let mut rng = seed::rng(config.seed, &[seed::stream::ROLLOUT, episode]);
        let (record, demo) = rollout_with_gate(task, &*learner, &mut gate, expert, observer, spec, &mut rng)?;
        log.episodes.push(record);
        if let Some(d) = demo {
            dataset.push(d);
            pending += 1;
        }
        episode += 1;
        rollouts += 1;
        if pending == config.interventions_per_update || (pending > 0 && dataset.len() >= config.final_demos) {
            round += 1;
            update(learner, &dataset, round, &log)?;
            pending = 0;
        }
    }
    if pending > 0 {
        round += 1;
        update(learner, &dataset, round, &log)?;
    }
    if dataset.len() < config.final_demos {
        log::warn!(
            "stopped after {} rollouts with {} of {} demonstrations",
            rollouts,
            dataset.len(),
            config.final_demos
        );
    }
    Ok(DaggerRun {
        dataset,
        log,
        metrics,
        updates,
    })
}
