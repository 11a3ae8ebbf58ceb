use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::rollout::{Plan, Planner};
use crate::diffusion::{save_policy, train, DiffusionPolicy, PairTable, PolicyConfig, TrainSchedule};
use crate::gate::QueryGate;
use crate::nn::DenoiserNet;
use crate::seed::{self, LabRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Gate on the expected diffusion loss of the planned action.
    Diff,
    /// Gate on action variance across a bootstrapped ensemble.
    Ensemble,
    /// Offline behavior cloning, no gate.
    Bc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Diff => "diff",
            Method::Ensemble => "ensemble",
            Method::Bc => "bc",
        }
    }
}

/// Training and gating knobs shared by all learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSettings {
    pub policy: PolicyConfig,
    pub train: TrainSchedule,
    /// Learning rate multiplier applied once per update round.
    pub lr_decay: f64,
    pub warm_start: bool,
    pub alpha: f64,
    pub patience: usize,
    /// Monte-Carlo batch of the expected-loss estimate.
    pub loss_batch: usize,
    pub seed: u64,
}

impl LearnerSettings {
    pub fn schedule_for(&self, round: usize) -> TrainSchedule {
        TrainSchedule {
            lr: self.train.lr * self.lr_decay.powi(round as i32),
            ..self.train
        }
    }

    /// Seed of the reference-score pass; fixed across rounds.
    pub fn gate_fit_seed(&self) -> u64 {
        seed::derive(self.seed, &[seed::stream::GATE_FIT])
    }
}

/// Per-round bookkeeping. `train_secs` and `threshold_secs` are wall-clock
/// and therefore not reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub round: usize,
    pub demos: usize,
    pub pairs: usize,
    pub final_train_loss: f64,
    pub tau: f64,
    pub train_secs: f64,
    pub threshold_secs: f64,
}

/// A policy that can be retrained on aggregated data and gated.
pub trait Learner: Planner {
    fn method(&self) -> Method;

    /// Retrains on `dataset` and refits the gate. Round 0 is the fit on the
    /// initial demonstrations.
    fn update(&mut self, dataset: &Dataset, round: usize) -> Result<UpdateStats>;

    fn gate(&self) -> Option<&QueryGate>;

    /// Writes this round's checkpoint(s) and threshold report into `dir`.
    fn save(&self, dir: &Path, round: usize) -> Result<()>;
}

pub(crate) fn write_threshold(gate: &QueryGate, fit_seed: u64, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&gate.report(fit_seed))? + "\n")?;
    Ok(())
}

/// Refits `policy`'s normalizer to `table` and returns the normalized copy.
/// A cold start reinitializes the network first.
pub(crate) fn prepare(
    policy: &mut DiffusionPolicy,
    table: &PairTable,
    warm_start: bool,
    init_seed: u64,
) -> Result<PairTable> {
    if !warm_start {
        *policy.net_mut() = DenoiserNet::init(init_seed, policy.config().denoiser_shape())?;
    }
    policy.fit_normalizer(table)?;
    Ok(policy.normalize_table(table))
}

/// Expected loss of every pair in a normalized table, one derived rng per
/// row so the result does not depend on thread scheduling.
pub fn reference_losses(
    policy: &DiffusionPolicy,
    normalized: &PairTable,
    batch_size: usize,
    fit_seed: u64,
) -> Result<Vec<f64>> {
    (0..normalized.rows())
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(fit_seed, &[i as u64]);
            policy.expected_loss(normalized.obs(i), normalized.actions(i), batch_size, &mut rng)
        })
        .collect()
}

/// Samples one normalized sequence and returns its first `T_a` actions in
/// raw units, scored by the expected loss when asked.
pub fn plan_with_loss(
    policy: &DiffusionPolicy,
    obs: &[f64],
    scored: bool,
    loss_batch: usize,
    rng: &mut LabRng,
) -> Result<Plan> {
    let obs_n = policy.normalize_obs(obs);
    let sample = policy.sample_normalized(&obs_n, 1, rng)?;
    let score = if scored {
        Some(policy.expected_loss(&obs_n, &sample, loss_batch, rng)?)
    } else {
        None
    };
    Ok(Plan {
        actions: chunk(policy, &policy.denormalize_actions(&sample)),
        score,
    })
}

/// First `T_a` two-dimensional actions of a flat raw sequence.
pub(crate) fn chunk(policy: &DiffusionPolicy, raw: &[f64]) -> Vec<[f64; 2]> {
    let cfg = policy.config();
    raw.chunks_exact(cfg.action_dim)
        .take(cfg.execution_horizon)
        .map(|a| [a[0], a[1]])
        .collect()
}

/// Diffusion policy gated by its own expected loss.
#[derive(Debug, Clone)]
pub struct DiffusionLearner {
    policy: DiffusionPolicy,
    gate: Option<QueryGate>,
    settings: LearnerSettings,
    steps: u64,
}

impl DiffusionLearner {
    pub fn new(settings: LearnerSettings) -> Result<Self> {
        if settings.policy.action_dim != 2 {
            return Err(Error::config("navigation tasks need action_dim = 2"));
        }
        let init = seed::derive(settings.seed, &[seed::stream::INIT]);
        Ok(Self {
            policy: DiffusionPolicy::new(settings.policy.clone(), init)?,
            gate: None,
            settings,
            steps: 0,
        })
    }

    pub fn policy(&self) -> &DiffusionPolicy {
        &self.policy
    }

    pub fn settings(&self) -> &LearnerSettings {
        &self.settings
    }

    pub fn into_policy(self) -> DiffusionPolicy {
        self.policy
    }
}

impl Planner for DiffusionLearner {
    fn plan(&self, obs: &[f64], scored: bool, rng: &mut LabRng) -> Result<Plan> {
        plan_with_loss(&self.policy, obs, scored, self.settings.loss_batch, rng)
    }

    fn prediction_horizon(&self) -> usize {
        self.policy.config().prediction_horizon
    }
}

impl Learner for DiffusionLearner {
    fn method(&self) -> Method {
        Method::Diff
    }

    fn update(&mut self, dataset: &Dataset, round: usize) -> Result<UpdateStats> {
        let s = &self.settings;
        let table = dataset.table()?;
        let started = Instant::now();
        let init = seed::derive(s.seed, &[seed::stream::INIT, round as u64]);
        let data = prepare(&mut self.policy, &table, s.warm_start, init)?;
        let mut rng = seed::rng(s.seed, &[seed::stream::TRAIN, round as u64]);
        let report = train(&mut self.policy, &data, s.schedule_for(round), &mut rng)?;
        self.steps += report.steps;
        let train_secs = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let losses = reference_losses(&self.policy, &data, s.loss_batch, s.gate_fit_seed())?;
        let gate = QueryGate::fit(&losses, s.alpha, s.patience)?;
        let threshold_secs = started.elapsed().as_secs_f64();
        let stats = UpdateStats {
            round,
            demos: dataset.len(),
            pairs: table.rows(),
            final_train_loss: report.final_loss().unwrap_or(f64::NAN),
            tau: gate.tau(),
            train_secs,
            threshold_secs,
        };
        self.gate = Some(gate);
        Ok(stats)
    }

    fn gate(&self) -> Option<&QueryGate> {
        self.gate.as_ref()
    }

    fn save(&self, dir: &Path, round: usize) -> Result<()> {
        save_policy(&self.policy, &dir.join(format!("update_{round:02}.ckpt")), self.steps)?;
        if let Some(g) = &self.gate {
            write_threshold(g, self.settings.gate_fit_seed(), &dir.join(format!("update_{round:02}.threshold.json")))?;
        }
        Ok(())
    }
}
