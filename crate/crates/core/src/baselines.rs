//! Comparison methods built from the same diffusion policy class: a
//! bootstrapped ensemble gated on action disagreement, and offline behavior
//! cloning.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dagger::{
    chunk, prepare, write_threshold, Dataset, Learner, LearnerSettings, Method, Plan, Planner, UpdateStats,
};
use crate::diffusion::{save_policy, train, DiffusionPolicy, PairTable, TrainReport};
use crate::gate::QueryGate;
use crate::seed::{self, LabRng};
use crate::{Error, Result};

/// Members of a bootstrapped ensemble. All share one normalizer, so their
/// samples live in the same normalized action space.
#[derive(Debug, Clone)]
pub struct EnsemblePolicy {
    members: Vec<DiffusionPolicy>,
}

/// Member-mean action chunk and disagreement score at one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleScore {
    /// Normalized member-mean sequence, full horizon.
    pub mean: Vec<f64>,
    pub score: f64,
}

impl EnsemblePolicy {
    pub fn new(members: Vec<DiffusionPolicy>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::config("an ensemble needs at least two members"));
        }
        let first = members[0].config();
        if members.iter().any(|m| m.config() != first) {
            return Err(Error::config("ensemble members must share one policy config"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[DiffusionPolicy] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn lead(&self) -> &DiffusionPolicy {
        &self.members[0]
    }

    /// Every member samples once for a normalized observation. The score is
    /// the population standard deviation across members, averaged over the
    /// first `T_a` steps and all action dims.
    pub fn score_normalized(&self, obs: &[f64], rng: &mut LabRng) -> Result<EnsembleScore> {
        let base: u64 = rng.random();
        let samples = self
            .members
            .par_iter()
            .enumerate()
            .map(|(k, m)| m.sample_normalized(obs, 1, &mut seed::rng(base, &[k as u64])))
            .collect::<Result<Vec<_>>>()?;
        let cfg = self.lead().config();
        Ok(disagreement(&samples, cfg.execution_horizon * cfg.action_dim))
    }

    /// Raw-observation variant of [`Self::score_normalized`].
    pub fn score(&self, obs: &[f64], rng: &mut LabRng) -> Result<EnsembleScore> {
        self.score_normalized(&self.lead().normalize_obs(obs), rng)
    }

    /// Disagreement score at every row of a normalized table, one derived
    /// rng per row.
    pub fn reference_scores(&self, normalized: &PairTable, fit_seed: u64) -> Result<Vec<f64>> {
        (0..normalized.rows())
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng(fit_seed, &[i as u64]);
                Ok(self.score_normalized(normalized.obs(i), &mut rng)?.score)
            })
            .collect()
    }
}

/// Member-mean and mean across-member std over the first `lead` values.
pub fn disagreement(samples: &[Vec<f64>], lead: usize) -> EnsembleScore {
    let m = samples.len() as f64;
    let len = samples[0].len();
    let mean: Vec<f64> = (0..len)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / m)
        .collect();
    let lead = lead.min(len);
    let score = (0..lead)
        .map(|j| {
            let var = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / m;
            var.sqrt()
        })
        .sum::<f64>()
        / lead as f64;
    EnsembleScore { mean, score }
}

/// Demonstration indices of a bootstrap resample: `n` draws with
/// replacement.
pub fn bootstrap_indices(n: usize, rng: &mut LabRng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// How members pick their training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Bootstrap,
    /// Every member sees the full dataset.
    Full,
}

/// Ensemble gated by member disagreement, acting on the member mean.
#[derive(Debug, Clone)]
pub struct EnsembleLearner {
    ensemble: EnsemblePolicy,
    gate: Option<QueryGate>,
    settings: LearnerSettings,
    resampling: Resampling,
    steps: u64,
}

impl EnsembleLearner {
    pub fn new(settings: LearnerSettings, members: usize) -> Result<Self> {
        Self::with_resampling(settings, members, Resampling::Bootstrap, false)
    }

    /// `shared_init` gives every member the same initial parameters.
    pub fn with_resampling(
        settings: LearnerSettings,
        members: usize,
        resampling: Resampling,
        shared_init: bool,
    ) -> Result<Self> {
        if members < 2 {
            return Err(Error::config("an ensemble needs at least two members"));
        }
        let policies = (0..members as u64)
            .map(|k| {
                let tag = if shared_init { 0 } else { k };
                let init = seed::derive(settings.seed, &[seed::stream::MEMBER, tag]);
                DiffusionPolicy::new(settings.policy.clone(), init)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ensemble: EnsemblePolicy::new(policies)?,
            gate: None,
            settings,
            resampling,
            steps: 0,
        })
    }

    pub fn ensemble(&self) -> &EnsemblePolicy {
        &self.ensemble
    }

    /// Trains every member; returns the per-member reports.
    pub fn train_members(&mut self, dataset: &Dataset, round: usize) -> Result<Vec<TrainReport>> {
        let s = &self.settings;
        let full = dataset.table()?;
        let schedule = s.schedule_for(round);
        let resampling = self.resampling;
        let reports = self
            .ensemble
            .members
            .par_iter_mut()
            .enumerate()
            .map(|(k, member)| {
                let k = k as u64;
                let picked = match resampling {
                    Resampling::Bootstrap => {
                        let mut rng = seed::rng(s.seed, &[seed::stream::BOOTSTRAP, round as u64, k]);
                        let idx = bootstrap_indices(dataset.len(), &mut rng);
                        Dataset::table_of(idx.iter().map(|&i| &dataset.demos[i]))?
                    }
                    Resampling::Full => full.clone(),
                };
                let init = seed::derive(s.seed, &[seed::stream::MEMBER, k, round as u64]);
                // Normalizer comes from the full dataset so all members agree.
                prepare(member, &full, s.warm_start, init)?;
                let data = member.normalize_table(&picked);
                let mut rng = seed::rng(s.seed, &[seed::stream::TRAIN, round as u64, k]);
                train(member, &data, schedule, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        self.steps += reports.iter().map(|r| r.steps).sum::<u64>();
        Ok(reports)
    }

    /// Fits the variance gate on the training observations.
    pub fn fit_gate(&mut self, dataset: &Dataset) -> Result<&QueryGate> {
        let table = dataset.table()?;
        let normalized = self.ensemble.lead().normalize_table(&table);
        let scores = self
            .ensemble
            .reference_scores(&normalized, self.settings.gate_fit_seed())?;
        self.gate = Some(QueryGate::fit(&scores, self.settings.alpha, self.settings.patience)?);
        Ok(self.gate.as_ref().unwrap())
    }
}

impl Planner for EnsembleLearner {
    fn plan(&self, obs: &[f64], scored: bool, rng: &mut LabRng) -> Result<Plan> {
        let lead = self.ensemble.lead();
        let out = self.ensemble.score(obs, rng)?;
        Ok(Plan {
            actions: chunk(lead, &lead.denormalize_actions(&out.mean)),
            score: scored.then_some(out.score),
        })
    }

    fn prediction_horizon(&self) -> usize {
        self.settings.policy.prediction_horizon
    }
}

impl Learner for EnsembleLearner {
    fn method(&self) -> Method {
        Method::Ensemble
    }

    fn update(&mut self, dataset: &Dataset, round: usize) -> Result<UpdateStats> {
        let started = Instant::now();
        let reports = self.train_members(dataset, round)?;
        let train_secs = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let tau = self.fit_gate(dataset)?.tau();
        let threshold_secs = started.elapsed().as_secs_f64();
        let losses: Vec<f64> = reports.iter().filter_map(TrainReport::final_loss).collect();
        Ok(UpdateStats {
            round,
            demos: dataset.len(),
            pairs: dataset.pair_count(),
            final_train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            tau,
            train_secs,
            threshold_secs,
        })
    }

    fn gate(&self) -> Option<&QueryGate> {
        self.gate.as_ref()
    }

    fn save(&self, dir: &Path, round: usize) -> Result<()> {
        let mut files = Vec::new();
        for (k, m) in self.ensemble.members.iter().enumerate() {
            let name = format!("update_{round:02}.member_{k}.ckpt");
            save_policy(m, &dir.join(&name), self.steps)?;
            files.push(name);
        }
        let manifest = EnsembleManifest {
            members: files,
            seed: self.settings.seed,
        };
        fs::write(
            dir.join(format!("update_{round:02}.ensemble.json")),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        if let Some(g) = &self.gate {
            write_threshold(g, self.settings.gate_fit_seed(), &dir.join(format!("update_{round:02}.threshold.json")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<String>,
    pub seed: u64,
}

/// Behavior cloning on a fixed dataset with the staged schedule a DAgger
/// run of `rounds` updates would apply.
pub fn bc_train(dataset: &Dataset, settings: &LearnerSettings, rounds: usize) -> Result<(DiffusionPolicy, Vec<TrainReport>)> {
    let table = dataset.table()?;
    let init = seed::derive(settings.seed, &[seed::stream::INIT]);
    let mut policy = DiffusionPolicy::new(settings.policy.clone(), init)?;
    let data = prepare(&mut policy, &table, true, init)?;
    let mut reports = Vec::with_capacity(rounds.max(1));
    for round in 0..rounds.max(1) {
        let mut rng = seed::rng(settings.seed, &[seed::stream::TRAIN, round as u64]);
        reports.push(train(&mut policy, &data, settings.schedule_for(round), &mut rng)?);
    }
    Ok((policy, reports))
}

/// Plain policy wrapper: acts without computing any score.
#[derive(Debug, Clone)]
pub struct PolicyPlanner<'a> {
    pub policy: &'a DiffusionPolicy,
    /// Monte-Carlo batch used when a score is requested.
    pub loss_batch: usize,
}

impl Planner for PolicyPlanner<'_> {
    fn plan(&self, obs: &[f64], scored: bool, rng: &mut LabRng) -> Result<Plan> {
        crate::dagger::plan_with_loss(self.policy, obs, scored, self.loss_batch, rng)
    }

    fn prediction_horizon(&self) -> usize {
        self.policy.config().prediction_horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_opposite_members_score_c() {
        let c = 0.3;
        let out = disagreement(&[vec![c; 8], vec![-c; 8]], 4);
        assert!((out.score - c).abs() < 1e-15);
        assert!(out.mean.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn identical_members_score_zero() {
        let s = vec![0.1, -0.4, 0.7, 0.2];
        let out = disagreement(&[s.clone(), s.clone(), s.clone()], 4);
        assert!(out.score.abs() < 1e-15);
    }

    #[test]
    fn score_only_counts_the_lead() {
        let out = disagreement(&[vec![0.0, 0.0, 1.0, 1.0], vec![0.0, 0.0, -1.0, -1.0]], 2);
        assert!(out.score.abs() < 1e-15);
    }

    #[test]
    fn bootstrap_draws_in_range() {
        let mut rng = seed::rng(1, &[]);
        let idx = bootstrap_indices(10, &mut rng);
        assert_eq!(idx.len(), 10);
        assert!(idx.iter().all(|&i| i < 10));
    }
}
