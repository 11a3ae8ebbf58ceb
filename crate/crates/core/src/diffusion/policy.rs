//! Diffusion policy: denoiser, schedule, prediction target and normalizer.
//!
//! Everything network-facing happens in normalized units, where training
//! data spans `[-1, 1]` per dimension. The `*_raw` methods convert at the
//! boundary.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::schedule::{coefficients, recover_scalar, target_scalar, NoiseSchedule, PredictionTarget};
use crate::nn::{embed_timestep, Activation, DenoiserBatch, DenoiserNet, DenoiserShape};
use crate::{Error, Result};

/// Intermediate samples are clipped to this magnitude in normalized units.
pub const SAMPLE_CLIP: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Actions predicted per inference.
    pub prediction_horizon: usize,
    /// Leading actions executed before re-planning.
    pub execution_horizon: usize,
    pub diffusion_steps: usize,
    pub target: PredictionTarget,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            obs_dim: 2,
            action_dim: 2,
            prediction_horizon: 8,
            execution_horizon: 4,
            diffusion_steps: 16,
            target: PredictionTarget::VObjective,
            hidden: vec![256, 256, 256],
            embed_dim: 16,
            activation: Activation::Mish,
        }
    }
}

impl PolicyConfig {
    pub fn action_len(&self) -> usize {
        self.action_dim * self.prediction_horizon
    }

    pub fn denoiser_shape(&self) -> DenoiserShape {
        DenoiserShape {
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            horizon: self.prediction_horizon,
            embed_dim: self.embed_dim,
            hidden: self.hidden.clone(),
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.execution_horizon == 0 || self.execution_horizon > self.prediction_horizon {
            return Err(Error::config(format!(
                "execution horizon {} must lie in 1..={}",
                self.execution_horizon, self.prediction_horizon
            )));
        }
        if self.diffusion_steps < 2 {
            return Err(Error::config("diffusion_steps must be >= 2"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be >= 1"));
        }
        Ok(())
    }
}

/// Observation/action pairs as two row-major tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTable {
    pub obs_dim: usize,
    pub action_len: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
}

impl PairTable {
    pub fn new(obs_dim: usize, action_len: usize) -> Self {
        Self {
            obs_dim,
            action_len,
            ..Default::default()
        }
    }

    pub fn push(&mut self, obs: &[f64], actions: &[f64]) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(actions.len(), self.action_len);
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(actions);
    }

    pub fn rows(&self) -> usize {
        if self.obs_dim == 0 {
            0
        } else {
            self.obs.len() / self.obs_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn actions(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_len..(i + 1) * self.action_len]
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionPolicy {
    config: PolicyConfig,
    net: DenoiserNet,
    schedule: NoiseSchedule,
    normalizer: Normalizer,
    embeddings: Vec<Vec<f64>>,
}

impl DiffusionPolicy {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = DenoiserNet::init(seed, config.denoiser_shape())?;
        let normalizer = Normalizer::identity(config_dims(&config));
        Self::from_parts(config, net, normalizer)
    }

    pub fn from_parts(config: PolicyConfig, net: DenoiserNet, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        if net.shape() != &config.denoiser_shape() {
            return Err(Error::shape("denoiser shape does not match policy config"));
        }
        if normalizer.obs.dim() != config.obs_dim || normalizer.action.dim() != config.action_dim {
            return Err(Error::shape("normalizer dims do not match policy config"));
        }
        let schedule = NoiseSchedule::squared_cosine(config.diffusion_steps)?;
        let embeddings = (0..config.diffusion_steps)
            .map(|t| embed_timestep(t, config.embed_dim))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            net,
            schedule,
            normalizer,
            embeddings,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn net(&self) -> &DenoiserNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenoiserNet {
        &mut self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.obs.dim() != self.config.obs_dim
            || normalizer.action.dim() != self.config.action_dim
        {
            return Err(Error::shape("normalizer dims do not match policy config"));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn target(&self) -> PredictionTarget {
        self.config.target
    }

    pub fn action_len(&self) -> usize {
        self.config.action_len()
    }

    pub(crate) fn embedding(&self, t: usize) -> &[f64] {
        &self.embeddings[t]
    }

    pub fn normalize_obs(&self, obs: &[f64]) -> Vec<f64> {
        self.normalizer.obs.normalize(obs)
    }

    pub fn normalize_actions(&self, actions: &[f64]) -> Vec<f64> {
        self.normalizer.action.normalize(actions)
    }

    pub fn denormalize_actions(&self, actions: &[f64]) -> Vec<f64> {
        self.normalizer.action.denormalize(actions)
    }

    /// Refits the normalizer to `table` (raw units).
    pub fn fit_normalizer(&mut self, table: &PairTable) -> Result<()> {
        let n = Normalizer::fit(table, self.config.obs_dim, self.config.action_dim)?;
        self.set_normalizer(n)
    }

    /// Maps a raw table into normalized units.
    pub fn normalize_table(&self, table: &PairTable) -> PairTable {
        PairTable {
            obs_dim: table.obs_dim,
            action_len: table.action_len,
            obs: self.normalizer.obs.normalize(&table.obs),
            actions: self.normalizer.action.normalize(&table.actions),
        }
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.config.obs_dim {
            return Err(Error::shape(format!(
                "observation has {} values, policy expects {}",
                obs.len(),
                self.config.obs_dim
            )));
        }
        Ok(())
    }

    fn check_actions(&self, actions: &[f64]) -> Result<()> {
        if actions.len() != self.action_len() {
            return Err(Error::shape(format!(
                "action sequence has {} values, policy expects {}",
                actions.len(),
                self.action_len()
            )));
        }
        Ok(())
    }

    /// Squared error between the prediction target and the network output,
    /// averaged over output dims. Inputs are normalized.
    pub fn training_loss(&self, obs: &[f64], actions: &[f64], eps: &[f64], t: usize) -> Result<f64> {
        self.check_obs(obs)?;
        self.check_actions(actions)?;
        self.check_actions(eps)?;
        self.schedule.check_step(t)?;
        let mut batch = DenoiserBatch::new(self.net.shape());
        let (noisy, target) = self.corrupt(actions, eps, t);
        batch.push(obs, &noisy, self.embedding(t), Some(&target))?;
        let pred = self.net.predict(&batch)?;
        Ok(mean_squared(&pred, batch.targets()))
    }

    fn corrupt(&self, actions: &[f64], eps: &[f64], t: usize) -> (Vec<f64>, Vec<f64>) {
        let (s, n) = coefficients(&self.schedule, t);
        let kind = self.config.target;
        let noisy = actions.iter().zip(eps).map(|(a, e)| s * a + n * e).collect();
        let target = actions
            .iter()
            .zip(eps)
            .map(|(&a, &e)| target_scalar(kind, a, e, s, n))
            .collect();
        (noisy, target)
    }

    /// Appends one randomly corrupted training row for `(obs, actions)`.
    pub(crate) fn push_random_row<R: Rng + ?Sized>(
        &self,
        batch: &mut DenoiserBatch,
        obs: &[f64],
        actions: &[f64],
        rng: &mut R,
        scratch: &mut (Vec<f64>, Vec<f64>),
    ) -> Result<()> {
        let t = rng.random_range(0..self.config.diffusion_steps);
        let (s, n) = coefficients(&self.schedule, t);
        let kind = self.config.target;
        let (noisy, target) = scratch;
        noisy.clear();
        target.clear();
        for &a in actions {
            let e: f64 = rng.sample(StandardNormal);
            noisy.push(s * a + n * e);
            target.push(target_scalar(kind, a, e, s, n));
        }
        batch.push(obs, noisy, self.embedding(t), Some(target))
    }

    /// Monte-Carlo estimate of the expected training loss over
    /// `ε ~ N(0, I)` and `t ~ U{0..T_d}` from one batch of `batch_size`
    /// draws. Inputs are normalized.
    pub fn expected_loss<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        actions: &[f64],
        batch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if batch_size == 0 {
            return Err(Error::config("expected-loss batch size must be >= 1"));
        }
        self.check_obs(obs)?;
        self.check_actions(actions)?;
        let mut batch = DenoiserBatch::with_capacity(self.net.shape(), batch_size);
        let mut scratch = (Vec::new(), Vec::new());
        for _ in 0..batch_size {
            self.push_random_row(&mut batch, obs, actions, rng, &mut scratch)?;
        }
        let pred = self.net.predict(&batch)?;
        Ok(mean_squared(&pred, batch.targets()))
    }

    /// Raw-unit variant of [`Self::expected_loss`].
    pub fn expected_loss_raw<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        actions: &[f64],
        batch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.expected_loss(
            &self.normalize_obs(obs),
            &self.normalize_actions(actions),
            batch_size,
            rng,
        )
    }

    /// DDPM ancestral sampling of `draws` sequences for one normalized
    /// observation. Returns `draws × action_len` normalized values.
    pub fn sample_normalized<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        draws: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let obs_rows: Vec<f64> = (0..draws).flat_map(|_| obs.iter().copied()).collect();
        self.sample_rows(&obs_rows, draws, rng)
    }

    /// Ancestral sampling with one row per observation in `obs_rows`.
    pub fn sample_rows<R: Rng + ?Sized>(
        &self,
        obs_rows: &[f64],
        rows: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if rows == 0 || obs_rows.len() != rows * self.config.obs_dim {
            return Err(Error::shape("observation rows do not match row count"));
        }
        let len = self.action_len();
        let od = self.config.obs_dim;
        let kind = self.config.target;
        let mut x: Vec<f64> = (0..rows * len).map(|_| rng.sample(StandardNormal)).collect();
        let mut batch = DenoiserBatch::with_capacity(self.net.shape(), rows);
        for t in (0..self.config.diffusion_steps).rev() {
            batch.clear();
            for r in 0..rows {
                batch.push(
                    &obs_rows[r * od..(r + 1) * od],
                    &x[r * len..(r + 1) * len],
                    self.embedding(t),
                    None,
                )?;
            }
            let pred = self.net.predict(&batch)?;
            let (s, n) = coefficients(&self.schedule, t);
            let alpha = self.schedule.alpha(t);
            let beta = self.schedule.beta(t);
            let sigma = if t > 0 {
                let ab_prev = self.schedule.alpha_bar(t - 1);
                (beta * (1.0 - ab_prev) / (1.0 - self.schedule.alpha_bar(t))).sqrt()
            } else {
                0.0
            };
            for (xi, &p) in x.iter_mut().zip(&pred) {
                let (_, eps_hat) = recover_scalar(kind, *xi, p, s, n);
                let mean = (*xi - beta / n * eps_hat) / alpha.sqrt();
                let noise = if t > 0 {
                    sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                *xi = (mean + noise).clamp(-SAMPLE_CLIP, SAMPLE_CLIP);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite sample at diffusion step {t}"
                )));
            }
        }
        Ok(x)
    }

    /// One action sequence in raw units for a raw observation.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let sample = self.sample_normalized(&self.normalize_obs(obs), 1, rng)?;
        Ok(self.denormalize_actions(&sample))
    }
}

fn config_dims(config: &PolicyConfig) -> (usize, usize) {
    (config.obs_dim, config.action_dim)
}

pub(crate) fn mean_squared(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    sum / pred.len() as f64
}
