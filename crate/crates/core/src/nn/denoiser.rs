//! Conditional denoiser: an [`Mlp`] whose input row is
//! `[observation ‖ noisy action sequence ‖ timestep embedding]`.

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::params::ParameterVector;
use crate::{Error, Result};

/// Sinusoidal embedding: component `2i` is `sin(t / 10000^(2i/dim))` and
/// component `2i + 1` the cosine of the same argument.
pub fn embed_timestep(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config(format!(
            "timestep embedding dim must be even and positive, got {dim}"
        )));
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let arg = t as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}

/// Input and hidden dimensions of a denoiser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserShape {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Prediction horizon: number of actions in one sequence.
    pub horizon: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl DenoiserShape {
    pub fn action_len(&self) -> usize {
        self.action_dim * self.horizon
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.action_len() + self.embed_dim
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim());
        w.extend_from_slice(&self.hidden);
        w.push(self.action_len());
        w
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.action_dim == 0 || self.horizon == 0 {
            return Err(Error::config("denoiser dims must be >= 1"));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::config(format!(
                "timestep embedding dim must be even and positive, got {}",
                self.embed_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    shape: DenoiserShape,
    seed: u64,
    mlp: Mlp,
}

impl DenoiserNet {
    pub fn init(seed: u64, shape: DenoiserShape) -> Result<Self> {
        shape.validate()?;
        let mlp = Mlp::init(seed, &shape.widths(), shape.activation)?;
        Ok(Self { shape, seed, mlp })
    }

    pub fn from_params(seed: u64, shape: DenoiserShape, params: ParameterVector) -> Result<Self> {
        shape.validate()?;
        if params.layout().widths() != shape.widths().as_slice() {
            return Err(Error::shape(format!(
                "parameter topology {:?} does not match denoiser {:?}",
                params.layout().widths(),
                shape.widths()
            )));
        }
        let mlp = Mlp::from_params(params, shape.activation);
        Ok(Self { shape, seed, mlp })
    }

    pub fn shape(&self) -> &DenoiserShape {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &ParameterVector {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        self.mlp.params_mut()
    }

    pub fn output_dim(&self) -> usize {
        self.shape.action_len()
    }

    /// Single-row prediction.
    pub fn forward(&self, obs: &[f64], noisy_actions: &[f64], t: usize) -> Result<Vec<f64>> {
        let emb = embed_timestep(t, self.shape.embed_dim)?;
        let mut batch = DenoiserBatch::new(&self.shape);
        batch.push(obs, noisy_actions, &emb, None)?;
        self.predict(&batch)
    }

    /// Predictions for every row of `batch`.
    pub fn predict(&self, batch: &DenoiserBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.mlp.forward(&batch.inputs, batch.rows)
    }

    /// Mean squared error over rows and output dims, with its gradient.
    pub fn loss_and_grad(&self, batch: &DenoiserBatch) -> Result<(f64, ParameterVector)> {
        self.check_batch(batch)?;
        if batch.targets.len() != batch.inputs.len() / self.shape.input_dim() * self.output_dim() {
            return Err(Error::shape("every training row needs a target"));
        }
        self.mlp
            .mse_and_grad(&batch.inputs, &batch.targets, batch.rows)
    }

    fn check_batch(&self, batch: &DenoiserBatch) -> Result<()> {
        if batch.rows == 0 {
            return Err(Error::shape("empty batch"));
        }
        if batch.input_dim != self.shape.input_dim() {
            return Err(Error::shape(format!(
                "batch rows have {} inputs, denoiser expects {}",
                batch.input_dim,
                self.shape.input_dim()
            )));
        }
        Ok(())
    }
}

/// Row-major batch of denoiser inputs with optional regression targets.
#[derive(Debug, Clone, Default)]
pub struct DenoiserBatch {
    input_dim: usize,
    obs_dim: usize,
    action_len: usize,
    embed_dim: usize,
    rows: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl DenoiserBatch {
    pub fn new(shape: &DenoiserShape) -> Self {
        Self {
            input_dim: shape.input_dim(),
            obs_dim: shape.obs_dim,
            action_len: shape.action_len(),
            embed_dim: shape.embed_dim,
            ..Default::default()
        }
    }

    pub fn with_capacity(shape: &DenoiserShape, rows: usize) -> Self {
        let mut b = Self::new(shape);
        b.inputs.reserve(rows * b.input_dim);
        b.targets.reserve(rows * b.action_len);
        b
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn clear(&mut self) {
        self.rows = 0;
        self.inputs.clear();
        self.targets.clear();
    }

    /// Appends one row. `embedding` must come from [`embed_timestep`].
    pub fn push(
        &mut self,
        obs: &[f64],
        noisy_actions: &[f64],
        embedding: &[f64],
        target: Option<&[f64]>,
    ) -> Result<()> {
        if obs.len() != self.obs_dim
            || noisy_actions.len() != self.action_len
            || embedding.len() != self.embed_dim
        {
            return Err(Error::shape(format!(
                "row parts ({}, {}, {}) do not match denoiser ({}, {}, {})",
                obs.len(),
                noisy_actions.len(),
                embedding.len(),
                self.obs_dim,
                self.action_len,
                self.embed_dim
            )));
        }
        if let Some(target) = target {
            if target.len() != self.action_len {
                return Err(Error::shape(format!(
                    "target has {} values, expected {}",
                    target.len(),
                    self.action_len
                )));
            }
            if self.targets.len() != self.rows * self.action_len {
                return Err(Error::shape("cannot mix rows with and without targets"));
            }
            self.targets.extend_from_slice(target);
        }
        self.inputs.extend_from_slice(obs);
        self.inputs.extend_from_slice(noisy_actions);
        self.inputs.extend_from_slice(embedding);
        self.rows += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> DenoiserShape {
        DenoiserShape {
            obs_dim: 2,
            action_dim: 2,
            horizon: 3,
            embed_dim: 4,
            hidden: vec![8, 8],
            activation: Activation::Mish,
        }
    }

    #[test]
    fn embedding_at_zero() {
        assert_eq!(embed_timestep(0, 4).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn embedding_at_one_dim_two() {
        let e = embed_timestep(1, 2).unwrap();
        assert!((e[0] - 0.84147).abs() < 1e-5);
        assert!((e[1] - 0.54030).abs() < 1e-5);
    }

    #[test]
    fn embedding_is_bounded() {
        for t in 0..200 {
            assert!(embed_timestep(t, 16)
                .unwrap()
                .iter()
                .all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn odd_embedding_dim_is_rejected() {
        assert!(matches!(embed_timestep(3, 5), Err(Error::Config(_))));
        let mut s = shape();
        s.embed_dim = 3;
        assert!(matches!(DenoiserNet::init(1, s), Err(Error::Config(_))));
    }

    #[test]
    fn output_length_is_action_sequence() {
        let net = DenoiserNet::init(5, shape()).unwrap();
        let y = net.forward(&[0.1, 0.2], &[0.0; 6], 3).unwrap();
        assert_eq!(y.len(), 6);
    }

    #[test]
    fn forward_rejects_wrong_dims() {
        let net = DenoiserNet::init(5, shape()).unwrap();
        assert!(matches!(net.forward(&[0.1], &[0.0; 6], 0), Err(Error::Shape(_))));
        assert!(matches!(net.forward(&[0.1, 0.2], &[0.0; 5], 0), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_is_pure() {
        let net = DenoiserNet::init(5, shape()).unwrap();
        let a = net.forward(&[0.1, 0.2], &[0.3; 6], 2).unwrap();
        let b = net.forward(&[0.1, 0.2], &[0.3; 6], 2).unwrap();
        assert_eq!(a, b);
    }
}
