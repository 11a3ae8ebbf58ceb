use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{DiffusionPolicy, PairTable};
use crate::nn::{Adam, DenoiserBatch};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Minibatch Adam on the denoising objective. `data` must already be in
/// the policy's normalized units.
pub fn train<R: Rng + ?Sized>(
    policy: &mut DiffusionPolicy,
    data: &PairTable,
    schedule: TrainSchedule,
    rng: &mut R,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if schedule.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let mut opt = Adam::new(policy.net().params().len(), schedule.lr);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut batch = DenoiserBatch::with_capacity(policy.net().shape(), schedule.batch_size);
    let mut scratch = (Vec::new(), Vec::new());
    let mut report = TrainReport::default();
    for _ in 0..schedule.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            batch.clear();
            for &i in chunk {
                policy.push_random_row(&mut batch, data.obs(i), data.actions(i), rng, &mut scratch)?;
            }
            let (loss, grad) = policy.net().loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "training loss diverged after {} steps",
                    opt.steps()
                )));
            }
            opt.step(policy.net_mut().params_mut(), &grad)?;
            total += loss;
            batches += 1;
        }
        report.epoch_losses.push(total / batches as f64);
    }
    report.steps = opt.steps();
    Ok(report)
}
