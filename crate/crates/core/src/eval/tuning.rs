use serde::{Deserialize, Serialize};

use super::shadow::{success_rate, ShadowActor, Signal};
use crate::baselines::bc_train;
use crate::dagger::{Dataset, LearnerSettings};
use crate::diffusion::{DiffusionPolicy, TrainSchedule};
use crate::env::Task;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrial {
    pub epochs: usize,
    pub success: f64,
}

#[derive(Debug, Clone)]
pub struct BcTuning {
    pub epochs: usize,
    pub success: f64,
    pub policy: DiffusionPolicy,
    pub trials: Vec<EpochTrial>,
    pub in_band: bool,
}

/// Bisects the epoch count of single-round behavior cloning until its
/// success rate lands in `band`. Success is assumed to grow with training;
/// the search stops after `max_trials` fits and keeps the closest one.
pub fn tune_bc_epochs(
    task: &dyn Task,
    dataset: &Dataset,
    settings: &LearnerSettings,
    band: (f64, f64),
    max_epochs: usize,
    episodes: usize,
    max_trials: usize,
    seed: u64,
) -> Result<BcTuning> {
    if !(band.0 <= band.1) || max_epochs == 0 || max_trials == 0 {
        return Err(Error::config("invalid epoch-tuning band or budget"));
    }
    let (mut lo, mut hi) = (1usize, max_epochs);
    let mut epochs = max_epochs.div_ceil(2);
    let mut trials = Vec::new();
    let mut best: Option<(f64, usize, f64, DiffusionPolicy)> = None;
    for _ in 0..max_trials {
        let s = LearnerSettings {
            train: TrainSchedule {
                epochs,
                ..settings.train
            },
            ..settings.clone()
        };
        let (policy, _) = bc_train(dataset, &s, 1)?;
        let actor = ShadowActor {
            policy: &policy,
            signal: Signal::Loss { batch: 1 },
        };
        let success = success_rate(task, &actor, episodes, seed)?.rate;
        log::info!("behavior cloning with {epochs} epochs: success {success:.2}");
        trials.push(EpochTrial { epochs, success });
        let centre = 0.5 * (band.0 + band.1);
        let miss = if success < band.0 {
            band.0 - success
        } else if success > band.1 {
            success - band.1
        } else {
            0.0
        };
        let key = (miss, (success - centre).abs());
        let better = match &best {
            None => true,
            Some((m, _, _, _)) => key.0 < *m,
        };
        if better {
            best = Some((key.0, epochs, success, policy));
        }
        if miss == 0.0 {
            break;
        }
        if success < band.0 {
            lo = epochs + 1;
        } else {
            hi = epochs.saturating_sub(1).max(1);
        }
        if lo > hi {
            break;
        }
        epochs = lo + (hi - lo) / 2;
    }
    let (miss, epochs, success, policy) = best.expect("at least one trial");
    Ok(BcTuning {
        epochs,
        success,
        policy,
        trials,
        in_band: miss == 0.0,
    })
}
