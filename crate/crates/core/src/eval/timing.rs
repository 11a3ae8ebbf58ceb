use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::EnsembleLearner;
use crate::dagger::{Dataset, DiffusionLearner, Learner, LearnerSettings, Method};
use crate::seed;
use crate::{Error, Result};

/// Wall-clock cost of one policy update and of gated inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub method: Method,
    pub train_secs: f64,
    pub threshold_secs: f64,
    /// Mean seconds per gated decision (sampling plus scoring).
    pub inference_secs: f64,
    pub decisions: usize,
    pub total_secs: f64,
    pub threads: usize,
}

/// Times training, threshold setting and `decisions` gated inferences at
/// training observations for one method.
pub fn measure_phases(
    method: Method,
    dataset: &Dataset,
    settings: &LearnerSettings,
    members: usize,
    decisions: usize,
) -> Result<TimingReport> {
    if decisions == 0 {
        return Err(Error::config("need at least one timed decision"));
    }
    let started = Instant::now();
    let mut learner: Box<dyn Learner> = match method {
        Method::Diff => Box::new(DiffusionLearner::new(settings.clone())?),
        Method::Ensemble => Box::new(EnsembleLearner::new(settings.clone(), members)?),
        Method::Bc => return Err(Error::config("behavior cloning has no gate to time")),
    };
    let stats = learner.update(dataset, 0)?;
    let table = dataset.table()?;
    let stride = (table.rows() / decisions).max(1);
    let mut rng = seed::rng(settings.seed, &[seed::stream::EVAL]);
    let t0 = Instant::now();
    for i in 0..decisions {
        let obs = table.obs((i * stride) % table.rows());
        learner.plan(obs, true, &mut rng)?;
    }
    let inference_secs = t0.elapsed().as_secs_f64() / decisions as f64;
    Ok(TimingReport {
        method,
        train_secs: stats.train_secs,
        threshold_secs: stats.threshold_secs,
        inference_secs,
        decisions,
        total_secs: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}
