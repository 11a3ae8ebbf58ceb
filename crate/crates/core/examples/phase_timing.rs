//! Wall-clock cost of an update, threshold setting and gated inference for
//! the diffusion gate and the ensemble baseline.

use dagger_lab::dagger::{collect_initial, DaggerConfig, ExpertSchedule, Method};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::CircleNav;
use dagger_lab::eval::measure_phases;

fn main() -> anyhow::Result<()> {
    let task = CircleNav::default();
    let policy = PolicyConfig {
        hidden: vec![64, 64],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        epochs: 30,
        ..DaggerConfig::default()
    };
    let settings = config.learner_settings(&policy);
    let data = collect_initial(&task, ExpertSchedule::Alternating, 30, policy.prediction_horizon, 1)?;
    for method in [Method::Diff, Method::Ensemble] {
        let t = measure_phases(method, &data, &settings, config.ensemble_members, 20)?;
        println!(
            "{method:?}: train {:.2}s, threshold {:.2}s, {:.2}ms per decision ({} threads)",
            t.train_secs,
            t.threshold_secs,
            t.inference_secs * 1e3,
            t.threads
        );
    }
    Ok(())
}
