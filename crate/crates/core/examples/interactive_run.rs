//! A small robot-gated interactive run on the circle task with the scripted
//! expert standing in for a human.

use dagger_lab::dagger::{run_dagger, DaggerConfig, DiffusionLearner, ScriptedExpert};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::CircleNav;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let task = CircleNav::default();
    let policy = PolicyConfig {
        hidden: vec![32, 32],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        initial_demos: 6,
        final_demos: 14,
        interventions_per_update: 4,
        alpha: 0.9,
        patience: 1,
        epochs: 40,
        loss_batch: 64,
        max_rollouts: 200,
        seed: 5,
        ..DaggerConfig::default()
    };
    let mut learner = DiffusionLearner::new(config.learner_settings(&policy))?;
    let run = run_dagger(&task, &mut learner, &config, &mut ScriptedExpert, &mut (), None)?;
    println!(
        "{} rollouts, {} interventions ({} queries, {} timeouts), {} demonstrations",
        run.log.episodes.len(),
        run.log.interventions(),
        run.log.queries(),
        run.log.timeouts(),
        run.dataset.len()
    );
    for m in &run.metrics {
        println!("{m:?}");
    }
    Ok(())
}
