//! Query quality without interventions: a deliberately undertrained policy
//! drives every episode while the gate only records where it would have
//! asked for help. Flags are scored against the episode outcome.

use dagger_lab::baselines::bc_train;
use dagger_lab::dagger::{collect_initial, reference_losses, DaggerConfig, ExpertSchedule};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::CircleNav;
use dagger_lab::eval::{evaluate_queries, ShadowActor, Signal};
use dagger_lab::gate::QueryGate;

fn main() -> anyhow::Result<()> {
    let task = CircleNav::default();
    let policy = PolicyConfig {
        hidden: vec![64, 64, 64],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        epochs: 30,
        seed: 4,
        ..DaggerConfig::default()
    };
    let settings = config.learner_settings(&policy);
    let data = collect_initial(&task, ExpertSchedule::Alternating, 60, policy.prediction_horizon, 4)?;
    let (policy, _) = bc_train(&data, &settings, 1)?;
    let table = policy.normalize_table(&data.table()?);
    let losses = reference_losses(&policy, &table, config.loss_batch, settings.gate_fit_seed())?;
    let gate = QueryGate::fit(&losses, config.alpha, config.patience)?;

    let actor = ShadowActor {
        policy: &policy,
        signal: Signal::Loss { batch: config.loss_batch },
    };
    let eval = evaluate_queries(&task, &actor, &gate, 40, 4)?;
    println!("{:?}", eval.matrix);
    println!("{:?}", eval.metrics);
    Ok(())
}
