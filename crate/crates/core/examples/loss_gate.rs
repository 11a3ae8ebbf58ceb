//! The expected denoising loss as a novelty signal. A policy trained on
//! circle demonstrations scores its own sampled actions; the gate compares
//! those scores against a quantile of losses on the training pairs.

use dagger_lab::baselines::bc_train;
use dagger_lab::dagger::{collect_initial, reference_losses, DaggerConfig, ExpertSchedule};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::{CircleNav, Task};
use dagger_lab::gate::QueryGate;
use dagger_lab::seed;

fn main() -> anyhow::Result<()> {
    let task = CircleNav::default();
    let policy = PolicyConfig {
        hidden: vec![64, 64, 64],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        epochs: 150,
        seed: 3,
        ..DaggerConfig::default()
    };
    let settings = config.learner_settings(&policy);
    let data = collect_initial(&task, ExpertSchedule::Alternating, 40, policy.prediction_horizon, 3)?;
    let (policy, _) = bc_train(&data, &settings, 1)?;

    let table = policy.normalize_table(&data.table()?);
    let losses = reference_losses(&policy, &table, config.loss_batch, settings.gate_fit_seed())?;
    let mut gate = QueryGate::fit(&losses, config.alpha, config.patience)?;
    println!("tau = {:.4} at alpha {} over {} pairs", gate.tau(), gate.alpha(), losses.len());

    let mut rng = seed::rng(3, &[1]);
    for probe in task.probe_set(4, 3) {
        let obs = probe.observation;
        let actions = policy.sample_action(&obs, &mut rng)?;
        let loss = policy.expected_loss_raw(&obs, &actions, config.loss_batch, &mut rng)?;
        gate.reset();
        let decision = gate.observe(loss);
        println!(
            "{:<14} [{:+.2}, {:+.2}]  loss {loss:.4}  cdf {:.3}  {:?}",
            probe.label.as_str(),
            obs[0],
            obs[1],
            decision.cdf,
            decision.verdict
        );
    }
    Ok(())
}
