//! Fits a diffusion policy to a two-goal reaching task and shows that its
//! samples at the start state split between both goals instead of
//! averaging them.

use dagger_lab::baselines::bc_train;
use dagger_lab::dagger::{collect_initial, DaggerConfig, ExpertSchedule};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::{Task, TwoGoalConfig, TwoGoalReach};
use dagger_lab::seed;

fn main() -> anyhow::Result<()> {
    let task = TwoGoalReach::new(TwoGoalConfig::default())?;
    let policy = PolicyConfig {
        hidden: vec![64, 64],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        epochs: 150,
        seed: 7,
        ..DaggerConfig::default()
    };
    let data = collect_initial(&task, ExpertSchedule::Alternating, 40, policy.prediction_horizon, 7)?;
    let (policy, report) = bc_train(&data, &config.learner_settings(&policy), 1)?;
    let loss = report.last().and_then(|r| r.final_loss()).unwrap_or(f64::NAN);
    println!("trained on {} pairs, final loss {loss:.4}", data.table()?.rows());

    let start = task.reset_at(0.0);
    let mut rng = seed::rng(7, &[99]);
    let (mut left, mut right, mut middle) = (0, 0, 0);
    for _ in 0..200 {
        let actions = policy.sample_action(&start.observation(), &mut rng)?;
        // Sum the first half of the window to get a heading.
        let k = actions.len() / 4;
        let dx: f64 = actions.chunks(2).take(k).map(|a| a[0]).sum();
        match dx {
            d if d < -0.02 => left += 1,
            d if d > 0.02 => right += 1,
            _ => middle += 1,
        }
    }
    println!("200 samples at the start: {left} head left, {right} head right, {middle} undecided");
    Ok(())
}
