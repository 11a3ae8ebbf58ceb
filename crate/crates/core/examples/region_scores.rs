//! Compares the diffusion loss and ensemble disagreement across the three
//! probe regions of the circle task, with one-sided rank tests.

use dagger_lab::baselines::EnsembleLearner;
use dagger_lab::dagger::{collect_initial, DaggerConfig, ExpertSchedule};
use dagger_lab::diffusion::PolicyConfig;
use dagger_lab::env::{CircleNav, RegionLabel};
use dagger_lab::eval::{mann_whitney_greater, region_analysis};
use dagger_lab::env::Task;

fn main() -> anyhow::Result<()> {
    let task = CircleNav::default();
    let policy = PolicyConfig {
        hidden: vec![64, 64, 64],
        ..PolicyConfig::default()
    };
    let config = DaggerConfig {
        epochs: 100,
        seed: 2,
        ..DaggerConfig::default()
    };
    let data = collect_initial(&task, ExpertSchedule::Alternating, 40, policy.prediction_horizon, 2)?;
    let mut ens = EnsembleLearner::new(config.learner_settings(&policy), 3)?;
    ens.train_members(&data, 0)?;
    let probes = task.probe_set(30, 2);
    let ra = region_analysis(&ens.ensemble().members()[0], Some(ens.ensemble()), &probes, 128, 2)?;

    for row in &ra.rows {
        println!("{row:?}");
    }
    use RegionLabel::*;
    let test = |name: &str, x: Vec<f64>, y: Vec<f64>| {
        let p = mann_whitney_greater(&x, &y).map_or(f64::NAN, |r| r.p_value);
        println!("{name:<28} p = {p:.2e}");
    };
    test("loss  ood > unimodal", ra.losses(OutOfDistribution), ra.losses(IdUnimodal));
    test("loss  ood > multimodal", ra.losses(OutOfDistribution), ra.losses(IdMultimodal));
    test("score multimodal > unimodal", ra.scores(IdMultimodal), ra.scores(IdUnimodal));
    Ok(())
}
