//! Property checks shared by the regular test suite and the acceptance
//! runner. Every check computes its reference value independently of the
//! code under test and returns the measured discrepancy.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

use dagger_lab::dagger::{
    run_dagger, DaggerConfig, DaggerRun, DiffusionLearner, ExpertSchedule, Provenance, ScriptedExpert,
};
use dagger_lab::diffusion::{
    noise_action, prediction_target, recover, train, DiffusionPolicy, NoiseSchedule, PairTable, PolicyConfig,
    PredictionTarget, TrainSchedule,
};
use dagger_lab::env::CircleNav;
use dagger_lab::gate::QueryGate;
use dagger_lab::nn::{embed_timestep, Activation, DenoiserBatch, DenoiserNet, DenoiserShape};
use dagger_lab::seed;

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative error, over a few random nets, between the analytic
/// gradient and central differences: `‖g − fd‖ / max(‖g‖, ‖fd‖)`.
pub fn gradient_rel_error() -> f64 {
    let mut worst: f64 = 0.0;
    for trial in 0..3u64 {
        let mut rng = seed::rng(41, &[trial]);
        let shape = DenoiserShape {
            obs_dim: 2,
            action_dim: 2,
            horizon: 2,
            embed_dim: 4,
            hidden: vec![8, 6],
            activation: Activation::Mish,
        };
        let mut net = DenoiserNet::init(trial, shape.clone()).unwrap();
        let mut batch = DenoiserBatch::new(&shape);
        for _ in 0..5 {
            let mut g = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
            let (obs, noisy, target) = (g(2), g(4), g(4));
            let t = rng.random_range(0..16);
            batch
                .push(&obs, &noisy, &embed_timestep(t, 4).unwrap(), Some(&target))
                .unwrap();
        }
        let (_, grad) = net.loss_and_grad(&batch).unwrap();
        let mse = |net: &DenoiserNet| {
            let p = net.predict(&batch).unwrap();
            p.iter().zip(batch.targets()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
        };
        let h = 1e-5;
        let mut fd = Vec::with_capacity(grad.len());
        for i in 0..grad.len() {
            let orig = net.params().values()[i];
            net.params_mut().values_mut()[i] = orig + h;
            let up = mse(&net);
            net.params_mut().values_mut()[i] = orig - h;
            let down = mse(&net);
            net.params_mut().values_mut()[i] = orig;
            fd.push((up - down) / (2.0 * h));
        }
        let g = grad.values();
        let diff = l2(g.iter().zip(&fd).map(|(a, b)| a - b));
        let scale = l2(g.iter().copied()).max(l2(fd.iter().copied()));
        worst = worst.max(diff / scale);
    }
    worst
}

/// Number of mismatches between the gate threshold and a counting oracle
/// (smallest sample value whose empirical CDF reaches alpha) over lengths
/// 1..=1000.
pub fn quantile_mismatches() -> usize {
    let mut rng = seed::rng(42, &[]);
    let mut bad = 0;
    for n in 1..=1000usize {
        // Small integer range on odd lengths to force ties.
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if n % 2 == 1 {
                    rng.random_range(0..20) as f64
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        for alpha in [rng.random_range(0.001..1.0), 0.99, 1.0] {
            let tau = QueryGate::fit(&values, alpha, 1).unwrap().tau();
            let oracle = values
                .iter()
                .copied()
                .filter(|&x| values.iter().filter(|&&v| v <= x).count() as f64 >= alpha * n as f64)
                .fold(f64::INFINITY, f64::min);
            if tau != oracle {
                bad += 1;
            }
        }
    }
    bad
}

/// Mismatches between the gate's query decisions and a look-back oracle
/// over every binary violation pattern of length <= 12 and patience <= 4.
/// The oracle fires at step i when the run of violations ending at i is a
/// positive multiple of K, since the streak restarts after each query.
pub fn patience_mismatches() -> (usize, usize) {
    let (mut bad, mut cases) = (0, 0);
    for k in 1..=4usize {
        for len in 0..=12usize {
            for bits in 0u32..(1 << len) {
                let pattern: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
                let mut gate = QueryGate::fit(&[0.0, 1.0], 0.5, k).unwrap();
                for i in 0..len {
                    let fired = gate.observe(if pattern[i] { 2.0 } else { -1.0 }).is_query();
                    let run = (0..=i).rev().take_while(|&j| pattern[j]).count();
                    let oracle = run > 0 && run % k == 0;
                    cases += 1;
                    if fired != oracle {
                        bad += 1;
                    }
                }
            }
        }
    }
    (bad, cases)
}

/// Largest error recovering `(a, ε)` from a noisy sample and its
/// v-objective target, over every step of a 16-step schedule.
pub fn v_inversion_error() -> f64 {
    let schedule = NoiseSchedule::squared_cosine(16).unwrap();
    let mut rng = seed::rng(43, &[]);
    let mut worst: f64 = 0.0;
    for t in 0..16 {
        for _ in 0..50 {
            let a: Vec<f64> = (0..16).map(|_| rng.random_range(-1.5..1.5)).collect();
            let e: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let x = noise_action(&a, &e, t, &schedule).unwrap();
            let v = prediction_target(PredictionTarget::VObjective, &a, &e, t, &schedule).unwrap();
            let (ra, re) = recover(PredictionTarget::VObjective, &x, &v, t, &schedule).unwrap();
            for (p, q) in ra.iter().zip(&a).chain(re.iter().zip(&e)) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    worst
}

/// L∞ distance between samples of a policy trained on one pair and that
/// pair's action sequence.
pub fn overfit_error() -> f64 {
    let config = PolicyConfig {
        hidden: vec![128, 128],
        ..PolicyConfig::default()
    };
    let mut policy = DiffusionPolicy::new(config.clone(), 5).unwrap();
    let mut rng = seed::rng(44, &[]);
    let obs = [0.3, -0.2];
    let actions: Vec<f64> = (0..config.action_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut table = PairTable::new(2, config.action_len());
    for _ in 0..64 {
        table.push(&obs, &actions);
    }
    let schedule = TrainSchedule {
        epochs: 3000,
        batch_size: 64,
        lr: 2e-3,
    };
    train(&mut policy, &table, schedule, &mut rng).unwrap();
    let draws = 20;
    let samples = policy.sample_normalized(&obs, draws, &mut rng).unwrap();
    samples
        .chunks(actions.len())
        .flat_map(|s| s.iter().zip(&actions).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Variance of the expected-loss estimate at batch N over its variance at
/// 4N. A 1/√N standard error makes this 4.
pub fn mc_variance_ratio() -> f64 {
    let config = PolicyConfig {
        hidden: vec![32, 32],
        ..PolicyConfig::default()
    };
    let policy = DiffusionPolicy::new(config.clone(), 6).unwrap();
    let mut rng = seed::rng(45, &[]);
    let obs = [0.1, 0.4];
    let actions: Vec<f64> = (0..config.action_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reps = 3000;
    let mut estimates = |n: usize| -> Vec<f64> {
        (0..reps)
            .map(|_| policy.expected_loss(&obs, &actions, n, &mut rng).unwrap())
            .collect()
    };
    let small = estimates(16);
    let large = estimates(64);
    sample_variance(&small) / sample_variance(&large)
}

pub fn tiny_dagger_config(seed: u64) -> (PolicyConfig, DaggerConfig) {
    let policy = PolicyConfig {
        hidden: vec![24, 24],
        ..PolicyConfig::default()
    };
    let dagger = DaggerConfig {
        initial_demos: 4,
        final_demos: 15,
        interventions_per_update: 3,
        alpha: 0.9,
        patience: 1,
        loss_batch: 32,
        epochs: 8,
        batch_size: 128,
        max_rollouts: 200,
        expert_schedule: ExpertSchedule::Alternating,
        seed,
        ..DaggerConfig::default()
    };
    (policy, dagger)
}

pub fn tiny_run(policy: &PolicyConfig, dagger: &DaggerConfig) -> DaggerRun {
    let task = CircleNav::default();
    let mut learner = DiffusionLearner::new(dagger.learner_settings(policy)).unwrap();
    run_dagger(&task, &mut learner, dagger, &mut ScriptedExpert, &mut (), None).unwrap()
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.into_inner().unwrap()
}

/// Whether two runs with one seed, under different thread counts, produce
/// byte-identical metric tables, datasets and intervention logs.
pub fn runs_are_identical() -> bool {
    let (policy, dagger) = tiny_dagger_config(9);
    let run_in = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| tiny_run(&policy, &dagger))
    };
    let (a, b) = (run_in(1), run_in(3));
    csv_bytes(&a.metrics) == csv_bytes(&b.metrics)
        && dagger_lab::io::dataset_to_string(&a.dataset).unwrap()
            == dagger_lab::io::dataset_to_string(&b.dataset).unwrap()
        && serde_json::to_string(&a.log).unwrap() == serde_json::to_string(&b.log).unwrap()
}

/// Violations of the interactive-loop bookkeeping in one finished run.
pub fn bookkeeping_violations(run: &DaggerRun, config: &DaggerConfig) -> Vec<String> {
    let mut out = Vec::new();
    let rows = &run.metrics;
    if rows.first().map(|r| r.round) != Some(0) {
        out.push("first update is not round 0".into());
    }
    for (i, r) in rows.iter().enumerate().skip(1) {
        let last = i + 1 == rows.len();
        let ok = if last {
            (1..=config.interventions_per_update).contains(&r.interventions)
        } else {
            r.interventions == config.interventions_per_update
        };
        if !ok {
            out.push(format!("update {} follows {} interventions", r.round, r.interventions));
        }
    }
    let initial = run
        .dataset
        .demos
        .iter()
        .take_while(|d| d.provenance == Provenance::Initial)
        .count();
    if initial != config.initial_demos {
        out.push(format!("{initial} initial demonstrations, expected {}", config.initial_demos));
    }
    for d in &run.dataset.demos[initial..] {
        if d.provenance != Provenance::Intervention {
            out.push(format!("episode {} is not tagged as an intervention", d.episode));
            continue;
        }
        let Some(ep) = run.log.episodes.iter().find(|e| e.episode == d.episode) else {
            out.push(format!("episode {} is missing from the log", d.episode));
            continue;
        };
        let expert: Vec<_> = ep
            .trajectory
            .iter()
            .filter(|s| s.controller == dagger_lab::dagger::Controller::Expert)
            .collect();
        let matches = expert.len() == d.pairs.len()
            && expert
                .iter()
                .zip(&d.pairs)
                .all(|(s, p)| p.obs == s.position && p.actions[..2] == s.action);
        if !matches {
            out.push(format!("episode {} stores pairs that are not its expert steps", d.episode));
        }
    }
    let interventions = run.log.episodes.iter().filter(|e| e.intervened()).count();
    if run.dataset.len() != config.initial_demos + interventions {
        out.push("dataset size differs from initial demos plus interventions".into());
    }
    out
}
