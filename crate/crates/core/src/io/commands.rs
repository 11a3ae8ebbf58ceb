//! Subcommand implementations behind the command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::cli::{Cli, Command, CommonArgs};
use super::config::{load_config, EnvConfig, RunConfig};
use super::records::{read_dataset, write_csv, write_dataset, write_json, write_trajectories};
use crate::baselines::{bc_train, EnsembleLearner, PolicyPlanner};
use crate::dagger::{
    collect_initial, reference_losses, run_dagger, DaggerRun, Dataset, DiffusionLearner, Learner, Method, ScriptedExpert,
};
use crate::diffusion::{load_policy, save_policy};
use crate::env::RegionLabel;
use crate::eval::{
    evaluate_queries, mann_whitney_greater, measure_phases, region_analysis, success_rate, ShadowActor, Signal,
};
use crate::gate::QueryGate;
use crate::{Error, Result};

/// Loads the configuration named by `common` (or the defaults) and applies
/// the seed and output overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::new(EnvConfig::default(), Method::Diff),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

pub(crate) fn prepare_out(config: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.out_dir)?;
    fs::write(config.out_dir.join("config.json"), config.to_json()?)?;
    Ok(config.out_dir.clone())
}

/// Number of training rounds a full interactive run performs.
pub fn planned_rounds(config: &RunConfig) -> usize {
    let d = &config.dagger;
    1 + (d.final_demos - d.initial_demos).div_ceil(d.interventions_per_update)
}

fn final_demos(config: &RunConfig) -> Result<Dataset> {
    let task = config.env.build()?;
    collect_initial(
        task.as_ref(),
        config.dagger.expert_schedule,
        config.dagger.final_demos,
        config.policy.prediction_horizon,
        config.seed,
    )
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Demos { common, episodes } => demos(&resolve_config(&common)?, episodes),
        Command::Train { common, dataset } => train_bc(&resolve_config(&common)?, dataset.as_deref()),
        Command::Dagger { common } => dagger(&resolve_config(&common)?),
        Command::Eval {
            common,
            checkpoint,
            episodes,
            dataset,
        } => {
            let checkpoint = checkpoint.ok_or_else(|| Error::Usage("eval needs --checkpoint".into()))?;
            eval(&resolve_config(&common)?, &checkpoint, episodes, dataset.as_deref())
        }
        Command::Regions { common } => regions(&resolve_config(&common)?),
        Command::Bench { common } => bench(&resolve_config(&common)?),
        Command::Serve { common, port } => crate::session::serve(&resolve_config(&common)?, port),
    }
}

pub fn demos(config: &RunConfig, episodes: Option<usize>) -> Result<()> {
    let out = prepare_out(config)?;
    let task = config.env.build()?;
    let n = episodes.unwrap_or(config.dagger.final_demos);
    let ds = collect_initial(
        task.as_ref(),
        config.dagger.expert_schedule,
        n,
        config.policy.prediction_horizon,
        config.seed,
    )?;
    write_dataset(&ds, &out.join("dataset.jsonl"))?;
    println!("{} demonstrations, {} pairs -> {}", ds.len(), ds.pair_count(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct EpochRow {
    round: usize,
    epoch: usize,
    loss: f64,
}

pub fn train_bc(config: &RunConfig, dataset: Option<&Path>) -> Result<()> {
    let out = prepare_out(config)?;
    let ds = match dataset {
        Some(p) => read_dataset(p)?,
        None => final_demos(config)?,
    };
    let settings = config.dagger_config().learner_settings(&config.policy);
    let (policy, reports) = bc_train(&ds, &settings, planned_rounds(config))?;
    let steps = reports.iter().map(|r| r.steps).sum();
    save_policy(&policy, &out.join("bc.ckpt"), steps)?;
    write_dataset(&ds, &out.join("dataset.jsonl"))?;
    let rows: Vec<EpochRow> = reports
        .iter()
        .enumerate()
        .flat_map(|(round, r)| {
            r.epoch_losses
                .iter()
                .enumerate()
                .map(move |(epoch, &loss)| EpochRow { round, epoch, loss })
        })
        .collect();
    write_csv(&rows, &out.join("train_loss.csv"))?;
    println!("behavior cloning on {} demonstrations -> {}", ds.len(), out.join("bc.ckpt").display());
    Ok(())
}

/// Learner for the configured method. Behavior cloning has no gate and is
/// rejected.
pub fn build_learner(config: &RunConfig) -> Result<Box<dyn Learner>> {
    let dc = config.dagger_config();
    let settings = dc.learner_settings(&config.policy);
    Ok(match config.method {
        Method::Diff => Box::new(DiffusionLearner::new(settings)?),
        Method::Ensemble => Box::new(EnsembleLearner::new(settings, dc.ensemble_members)?),
        Method::Bc => return Err(Error::Usage("behavior cloning has no interactive loop".into())),
    })
}

/// Writes the dataset, intervention log, trajectories and metric tables of
/// a finished interactive run.
pub fn write_run(out: &Path, run: &DaggerRun) -> Result<()> {
    write_dataset(&run.dataset, &out.join("dataset.jsonl"))?;
    write_trajectories(&run.log.episodes, &out.join("trajectories.jsonl"))?;
    write_json(&run.log, &out.join("interventions.json"))?;
    write_csv(&run.metrics, &out.join("metrics.csv"))?;
    write_csv(&run.updates, &out.join("update_timing.csv"))?;
    Ok(())
}

pub fn dagger(config: &RunConfig) -> Result<()> {
    if config.method == Method::Bc {
        return train_bc(config, None);
    }
    let out = prepare_out(config)?;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let task = config.env.build()?;
    let mut learner = build_learner(config)?;
    let run = run_dagger(
        task.as_ref(),
        learner.as_mut(),
        &config.dagger_config(),
        &mut ScriptedExpert,
        &mut (),
        Some(&ckpt_dir),
    )?;
    write_run(&out, &run)?;
    println!(
        "{} rollouts, {} interventions ({} queries, {} timeouts), {} updates -> {}",
        run.log.episodes.len(),
        run.log.interventions(),
        run.log.queries(),
        run.log.timeouts(),
        run.metrics.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    checkpoint: PathBuf,
    episodes: usize,
    success_rate: f64,
    tau: Option<f64>,
    matrix: Option<crate::eval::ConfusionMatrix>,
    metrics: Option<crate::eval::Metrics>,
}

pub fn eval(config: &RunConfig, checkpoint: &Path, episodes: Option<usize>, dataset: Option<&Path>) -> Result<()> {
    if !checkpoint.exists() {
        return Err(Error::Usage(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let policy = load_policy(checkpoint)?;
    let task = config.env.build()?;
    let n = episodes.unwrap_or(config.eval.episodes);
    let planner = PolicyPlanner {
        policy: &policy,
        loss_batch: config.dagger.loss_batch,
    };
    let success = success_rate(task.as_ref(), &planner, n, config.seed)?;
    let guess = checkpoint
        .parent()
        .and_then(Path::parent)
        .map(|p| p.join("dataset.jsonl"))
        .filter(|p| p.exists());
    let data_path = dataset.map(Path::to_path_buf).or(guess);
    let mut summary = EvalSummary {
        checkpoint: checkpoint.to_path_buf(),
        episodes: n,
        success_rate: success.rate,
        tau: None,
        matrix: None,
        metrics: None,
    };
    if let Some(p) = data_path {
        let ds = read_dataset(&p)?;
        let table = policy.normalize_table(&ds.table()?);
        let dc = config.dagger_config();
        let fit_seed = dc.learner_settings(&config.policy).gate_fit_seed();
        let losses = reference_losses(&policy, &table, dc.loss_batch, fit_seed)?;
        let gate = QueryGate::fit(&losses, dc.alpha, dc.patience)?;
        let actor = ShadowActor {
            policy: &policy,
            signal: Signal::Loss { batch: dc.loss_batch },
        };
        let ev = evaluate_queries(task.as_ref(), &actor, &gate, n, config.seed)?;
        summary.tau = Some(gate.tau());
        summary.matrix = Some(ev.matrix);
        summary.metrics = Some(ev.metrics);
    }
    let out = prepare_out(config)?;
    write_json(&summary, &out.join("eval.json"))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct RegionsSummary {
    tau: f64,
    rows: Vec<crate::eval::RegionRow>,
    loss_ood_vs_unimodal: Option<crate::eval::RankTest>,
    loss_ood_vs_multimodal: Option<crate::eval::RankTest>,
    score_multimodal_vs_unimodal: Option<crate::eval::RankTest>,
    multimodal_fraction_above_tau: f64,
}

pub fn regions(config: &RunConfig) -> Result<()> {
    let out = prepare_out(config)?;
    let task = config.env.build()?;
    let ds = final_demos(config)?;
    let dc = config.dagger_config();
    let settings = dc.learner_settings(&config.policy);
    let mut diff = DiffusionLearner::new(settings.clone())?;
    diff.update(&ds, 0)?;
    let mut ens = EnsembleLearner::new(settings, dc.ensemble_members)?;
    ens.train_members(&ds, 0)?;
    let probes = task.probe_set(config.eval.probes_per_region, config.seed);
    let ra = region_analysis(diff.policy(), Some(ens.ensemble()), &probes, dc.loss_batch, config.seed)?;
    let gate = diff.gate().expect("fitted by update");
    let (um, mm, ood) = (
        RegionLabel::IdUnimodal,
        RegionLabel::IdMultimodal,
        RegionLabel::OutOfDistribution,
    );
    let mm_losses = ra.losses(mm);
    let summary = RegionsSummary {
        tau: gate.tau(),
        rows: ra.rows.clone(),
        loss_ood_vs_unimodal: mann_whitney_greater(&ra.losses(ood), &ra.losses(um)),
        loss_ood_vs_multimodal: mann_whitney_greater(&ra.losses(ood), &mm_losses),
        score_multimodal_vs_unimodal: mann_whitney_greater(&ra.scores(mm), &ra.scores(um)),
        multimodal_fraction_above_tau: mm_losses.iter().filter(|&&l| gate.is_violation(l)).count() as f64
            / mm_losses.len().max(1) as f64,
    };
    write_csv(&ra.rows, &out.join("regions.csv"))?;
    let probe_lines: String = ra
        .probes
        .iter()
        .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()?;
    fs::write(out.join("probes.jsonl"), probe_lines)?;
    write_json(&summary, &out.join("regions.json"))?;
    println!("{:<14} {:>6} {:>12} {:>12}", "region", "count", "mean_loss", "mean_score");
    for r in &ra.rows {
        println!(
            "{:<14} {:>6} {:>12.5} {:>12.5}",
            r.label.as_str(),
            r.count,
            r.mean_loss,
            r.mean_score.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn bench(config: &RunConfig) -> Result<()> {
    let out = prepare_out(config)?;
    let ds = final_demos(config)?;
    let dc = config.dagger_config();
    let settings = dc.learner_settings(&config.policy);
    let n = config.eval.timing_decisions;
    let reports = vec![
        measure_phases(Method::Diff, &ds, &settings, dc.ensemble_members, n)?,
        measure_phases(Method::Ensemble, &ds, &settings, dc.ensemble_members, n)?,
    ];
    write_csv(&reports, &out.join("timing.csv"))?;
    write_json(&reports, &out.join("timing.json"))?;
    let (d, e) = (&reports[0], &reports[1]);
    println!("phase        diff(s)    ensemble(s)  ratio");
    for (name, a, b) in [
        ("training", d.train_secs, e.train_secs),
        ("threshold", d.threshold_secs, e.threshold_secs),
        ("inference", d.inference_secs, e.inference_secs),
    ] {
        println!("{name:<10} {a:>10.4} {b:>12.4} {:>7.2}", b / a);
    }
    Ok(())
}
