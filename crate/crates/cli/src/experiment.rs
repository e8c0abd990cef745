//! The three-variant experiment: data, training, evaluation and export.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rcmdp::rng::domain;
use rcmdp::trajectory::rollout_returns;
use rcmdp::{
    estimate_nominal, generate_dataset, robust_value_iteration, train, worst_case_transition_model, Ambiguity,
    Error, Mdp, Policy, Report, RunSeed, Summary, TransitionModel, ValueKind,
};
use serde::Serialize;

use crate::config::{RunConfig, Variant};
use crate::error::CliError;

pub const CSV_HEADER: [&str; 5] = ["seed", "rollout", "model", "return_g", "return_h"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalModel {
    True,
    WorstCase,
}

impl EvalModel {
    pub fn name(self) -> &'static str {
        match self {
            EvalModel::True => "true",
            EvalModel::WorstCase => "worst-case",
        }
    }
}

/// Discounted cost and constraint returns of one evaluation rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rollout {
    pub g: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean_g: f64,
    pub std_g: f64,
    pub mean_h: f64,
    pub std_h: f64,
}

impl Moments {
    fn of(rollouts: &[Rollout]) -> Self {
        let n = rollouts.len() as f64;
        let mean = |f: fn(&Rollout) -> f64| rollouts.iter().map(f).sum::<f64>() / n;
        let (mean_g, mean_h) = (mean(|r| r.g), mean(|r| r.h));
        let std = |f: fn(&Rollout) -> f64, m: f64| {
            if rollouts.len() < 2 {
                0.0
            } else {
                (rollouts.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        };
        Self { mean_g, std_g: std(|r| r.g, mean_g), mean_h, std_h: std(|r| r.h, mean_h) }
    }
}

/// Everything produced by one (seed, variant) run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub variant: Variant,
    pub d0: f64,
    pub policy: Policy,
    pub report: Report,
    pub true_rollouts: Vec<Rollout>,
    pub worst_rollouts: Vec<Rollout>,
    /// Robust `E[u]` within `d0 * (1 + tolerance)`.
    pub within_tolerance: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub d0: f64,
    pub final_lambda: f64,
    pub evaluation: Summary,
    pub within_tolerance: bool,
    #[serde(rename = "true")]
    pub true_model: Moments,
    pub worst_case: Moments,
    pub lambda_trace: PathBuf,
    pub theta: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    /// Mean of `-g` over every rollout of every seed.
    pub mean_true_return: f64,
    pub mean_worst_case_return: f64,
    pub fraction_within_tolerance: f64,
    /// Seeds whose robust `E[u]` exceeds `d0`.
    pub fraction_violating: f64,
    pub runs: Vec<RunSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub tolerance: f64,
    pub variants: Vec<VariantSummary>,
}

/// Per-seed data shared by all variants.
struct SeedContext {
    seed: u64,
    amb: Ambiguity,
    d0: f64,
}

fn seed_context(config: &RunConfig, mdp: &Mdp, seed: u64) -> Result<SeedContext, CliError> {
    let mut rng = RunSeed(seed).stream(domain::DATASET, 0);
    let data = generate_dataset(mdp, config.dataset.n_per_pair, config.dataset.delta, &mut rng)?;
    let amb = estimate_nominal(&data, config.dataset.smoothing)?;
    let d0 = config.budget_rule().resolve(mdp, &amb, config.train.critic)?;
    Ok(SeedContext { seed, amb, d0 })
}

fn rollouts<M: TransitionModel<f64> + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    model: &M,
    seed: u64,
    stream: u64,
    count: usize,
    horizon: usize,
) -> Vec<Rollout> {
    (0..count)
        .map(|r| {
            let mut rng = RunSeed(seed).stream(stream, r as u64);
            let (g, h) = rollout_returns(mdp, policy, model, horizon, &mut rng);
            Rollout { g, h }
        })
        .collect()
}

fn run_variant(config: &RunConfig, mdp: &Mdp, ctx: &SeedContext, variant: Variant) -> Result<RunOutcome, CliError> {
    let train_config = config.train_config(variant, ctx.d0)?;
    let (policy, report) = train(mdp, &ctx.amb, &train_config, RunSeed(ctx.seed))?;

    let critic = robust_value_iteration(mdp, &ctx.amb, ValueKind::Cost, Some(&policy), train_config.critic)?;
    let worst = worst_case_transition_model(mdp, &ctx.amb, &critic, train_config.sense)?;
    let (n, horizon) = (config.evaluation.rollouts, config.evaluation_horizon(variant)?);
    let true_rollouts = rollouts(mdp, &policy, mdp.true_transitions(), ctx.seed, domain::EVAL_TRUE, n, horizon);
    let worst_rollouts = rollouts(mdp, &policy, &worst, ctx.seed, domain::EVAL_WORST, n, horizon);

    let within_tolerance = report.summary.robust_constraint <= ctx.d0 * (1.0 + config.evaluation.tolerance);
    Ok(RunOutcome { seed: ctx.seed, variant, d0: ctx.d0, policy, report, true_rollouts, worst_rollouts, within_tolerance })
}

/// Trains and evaluates every requested variant on every seed.
///
/// Runs execute in parallel; the result order is seed-major, then variant,
/// exactly as configured.
pub fn run_all(config: &RunConfig, variants: &[Variant]) -> Result<Vec<RunOutcome>, (Option<(u64, Variant)>, CliError)> {
    config.validate().map_err(|e| (None, e))?;
    let mdp = config.environment.build().map_err(|e| (None, e))?;
    let contexts: Vec<SeedContext> = config
        .seeds
        .par_iter()
        .map(|&seed| seed_context(config, &mdp, seed))
        .collect::<Result<_, _>>()
        .map_err(|e| (None, e))?;
    let jobs: Vec<(&SeedContext, Variant)> =
        contexts.iter().flat_map(|ctx| variants.iter().map(move |&v| (ctx, v))).collect();
    jobs.par_iter()
        .map(|&(ctx, v)| run_variant(config, &mdp, ctx, v).map_err(|e| (Some((ctx.seed, v)), e)))
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_returns(path: &Path, outcomes: &[&RunOutcome]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    for o in outcomes {
        for (model, rows) in [(EvalModel::True, &o.true_rollouts), (EvalModel::WorstCase, &o.worst_rollouts)] {
            for (i, r) in rows.iter().enumerate() {
                w.serialize((o.seed, i, model.name(), r.g, r.h))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes all artifacts for finished runs and returns the summary.
pub fn export(config: &RunConfig, out: &Path, variants: &[Variant], outcomes: &[RunOutcome]) -> Result<ExperimentSummary, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut summaries = Vec::new();
    for &variant in variants {
        let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.variant == variant).collect();
        write_returns(&out.join(format!("returns_{variant}.csv")), &runs)?;
        let mut run_summaries = Vec::new();
        for o in &runs {
            let lambda_trace = PathBuf::from(format!("lambda_trace_{variant}_{}.csv", o.seed));
            let theta = PathBuf::from(format!("theta_{variant}_{}.json", o.seed));
            write(&out.join(&lambda_trace), &o.report.to_csv())?;
            write(&out.join(&theta), &serde_json::to_string_pretty(&o.policy).map_err(Error::from)?)?;
            run_summaries.push(RunSummary {
                seed: o.seed,
                d0: o.d0,
                final_lambda: o.report.episodes.last().map_or(0.0, |r| r.lambda),
                evaluation: o.report.summary.clone(),
                within_tolerance: o.within_tolerance,
                true_model: Moments::of(&o.true_rollouts),
                worst_case: Moments::of(&o.worst_rollouts),
                lambda_trace,
                theta,
            });
        }
        let mean_return = |pick: fn(&RunOutcome) -> &Vec<Rollout>| {
            let all: Vec<f64> = runs.iter().flat_map(|o| pick(o).iter().map(|r| -r.g)).collect();
            all.iter().sum::<f64>() / all.len().max(1) as f64
        };
        let frac = |f: fn(&RunOutcome) -> bool| runs.iter().filter(|o| f(o)).count() as f64 / runs.len().max(1) as f64;
        summaries.push(VariantSummary {
            variant,
            mean_true_return: mean_return(|o| &o.true_rollouts),
            mean_worst_case_return: mean_return(|o| &o.worst_rollouts),
            fraction_within_tolerance: frac(|o| o.within_tolerance),
            fraction_violating: frac(|o| o.report.summary.robust_constraint > o.d0),
            runs: run_summaries,
        });
    }
    let summary = ExperimentSummary { tolerance: config.evaluation.tolerance, variants: summaries };
    write(&out.join("summary.json"), &serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    Ok(summary)
}

/// Full experiment: train, evaluate, and write artifacts into `config.output_dir`.
///
/// A failing run leaves `diagnostics.json` in the output directory.
pub fn run_experiment(config: &RunConfig, variants: &[Variant]) -> Result<ExperimentSummary, CliError> {
    let out = &config.output_dir;
    match run_all(config, variants) {
        Ok(outcomes) => export(config, out, variants, &outcomes),
        Err((run, err)) => {
            if !matches!(err, CliError::Usage(_)) {
                let diag = serde_json::json!({
                    "seed": run.map(|r| r.0),
                    "variant": run.map(|r| r.1),
                    "error": err.to_string(),
                });
                fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
                write(&out.join("diagnostics.json"), &serde_json::to_string_pretty(&diag).map_err(Error::from)?)?;
            }
            Err(err)
        }
    }
}
