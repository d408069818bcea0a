//! The experiment recipes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::{CheckpointIterate, ExperimentSpec, Recipe};
use super::output::{emit_csv, emit_json, emit_svg, CurveAggregate, Stats};
use crate::channel::{ChannelModel, IrsChannel};
use crate::error::{Error, Result};
use crate::optimizer::{izosga_run, lemma3_check, BudgetSchedule, RunResult};
use crate::oracle::{wmmse, OracleBudget};
use crate::rng::{derive_seed, stream};
use crate::utility::{Precoder, RateModel};

/// Stream index for initial and baseline parameters.
pub const THETA_STREAM: u64 = u64::MAX;
/// Offset of the baseline channel streams (plus the configuration index).
pub const BASELINE_STREAM: u64 = 1 << 32;
/// Offset of the deployment channel streams.
pub const DEPLOY_STREAM: u64 = 1 << 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 picks the number of CPUs.
    pub workers: usize,
    pub svg: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 0, svg: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub seed_index: u64,
    pub run_seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub final_window_mean: Option<f64>,
    pub returned_index: Option<usize>,
    pub eps_bar: Option<f64>,
    pub mean_sq_grad: Option<f64>,
    pub lemma3_bound: Option<f64>,
    pub lemma3_satisfied: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub label: String,
    pub final_window_mean: f64,
    pub final_window_std: f64,
    pub runs: usize,
    /// `(start, mean over the segment)` for scheduled runs.
    pub segment_means: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeployRow {
    pub budget: u32,
    pub trained: Stats,
    pub random: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub recipe: Recipe,
    pub irs_kind: String,
    pub scenario_fingerprint: String,
    pub seeds: Vec<u64>,
    pub curves: Vec<CurveSummary>,
    pub baselines: Vec<CurveSummary>,
    pub deploy: Vec<DeployRow>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<String>,
    pub all_ok: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub curves: Vec<CurveAggregate>,
    pub baselines: Vec<CurveAggregate>,
    pub deploy: Vec<DeployRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn curve(&self, label: &str) -> Option<&CurveAggregate> {
        self.curves.iter().find(|c| c.label == label)
    }

    pub fn baseline(&self, label: &str) -> Option<&CurveAggregate> {
        self.baselines.iter().find(|c| c.label == label)
    }

    pub fn all_ok(&self) -> bool {
        self.summary.all_ok
    }
}

struct Job {
    label: String,
    config_index: u64,
    schedule: BudgetSchedule,
}

struct Finished {
    label: String,
    seed_index: u64,
    run_seed: u64,
    result: Result<RunResult>,
}

struct Context {
    model: IrsChannel,
    rate: RateModel,
}

impl Context {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        let sc = &spec.scenario;
        Ok(Self {
            model: IrsChannel::new(sc.scenario.clone(), sc.irs.clone())?,
            rate: sc.scenario.rate_model(),
        })
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn run_jobs(spec: &ExperimentSpec, ctx: &Context, jobs: &[Job], options: &RunOptions) -> Result<Vec<Finished>> {
    let seeds = spec.seeds();
    let pairs: Vec<(usize, u64)> = (0..jobs.len()).flat_map(|j| seeds.iter().map(move |&s| (j, s))).collect();
    let base_seed = spec.file.seed;
    let work = |&(j, s): &(usize, u64)| -> Finished {
        let job = &jobs[j];
        let run_seed = derive_seed(base_seed, s, job.config_index);
        let result = spec.file.optimizer.config(job.schedule.clone(), run_seed).and_then(|config| {
            let theta0 = spec.scenario.initial_theta(derive_seed(base_seed, s, THETA_STREAM));
            izosga_run(&ctx.model, &ctx.rate, &spec.scenario.bounds, &config, &theta0)
        });
        if let Err(e) = &result {
            warn!("run {} seed {s} failed: {e}", job.label);
        }
        Finished {
            label: job.label.clone(),
            seed_index: s,
            run_seed,
            result,
        }
    };
    let mut done: Vec<Finished> = pool(options.workers)?.install(|| pairs.par_iter().map(work).collect());
    done.sort_by_key(|f| (f.seed_index, jobs.iter().position(|j| j.label == f.label)));
    Ok(done)
}

fn record(f: &Finished, window: f64) -> RunRecord {
    match &f.result {
        Ok(run) => {
            let (bound, satisfied) = lemma3_check(run);
            RunRecord {
                label: f.label.clone(),
                seed_index: f.seed_index,
                run_seed: f.run_seed,
                ok: satisfied,
                error: (!satisfied).then(|| "mean squared sample gradient exceeds the second-moment bound".into()),
                final_window_mean: Some(run.final_window_mean(window)),
                returned_index: Some(run.returned_index),
                eps_bar: run.diagnostics.eps_bar,
                mean_sq_grad: Some(run.diagnostics.mean_sq_grad),
                lemma3_bound: Some(bound),
                lemma3_satisfied: Some(satisfied),
            }
        }
        Err(e) => RunRecord {
            label: f.label.clone(),
            seed_index: f.seed_index,
            run_seed: f.run_seed,
            ok: false,
            error: Some(e.to_string()),
            final_window_mean: None,
            returned_index: None,
            eps_bar: None,
            mean_sq_grad: None,
            lemma3_bound: None,
            lemma3_satisfied: None,
        },
    }
}

fn aggregate(label: &str, finished: &[Finished], window: f64) -> Option<CurveAggregate> {
    let runs: Vec<&RunResult> = finished
        .iter()
        .filter(|f| f.label == label)
        .filter_map(|f| f.result.as_ref().ok())
        .collect();
    let first = runs.first()?;
    let curves: Vec<&[f64]> = runs.iter().map(|r| r.sumrate_curve.as_slice()).collect();
    let errors: Vec<Option<&[Option<f64>]>> = runs.iter().map(|r| r.error_curve.as_deref()).collect();
    CurveAggregate::from_runs(label, &curves, &first.budget_curve, &errors, window).ok()
}

fn summarize(curve: &CurveAggregate, marks: &[usize]) -> CurveSummary {
    let n = curve.len();
    let segment_means = marks
        .iter()
        .enumerate()
        .filter(|(_, &start)| start < n)
        .map(|(i, &start)| {
            let end = marks.get(i + 1).copied().unwrap_or(n).min(n);
            (start, curve.segment_mean(start..end))
        })
        .collect();
    CurveSummary {
        label: curve.label.clone(),
        final_window_mean: curve.final_window_stats.mean,
        final_window_std: curve.final_window_stats.std,
        runs: curve.final_window_stats.count,
        segment_means,
    }
}

/// Utility of the communicated precoder at a fixed `θ` for `T+1` fresh draws.
pub fn fixed_theta_curve<C: ChannelModel>(
    model: &C,
    rate: &RateModel,
    theta: &[f64],
    schedule: &BudgetSchedule,
    iterations: usize,
    warm_start: bool,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream(seed);
    let mut warm: Option<Precoder> = None;
    let mut curve = Vec::with_capacity(iterations + 1);
    for t in 0..=iterations {
        let real = model.sample(&mut rng);
        let h = model.compose(&real, theta)?;
        let start = if warm_start { warm.as_ref() } else { None };
        let (w, trace) = wmmse(&h, rate, &schedule.eval(t), start)?;
        curve.push(trace.final_sumrate().unwrap_or(0.0));
        warm = Some(w);
    }
    Ok(curve)
}

fn baselines(spec: &ExperimentSpec, ctx: &Context, jobs: &[Job], options: &RunOptions) -> Result<Vec<CurveAggregate>> {
    let seeds = spec.seeds();
    let opt = &spec.file.optimizer;
    let base_seed = spec.file.seed;
    let work = |&(j, s): &(usize, u64)| -> Result<Vec<f64>> {
        let job = &jobs[j];
        let theta = spec.scenario.bounds.sample_uniform(&mut stream(derive_seed(base_seed, s, THETA_STREAM)));
        let seed = derive_seed(base_seed, s, BASELINE_STREAM + job.config_index);
        fixed_theta_curve(&ctx.model, &ctx.rate, &theta, &job.schedule, opt.iterations, opt.warm_start, seed)
    };
    let pairs: Vec<(usize, u64)> = (0..jobs.len()).flat_map(|j| seeds.iter().map(move |&s| (j, s))).collect();
    let curves: Vec<Result<Vec<f64>>> = pool(options.workers)?.install(|| pairs.par_iter().map(work).collect());
    let mut out = Vec::with_capacity(jobs.len());
    for (j, job) in jobs.iter().enumerate() {
        let runs: Vec<Vec<f64>> = pairs
            .iter()
            .zip(&curves)
            .filter(|((jj, _), _)| *jj == j)
            .map(|(_, c)| c.as_ref().map(Clone::clone).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = runs.iter().map(Vec::as_slice).collect();
        let budget: Vec<u32> = (0..=opt.iterations).map(|t| job.schedule.eval(t).max_iterations).collect();
        out.push(CurveAggregate::from_runs(
            format!("baseline_{}", job.label),
            &refs,
            &budget,
            &[],
            opt.final_window_fraction,
        )?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &ExperimentSpec,
    finished: &[Finished],
    curves: Vec<CurveAggregate>,
    baselines: Vec<CurveAggregate>,
    deploy: Vec<DeployRow>,
    marks: &[usize],
    options: &RunOptions,
    mut files: Vec<PathBuf>,
) -> Result<ExperimentOutcome> {
    let out = spec.output_dir();
    let window = spec.file.optimizer.final_window_fraction;
    let runs: Vec<RunRecord> = finished.iter().map(|f| record(f, window)).collect();
    let failures: Vec<String> = runs
        .iter()
        .filter(|r| !r.ok)
        .map(|r| format!("{} seed {}: {}", r.label, r.seed_index, r.error.clone().unwrap_or_default()))
        .collect();
    for c in curves.iter().chain(&baselines) {
        let path = out.join(format!("{}.csv", c.label));
        emit_csv(&[c], &path)?;
        files.push(path);
    }
    if options.svg && !curves.is_empty() {
        let mut series: Vec<&CurveAggregate> = curves.iter().collect();
        series.extend(baselines.iter());
        let path = out.join(format!("{}.svg", spec.name()));
        emit_svg(&series, spec.name(), &path)?;
        files.push(path);
    }
    let summary = Summary {
        name: spec.name().to_string(),
        recipe: spec.file.recipe,
        irs_kind: spec.scenario.initial.kind.to_string(),
        scenario_fingerprint: spec.scenario.fingerprint.clone(),
        seeds: spec.seeds(),
        curves: curves.iter().map(|c| summarize(c, marks)).collect(),
        baselines: baselines.iter().map(|c| summarize(c, &[])).collect(),
        deploy: deploy.clone(),
        all_ok: failures.is_empty(),
        runs,
        failures,
    };
    let path = out.join("summary.json");
    emit_json(&summary, &path)?;
    files.push(path);
    info!("{}: wrote {} files to {}", spec.name(), files.len(), out.display());
    Ok(ExperimentOutcome {
        summary,
        curves,
        baselines,
        deploy,
        files,
    })
}

fn budget_jobs(budgets: &[u32]) -> Vec<Job> {
    budgets
        .iter()
        .enumerate()
        .map(|(i, &b)| Job {
            label: format!("budget_{b}"),
            config_index: i as u64,
            schedule: BudgetSchedule::constant(OracleBudget::iterations(b)),
        })
        .collect()
}

/// One run per (seed, budget) plus a never-updated random-surface baseline per budget.
pub fn run_sweep(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    let ctx = Context::new(spec)?;
    let jobs = budget_jobs(&spec.budgets());
    if jobs.is_empty() {
        return Err(Error::Config("sweep needs at least one budget".into()));
    }
    let window = spec.file.optimizer.final_window_fraction;
    let finished = run_jobs(spec, &ctx, &jobs, options)?;
    let curves = jobs.iter().filter_map(|j| aggregate(&j.label, &finished, window)).collect();
    let base = baselines(spec, &ctx, &jobs, options)?;
    finish(spec, &finished, curves, base, Vec::new(), &[], options, Vec::new())
}

/// The sweep with the varactor surface model.
pub fn run_physical(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    run_sweep(spec, options)
}

/// Piecewise-constant budget schedules, plus optional constant-budget references.
pub fn run_schedule(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    let section = spec
        .file
        .schedule
        .as_ref()
        .ok_or_else(|| Error::Config("recipe \"schedule\" needs a [schedule] section".into()))?;
    let ctx = Context::new(spec)?;
    let mut jobs = Vec::new();
    for (i, budgets) in section.schedules.iter().enumerate() {
        let marks: Vec<(usize, u32)> = section.marks.iter().copied().zip(budgets.iter().copied()).collect();
        let name: Vec<String> = budgets.iter().map(u32::to_string).collect();
        jobs.push(Job {
            label: format!("schedule_{}", name.join("-")),
            config_index: i as u64,
            schedule: BudgetSchedule::from_marks(&marks)?,
        });
    }
    for (i, &b) in section.constant_budgets.iter().enumerate() {
        jobs.push(Job {
            label: format!("budget_{b}"),
            config_index: (section.schedules.len() + i) as u64,
            schedule: BudgetSchedule::constant(OracleBudget::iterations(b)),
        });
    }
    let window = spec.file.optimizer.final_window_fraction;
    let finished = run_jobs(spec, &ctx, &jobs, options)?;
    let curves = jobs.iter().filter_map(|j| aggregate(&j.label, &finished, window)).collect();
    finish(spec, &finished, curves, Vec::new(), Vec::new(), &section.marks, options, Vec::new())
}

pub fn checkpoint_path(out: &Path, seed_index: u64) -> PathBuf {
    out.join("checkpoints").join(format!("seed_{seed_index}.json"))
}

/// Trains with the train budget, checkpoints every seed and evaluates the deploy table.
pub fn run_train_deploy(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    let td = spec
        .file
        .train_deploy
        .as_ref()
        .ok_or_else(|| Error::Config("recipe \"train-deploy\" needs a [train_deploy] section".into()))?;
    let ctx = Context::new(spec)?;
    let jobs = vec![Job {
        label: format!("train_budget_{}", td.train_budget),
        config_index: 0,
        schedule: BudgetSchedule::constant(OracleBudget::iterations(td.train_budget)),
    }];
    let window = spec.file.optimizer.final_window_fraction;
    let finished = run_jobs(spec, &ctx, &jobs, options)?;
    let mut files = Vec::new();
    for f in &finished {
        if let Ok(run) = &f.result {
            let (theta, index) = match td.checkpoint_iterate {
                CheckpointIterate::Final => (&run.final_theta, spec.file.optimizer.iterations),
                CheckpointIterate::Returned => (&run.returned_theta, run.returned_index),
            };
            let metadata = BTreeMap::from([
                ("experiment".to_string(), spec.name().to_string()),
                ("seed_index".to_string(), f.seed_index.to_string()),
                ("run_seed".to_string(), f.run_seed.to_string()),
                ("train_budget".to_string(), td.train_budget.to_string()),
                ("iterate".to_string(), index.to_string()),
                ("generator".to_string(), format!("irsopt {}", env!("CARGO_PKG_VERSION"))),
            ]);
            let cp = Checkpoint::new(spec.scenario.initial.kind, &spec.scenario.bounds, theta, &spec.scenario.fingerprint, metadata)?;
            let path = checkpoint_path(spec.output_dir(), f.seed_index);
            cp.save(&path)?;
            files.push(path);
        }
    }
    let curves: Vec<CurveAggregate> = aggregate(&jobs[0].label, &finished, window).into_iter().collect();
    let deploy = deploy_table(spec, &ctx, options)?;
    let path = spec.output_dir().join("deploy.csv");
    emit_deploy_csv(&deploy, &path)?;
    files.push(path);
    finish(spec, &finished, curves, Vec::new(), deploy, &[], options, files)
}

/// Evaluates existing checkpoints without training.
pub fn run_deploy(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    let ctx = Context::new(spec)?;
    let deploy = deploy_table(spec, &ctx, options)?;
    let path = spec.output_dir().join("deploy.csv");
    emit_deploy_csv(&deploy, &path)?;
    finish(spec, &[], Vec::new(), Vec::new(), deploy, &[], options, vec![path])
}

/// Mean utility over fresh draws with `θ` frozen, one value per budget.
pub fn deploy_means<C: ChannelModel>(
    model: &C,
    rate: &RateModel,
    theta: &[f64],
    budgets: &[u32],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream(seed);
    let mut sums = vec![0.0; budgets.len()];
    for _ in 0..samples {
        let real = model.sample(&mut rng);
        let h = model.compose(&real, theta)?;
        for (sum, &b) in sums.iter_mut().zip(budgets) {
            let (_, trace) = wmmse(&h, rate, &OracleBudget::iterations(b), None)?;
            *sum += trace.final_sumrate().unwrap_or(0.0);
        }
    }
    Ok(sums.into_iter().map(|s| s / samples as f64).collect())
}

fn deploy_table(spec: &ExperimentSpec, ctx: &Context, options: &RunOptions) -> Result<Vec<DeployRow>> {
    let td = spec
        .file
        .train_deploy
        .as_ref()
        .ok_or_else(|| Error::Config("deploy needs a [train_deploy] section".into()))?;
    let seeds = spec.seeds();
    let base_seed = spec.file.seed;
    let per_seed: Vec<Result<(Vec<f64>, Vec<f64>)>> = pool(options.workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&s| {
                let cp = Checkpoint::load(checkpoint_path(spec.output_dir(), s), &spec.scenario.fingerprint)?;
                if cp.irs_kind != spec.scenario.initial.kind {
                    return Err(Error::Checkpoint(format!(
                        "checkpoint for seed {s} holds a {} surface, scenario uses {}",
                        cp.irs_kind, spec.scenario.initial.kind
                    )));
                }
                let theta = cp.theta()?;
                let random = spec.scenario.bounds.sample_uniform(&mut stream(derive_seed(base_seed, s, THETA_STREAM)));
                let seed = derive_seed(base_seed, s, DEPLOY_STREAM);
                let trained = deploy_means(&ctx.model, &ctx.rate, &theta, &td.deploy_budgets, td.deploy_samples, seed)?;
                let random = deploy_means(&ctx.model, &ctx.rate, &random, &td.deploy_budgets, td.deploy_samples, seed)?;
                Ok((trained, random))
            })
            .collect()
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(td
        .deploy_budgets
        .iter()
        .enumerate()
        .map(|(i, &budget)| {
            let trained: Vec<f64> = per_seed.iter().map(|(t, _)| t[i]).collect();
            let random: Vec<f64> = per_seed.iter().map(|(_, r)| r[i]).collect();
            DeployRow {
                budget,
                trained: Stats::of(&trained),
                random: Stats::of(&random),
            }
        })
        .collect())
}

pub fn deploy_csv_string(rows: &[DeployRow]) -> String {
    let mut out = String::from("deploy_budget,trained_mean_bits,trained_std_bits,random_mean_bits,random_std_bits\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9}\n",
            r.budget, r.trained.mean, r.trained.std, r.random.mean, r.random.std
        ));
    }
    out
}

fn emit_deploy_csv(rows: &[DeployRow], path: &Path) -> Result<()> {
    super::output::emit_text(&deploy_csv_string(rows), path)
}

/// Dispatches on the recipe named in the experiment file.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome> {
    match spec.file.recipe {
        Recipe::Sweep => run_sweep(spec, options),
        Recipe::Physical => run_physical(spec, options),
        Recipe::Schedule => run_schedule(spec, options),
        Recipe::TrainDeploy => run_train_deploy(spec, options),
    }
}
