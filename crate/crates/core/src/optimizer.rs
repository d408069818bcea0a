//! Zeroth-order projected stochastic gradient ascent with an inexact oracle.
//!
//! Each outer iteration samples a channel realization and a Gaussian probe
//! direction, runs the budgeted WMMSE oracle on the communicated channel,
//! probes the channel at `θ ± μU`, and takes a projected step along the
//! two-point sample gradient. The returned iterate is drawn uniformly from
//! `{θ_0, …, θ_T}`.

use log::debug;
use rand::Rng;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::irs::ParameterBox;
use crate::oracle::{wmmse, OracleBudget};
use crate::rng::{mix64, stream};
use crate::utility::{Precoder, RateModel, Utility};
use crate::zograd::{sample_direction, sample_gradient, ChannelDelta};

const RETURN_INDEX_SALT: u64 = 0x7453_7461_7253_6565;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `η = √(Δ_f / (C₂ ρ (T+1)))` for harnesses where the constants are known.
    Theorem3 { delta_f: f64, c2: f64, rho: f64 },
}

impl StepSize {
    pub fn resolve(&self, iterations: usize) -> Result<f64> {
        let eta = match *self {
            StepSize::Constant(eta) => eta,
            StepSize::Theorem3 { delta_f, c2, rho } => {
                if !(delta_f >= 0.0 && c2 > 0.0 && rho > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "theorem3 step size needs delta_f >= 0, c2 > 0, rho > 0 (got {delta_f}, {c2}, {rho})"
                    )));
                }
                step_size_theorem3(delta_f, c2, rho, iterations)
            }
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be > 0, got {eta}")));
        }
        Ok(eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    Constant(f64),
    /// `μ = c / √(M_U (T+1))`.
    InverseSqrt { constant: f64 },
}

impl Smoothing {
    pub fn resolve(&self, effective_dim: usize, iterations: usize) -> Result<f64> {
        let mu = match *self {
            Smoothing::Constant(mu) => mu,
            Smoothing::InverseSqrt { constant } => constant * smoothing_rule(effective_dim, iterations),
        };
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing parameter must be > 0, got {mu}")));
        }
        Ok(mu)
    }
}

pub fn step_size_theorem3(delta_f: f64, c2: f64, rho: f64, iterations: usize) -> f64 {
    (delta_f / (c2 * rho * (iterations as f64 + 1.0))).sqrt()
}

/// `1/√(M_U (T+1))`; scale by the configured constant.
pub fn smoothing_rule(effective_dim: usize, iterations: usize) -> f64 {
    1.0 / ((effective_dim as f64) * (iterations as f64 + 1.0)).sqrt()
}

/// Piecewise-constant oracle budget over outer iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSchedule {
    entries: Vec<(usize, OracleBudget)>,
}

impl BudgetSchedule {
    pub fn new(entries: Vec<(usize, OracleBudget)>) -> Result<Self> {
        match entries.first() {
            None => return Err(Error::InvalidArgument("budget schedule is empty".into())),
            Some((start, _)) if *start != 0 => {
                return Err(Error::InvalidArgument(format!(
                    "budget schedule must start at iteration 0, starts at {start}"
                )))
            }
            _ => {}
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArgument(format!(
                    "budget schedule marks must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for (_, b) in &entries {
            b.validate()?;
        }
        Ok(Self { entries })
    }

    pub fn constant(budget: OracleBudget) -> Self {
        Self {
            entries: vec![(0, budget)],
        }
    }

    /// Marks paired with iteration counts, e.g. `[(0, 20), (8000, 10)]`.
    pub fn from_marks(marks: &[(usize, u32)]) -> Result<Self> {
        Self::new(marks.iter().map(|&(t, b)| (t, OracleBudget::iterations(b))).collect())
    }

    pub fn entries(&self) -> &[(usize, OracleBudget)] {
        &self.entries
    }

    /// Budget of the last entry whose start is `<= t`.
    pub fn eval(&self, t: usize) -> OracleBudget {
        let idx = self.entries.partition_point(|(start, _)| *start <= t);
        self.entries[idx.saturating_sub(1)].1
    }
}

pub fn budget_schedule_eval(schedule: &BudgetSchedule, t: usize) -> OracleBudget {
    schedule.eval(t)
}

/// Periodic value-gap measurement against a refined oracle output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorProbe {
    /// Extra WMMSE iterations run from `W̃_t` to build the reference.
    pub reference_iterations: u32,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoreauSettings {
    pub rho_bar: f64,
    pub samples: usize,
    pub inner_steps: usize,
    pub oracle_iterations: u32,
    /// Evaluated every `stride` iterations; never more often than `T/20`.
    pub stride: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub step_size: StepSize,
    pub smoothing: Smoothing,
    pub schedule: BudgetSchedule,
    pub warm_start: bool,
    pub seed: u64,
    /// Number of i.i.d. probe directions averaged per iteration (1 = plain).
    pub batch: usize,
    pub error_probe: Option<ErrorProbe>,
    pub snapshot_stride: Option<usize>,
    pub moreau: Option<MoreauSettings>,
}

impl OptimizerConfig {
    pub fn new(iterations: usize, step_size: f64, smoothing: f64, budget: u32, seed: u64) -> Self {
        Self {
            iterations,
            step_size: StepSize::Constant(step_size),
            smoothing: Smoothing::Constant(smoothing),
            schedule: BudgetSchedule::constant(OracleBudget::iterations(budget)),
            warm_start: true,
            seed,
            batch: 1,
            error_probe: None,
            snapshot_stride: None,
            moreau: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsReport {
    /// Largest cogradient norm seen (empirical `B_F`).
    pub empirical_bf: f64,
    /// Largest probe secant `‖Δ‖ / (2μ‖U‖)` seen (empirical `L_{H,0}`).
    pub empirical_lh0: f64,
    pub mean_sq_grad: f64,
    pub lemma3_bound: f64,
    pub parameter_dim: usize,
    pub moreau_proxy_curve: Option<Vec<(usize, f64)>>,
    /// Mean value gap over the probed iterations.
    pub eps_bar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub theta_snapshots: Vec<(usize, Vec<f64>)>,
    /// Utility of the communicated precoder at `θ_t`, `t = 0..=T`.
    pub sumrate_curve: Vec<f64>,
    pub budget_curve: Vec<u32>,
    pub error_curve: Option<Vec<Option<f64>>>,
    pub returned_index: usize,
    pub returned_theta: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub channel_compositions: usize,
    pub step_size: f64,
    pub smoothing: f64,
    pub diagnostics: DiagnosticsReport,
}

impl RunResult {
    /// Mean of the last `fraction` of the sumrate curve (at least one point).
    pub fn final_window_mean(&self, fraction: f64) -> f64 {
        window_mean(&self.sumrate_curve, fraction)
    }
}

pub fn window_mean(curve: &[f64], fraction: f64) -> f64 {
    let n = ((curve.len() as f64 * fraction).ceil() as usize).clamp(1, curve.len().max(1));
    let tail = &curve[curve.len() - n..];
    tail.iter().sum::<f64>() / n as f64
}

/// `4 B_F² L_{H,0}² (S² + 2S)` with `S` the parameter dimension.
pub fn lemma3_bound(bf: f64, lh0: f64, dim: usize) -> f64 {
    let s = dim as f64;
    4.0 * bf * bf * lh0 * lh0 * (s * s + 2.0 * s)
}

/// Returns the bound and whether the run's mean squared sample gradient respects it.
pub fn lemma3_check(run: &RunResult) -> (f64, bool) {
    let d = &run.diagnostics;
    let bound = lemma3_bound(d.empirical_bf, d.empirical_lh0, d.parameter_dim);
    (bound, d.mean_sq_grad <= bound)
}

/// Deterministic objective with gradient, for proximal-point diagnostics.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Sample-average estimate of `f(θ) = E max_W F(W, H(θ, ω))` over fixed
/// realizations, each solved by WMMSE from a cold start.
pub struct SampleAverageObjective<'a, C: ChannelModel> {
    pub model: &'a C,
    pub rate: &'a RateModel,
    pub realizations: Vec<C::Realization>,
    pub budget: OracleBudget,
}

impl<'a, C: ChannelModel> SampleAverageObjective<'a, C> {
    pub fn new(model: &'a C, rate: &'a RateModel, samples: usize, budget: OracleBudget, seed: u64) -> Self {
        let mut rng = stream(seed);
        let realizations = (0..samples.max(1)).map(|_| model.sample(&mut rng)).collect();
        Self {
            model,
            rate,
            realizations,
            budget,
        }
    }
}

impl<C: ChannelModel> Objective for SampleAverageObjective<'_, C> {
    fn dim(&self) -> usize {
        self.model.parameter_dim()
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for real in &self.realizations {
            let h = self.model.compose(real, theta)?;
            let (w, trace) = wmmse(&h, self.rate, &self.budget, None)?;
            value += trace.final_sumrate().unwrap_or(0.0);
            let g = self.rate.cogradient(&w, &h)?;
            for (a, b) in grad.iter_mut().zip(self.model.gradient(real, theta, &g)?) {
                *a += b;
            }
        }
        let n = self.realizations.len() as f64;
        grad.iter_mut().for_each(|x| *x /= n);
        Ok((value / n, grad))
    }
}

/// `ρ̄ ‖θ − prox(θ)‖`, with the proximal point of `−f + δ_Θ` found by
/// projected gradient descent on `u ↦ −f(u) + (ρ̄/2)‖u − θ‖²`.
pub fn moreau_gradient_proxy<O: Objective>(
    objective: &O,
    theta: &[f64],
    rho_bar: f64,
    bounds: &ParameterBox,
    inner_steps: usize,
) -> Result<f64> {
    if !(rho_bar > 0.0) {
        return Err(Error::InvalidArgument(format!("rho_bar must be > 0, got {rho_bar}")));
    }
    let theta = bounds.project(theta)?;
    let surrogate = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (f, g) = objective.value_and_gradient(u)?;
        let mut value = -f;
        let mut grad = Vec::with_capacity(u.len());
        for ((ui, ti), gi) in u.iter().zip(&theta).zip(g) {
            value += 0.5 * rho_bar * (ui - ti) * (ui - ti);
            grad.push(-gi + rho_bar * (ui - ti));
        }
        Ok((value, grad))
    };
    let mut u = theta.clone();
    let (mut value, mut grad) = surrogate(&u)?;
    let mut step = 1.0 / rho_bar;
    for _ in 0..inner_steps {
        let mut accepted = false;
        for _ in 0..50 {
            let mut cand: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            bounds.project_in_place(&mut cand);
            let moved: f64 = cand.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                accepted = false;
                break;
            }
            let (v, g) = surrogate(&cand)?;
            let linear: f64 = grad.iter().zip(cand.iter().zip(&u)).map(|(g, (a, b))| g * (a - b)).sum();
            if v <= value + linear + 0.5 * moved / step {
                u = cand;
                value = v;
                grad = g;
                step *= 1.25;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let dist: f64 = theta.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(rho_bar * dist)
}

/// Moreau proxy of the sample-average objective of a channel model.
#[allow(clippy::too_many_arguments)]
pub fn moreau_proxy_sampled<C: ChannelModel>(
    model: &C,
    rate: &RateModel,
    theta: &[f64],
    bounds: &ParameterBox,
    settings: &MoreauSettings,
) -> Result<f64> {
    let objective = SampleAverageObjective::new(
        model,
        rate,
        settings.samples,
        OracleBudget::iterations(settings.oracle_iterations),
        settings.seed,
    );
    moreau_gradient_proxy(&objective, theta, settings.rho_bar, bounds, settings.inner_steps)
}

/// Run the outer loop from `theta0` (projected onto the box first).
pub fn izosga_run<C: ChannelModel>(
    model: &C,
    rate: &RateModel,
    bounds: &ParameterBox,
    config: &OptimizerConfig,
    theta0: &[f64],
) -> Result<RunResult> {
    let dim = model.parameter_dim();
    crate::error::check_len("initial theta", dim, theta0.len())?;
    crate::error::check_len("box", dim, bounds.dim())?;
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    let t_max = config.iterations;
    let eta = config.step_size.resolve(t_max)?;
    let mu = config.smoothing.resolve(model.users() * model.antennas(), t_max)?;

    let mut rng = stream(config.seed);
    let returned_index = stream(mix64(config.seed ^ RETURN_INDEX_SALT)).random_range(0..=t_max);

    let mut theta = bounds.project(theta0)?;
    let mut returned_theta = None;
    let mut warm: Option<Precoder> = None;
    let mut sumrate_curve = Vec::with_capacity(t_max + 1);
    let mut budget_curve = Vec::with_capacity(t_max + 1);
    let mut error_curve = config.error_probe.map(|_| Vec::with_capacity(t_max + 1));
    let mut snapshots = Vec::new();
    let mut moreau_curve = config.moreau.map(|_| Vec::new());
    let moreau_stride = config
        .moreau
        .map(|m| m.stride.max(t_max / 20).max(1))
        .unwrap_or(usize::MAX);

    let mut diag = DiagnosticsReport {
        parameter_dim: dim,
        ..Default::default()
    };
    let mut sq_grad_sum = 0.0;
    let mut compositions = 0usize;
    let mut gap_sum = 0.0;
    let mut gap_count = 0usize;

    for t in 0..=t_max {
        if !bounds.contains(&theta) {
            return Err(Error::Infeasible(t));
        }
        if t == returned_index {
            returned_theta = Some(theta.clone());
        }
        if let Some(stride) = config.snapshot_stride {
            if t % stride.max(1) == 0 || t == t_max {
                snapshots.push((t, theta.clone()));
            }
        }
        if let (Some(curve), Some(settings)) = (moreau_curve.as_mut(), config.moreau.as_ref()) {
            if t % moreau_stride == 0 || t == t_max {
                curve.push((t, moreau_proxy_sampled(model, rate, &theta, bounds, settings)?));
            }
        }

        let realization = model.sample(&mut rng);
        let directions = (0..config.batch)
            .map(|_| sample_direction(&mut rng, dim))
            .collect::<Result<Vec<_>>>()?;

        let h = model.compose(&realization, &theta)?;
        compositions += 1;
        let budget = config.schedule.eval(t);
        let warm_start = if config.warm_start { warm.as_ref() } else { None };
        let (w, trace) = wmmse(&h, rate, &budget, warm_start)?;
        let value = trace.final_sumrate().unwrap_or(0.0);
        sumrate_curve.push(value);
        budget_curve.push(budget.max_iterations);

        if let (Some(curve), Some(probe)) = (error_curve.as_mut(), config.error_probe.as_ref()) {
            if t % probe.stride.max(1) == 0 {
                let (_, refined) = wmmse(&h, rate, &OracleBudget::iterations(probe.reference_iterations), Some(&w))?;
                let gap = (refined.final_sumrate().unwrap_or(value) - value).max(0.0);
                gap_sum += gap;
                gap_count += 1;
                curve.push(Some(gap));
            } else {
                curve.push(None);
            }
        }

        let g = rate.cogradient(&w, &h)?;
        diag.empirical_bf = diag.empirical_bf.max(g.norm());

        let mut step = vec![0.0; dim];
        for u in &directions {
            let plus: Vec<f64> = theta.iter().zip(&u.0).map(|(a, b)| a + mu * b).collect();
            let minus: Vec<f64> = theta.iter().zip(&u.0).map(|(a, b)| a - mu * b).collect();
            let hp = model.compose(&realization, &plus)?;
            let hm = model.compose(&realization, &minus)?;
            compositions += 2;
            let delta = ChannelDelta::between(&hp, &hm)?;
            let unorm = u.norm();
            if unorm > 0.0 {
                diag.empirical_lh0 = diag.empirical_lh0.max(delta.norm() / (2.0 * mu * unorm));
            }
            let d = sample_gradient(&delta, u, mu, &g)?;
            if !d.is_finite() {
                return Err(Error::NonFiniteGradient {
                    iteration: t,
                    detail: format!(
                        "|g| = {:e}, |delta| = {:e}, |u| = {:e}, mu = {mu:e}, sumrate = {value:e}",
                        g.norm(),
                        delta.norm(),
                        unorm
                    ),
                });
            }
            sq_grad_sum += d.norm_sqr();
            for (s, x) in step.iter_mut().zip(&d.0) {
                *s += x / config.batch as f64;
            }
        }

        if t < t_max {
            for (th, s) in theta.iter_mut().zip(&step) {
                *th += eta * s;
            }
            bounds.project_in_place(&mut theta);
        }
        warm = Some(w);
    }

    diag.mean_sq_grad = sq_grad_sum / ((t_max + 1) * config.batch) as f64;
    diag.lemma3_bound = lemma3_bound(diag.empirical_bf, diag.empirical_lh0, dim);
    diag.moreau_proxy_curve = moreau_curve;
    diag.eps_bar = (gap_count > 0).then(|| gap_sum / gap_count as f64);
    debug!(
        "run done: T={t_max} eta={eta:e} mu={mu:e} final window mean {:.4}",
        window_mean(&sumrate_curve, 0.05)
    );

    Ok(RunResult {
        theta_snapshots: snapshots,
        sumrate_curve,
        budget_curve,
        error_curve,
        returned_index,
        returned_theta: returned_theta.expect("returned index lies in 0..=T"),
        final_theta: theta,
        channel_compositions: compositions,
        step_size: eta,
        smoothing: mu,
        diagnostics: diag,
    })
}
