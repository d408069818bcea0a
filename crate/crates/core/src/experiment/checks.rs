//! Runtime invariant and diagnostic checks.

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::LoadedScenario;
use crate::channel::{ChannelModel, ChannelStats, IrsChannel, LinkStats, Scenario};
use crate::error::Result;
use crate::irs::{IrsModel, ParameterBox};
use crate::optimizer::{izosga_run, lemma3_check, moreau_gradient_proxy, OptimizerConfig};
use crate::oracle::{wmmse, OracleBudget};
use crate::rng::{complex_normal, stream};
use crate::synthetic::{AffineChannel, QuadraticObjective};
use crate::utility::{Precoder, RateModel, Utility};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// A small Rician scenario for self-contained checks.
pub fn small_scenario(users: usize, antennas: usize, elements: usize, seed: u64) -> Scenario {
    let link = |gain| LinkStats {
        gain,
        rician_factor: 1.0,
    };
    Scenario {
        tx_antennas: antennas,
        users,
        irs_elements: elements,
        power_budget: 1.0,
        noise_vars: vec![0.5; users],
        weights: (0..users).map(|k| 1.0 + 0.25 * k as f64).collect(),
        channel: ChannelStats {
            direct: link(0.2),
            tx_irs: link(1.0),
            irs_user: link(1.0),
            irs_correlation: 0.3,
            geometry_seed: seed,
        },
    }
}

/// Relative error between the chain-rule gradient of `θ ↦ F(W, H(θ, ω))` and
/// central differences with step `h`.
pub fn gradient_check<C: ChannelModel>(
    model: &C,
    rate: &RateModel,
    realization: &C::Realization,
    theta: &[f64],
    w: &Precoder,
    h: f64,
) -> Result<f64> {
    let channel = model.compose(realization, theta)?;
    let g = rate.cogradient(w, &channel)?;
    let analytic = model.gradient(realization, theta, &g)?;
    let mut diff = 0.0;
    let mut norm = 0.0;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let fp = rate.value(w, &model.compose(realization, &probe)?)?;
        probe[i] = theta[i] - h;
        let fm = rate.value(w, &model.compose(realization, &probe)?)?;
        probe[i] = theta[i];
        let fd = (fp - fm) / (2.0 * h);
        diff += (fd - analytic[i]).powi(2);
        norm += fd * fd;
    }
    Ok((diff / norm.max(f64::MIN_POSITIVE)).sqrt())
}

/// A random feasible precoder at full power.
pub fn random_precoder(users: usize, antennas: usize, power: f64, seed: u64) -> Precoder {
    let mut rng = stream(seed);
    let mut w = Precoder {
        users,
        antennas,
        data: (0..users * antennas).map(|_| complex_normal(&mut rng)).collect(),
    };
    let p = w.power();
    w.scale((power / p).sqrt());
    w
}

fn check_gradient(model: &IrsChannel, rate: &RateModel, bounds: &ParameterBox, instances: u64) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = stream(0x6772_6164 + i);
        let real = model.sample(&mut rng);
        let theta = bounds.sample_uniform(&mut rng);
        let w = random_precoder(model.users(), model.antennas(), rate.power_budget, 0x7072_6563 + i);
        worst = worst.max(gradient_check(model, rate, &real, &theta, &w, 1e-6)?);
    }
    Ok(CheckOutcome::new(
        "gradient_matches_finite_differences",
        worst <= 1e-5,
        format!("worst relative error {worst:.3e} over {instances} instances (tolerance 1e-5)"),
    ))
}

fn check_wmmse(model: &IrsChannel, rate: &RateModel, bounds: &ParameterBox) -> Result<CheckOutcome> {
    let mut violations = 0;
    let mut infeasible = 0;
    let instances = 20;
    for i in 0..instances {
        let mut rng = stream(0x776d_6d73 + i);
        let real = model.sample(&mut rng);
        let theta = bounds.sample_uniform(&mut rng);
        let h = model.compose(&real, &theta)?;
        let (w, trace) = wmmse(&h, rate, &OracleBudget::iterations(30), None)?;
        if trace
            .sumrate_per_iteration
            .windows(2)
            .any(|p| p[1] < p[0] - 1e-9 * p[0].abs().max(1.0))
        {
            violations += 1;
        }
        if w.power() > rate.power_budget * (1.0 + 1e-9) {
            infeasible += 1;
        }
    }
    Ok(CheckOutcome::new(
        "wmmse_monotone_and_feasible",
        violations == 0 && infeasible == 0,
        format!("{violations} non-monotone and {infeasible} infeasible traces out of {instances}"),
    ))
}

fn check_lemma3() -> Result<CheckOutcome> {
    let model = AffineChannel::random(2, 2, 6, 0.1, 11);
    let rate = RateModel::uniform(2, 1.0, 1.0);
    let bounds = ParameterBox::new(vec![-1.0; 6], vec![1.0; 6])?;
    let config = OptimizerConfig::new(2000, 0.01, 0.01, 3, 5);
    let run = izosga_run(&model, &rate, &bounds, &config, &[0.0; 6])?;
    let (bound, ok) = lemma3_check(&run);
    Ok(CheckOutcome::new(
        "second_moment_bound",
        ok,
        format!("mean |D|^2 = {:.4e}, bound = {bound:.4e}", run.diagnostics.mean_sq_grad),
    ))
}

fn check_moreau() -> Result<CheckOutcome> {
    let objective = QuadraticObjective {
        center: vec![0.0; 3],
        curvature: 1.0,
    };
    let bounds = ParameterBox::new(vec![-100.0; 3], vec![100.0; 3])?;
    let proxy = moreau_gradient_proxy(&objective, &[1.0, 0.0, 0.0], 2.0, &bounds, 200)?;
    let err = (proxy - 2.0 / 3.0).abs();
    Ok(CheckOutcome::new(
        "moreau_proxy_closed_form",
        err <= 1e-3,
        format!("proxy {proxy:.6}, expected 2/3 (error {err:.2e})"),
    ))
}

fn check_checkpoint(bounds: &ParameterBox, kind: crate::irs::IrsKind) -> Result<CheckOutcome> {
    let theta = bounds.sample_uniform(&mut stream(0x6370));
    let cp = Checkpoint::new(kind, bounds, &theta, "check", Default::default())?;
    let text = serde_json::to_string(&cp).map_err(|e| crate::Error::Checkpoint(e.to_string()))?;
    let back: Checkpoint = serde_json::from_str(&text).map_err(|e| crate::Error::Checkpoint(e.to_string()))?;
    let theta_back = back.theta()?;
    let exact = theta.iter().zip(&theta_back).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(CheckOutcome::new(
        "checkpoint_round_trip",
        exact,
        format!("{} values, bit-identical: {exact}", theta.len()),
    ))
}

fn wrap(name: &str, result: Result<CheckOutcome>) -> CheckOutcome {
    result.unwrap_or_else(|e| CheckOutcome::new(name, false, format!("error: {e}")))
}

/// Runs the suite on the given scenario, or on a small built-in one.
pub fn run_checks(scenario: Option<&LoadedScenario>) -> Vec<CheckOutcome> {
    let (sc, irs, bounds, kind) = match scenario {
        Some(l) => (l.scenario.clone(), l.irs.clone(), l.bounds.clone(), l.initial.kind),
        None => {
            let sc = small_scenario(3, 2, 6, 1);
            let bounds = ParameterBox::ideal(6, (0.0, 1.0), (-std::f64::consts::TAU, std::f64::consts::TAU))
                .expect("valid box");
            (sc, IrsModel::Ideal, bounds, crate::irs::IrsKind::Ideal)
        }
    };
    let rate = sc.rate_model();
    let mut out = Vec::new();
    match IrsChannel::new(sc, irs) {
        Ok(model) => {
            out.push(wrap("gradient_matches_finite_differences", check_gradient(&model, &rate, &bounds, 5)));
            out.push(wrap("wmmse_monotone_and_feasible", check_wmmse(&model, &rate, &bounds)));
        }
        Err(e) => out.push(CheckOutcome::new("scenario_valid", false, e.to_string())),
    }
    out.push(wrap("second_moment_bound", check_lemma3()));
    out.push(wrap("moreau_proxy_closed_form", check_moreau()));
    out.push(wrap("checkpoint_round_trip", check_checkpoint(&bounds, kind)));
    out
}
