//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use irsopt::channel::{ChannelModel, EffectiveChannel, IrsChannel};
use irsopt::experiment::checks::{gradient_check, random_precoder, small_scenario};
use irsopt::experiment::{load_experiment, run_experiment, ExperimentOutcome, ExperimentSpec, RunOptions};
use irsopt::irs::{IrsModel, ParameterBox};
use irsopt::optimizer::{
    izosga_run, lemma3_check, moreau_gradient_proxy, moreau_proxy_sampled, MoreauSettings, OptimizerConfig,
};
use irsopt::oracle::{reference_solve, wmmse, OracleBudget};
use irsopt::rng::{complex_normal, stream};
use irsopt::synthetic::{AffineChannel, QuadraticObjective};
use irsopt::utility::{RateModel, Utility};
use irsopt::zograd::{sample_direction, sample_gradient, ChannelDelta};
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_shipped(name: &str, out: &Path, workers: usize) -> ExperimentOutcome {
    let mut spec: ExperimentSpec = load_experiment(configs().join(name)).expect("shipped config loads");
    spec.set_output_dir(out);
    run_experiment(&spec, &RunOptions { workers, svg: false }).expect("experiment runs")
}

fn final_mean(outcome: &ExperimentOutcome, label: &str) -> f64 {
    outcome.curve(label).unwrap_or_else(|| panic!("missing curve {label}")).final_window_stats.mean
}

fn gradient_correctness() -> Verdict {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = stream(0xacc1);
    for i in 0..100u64 {
        let users = rng.random_range(1..=4);
        let antennas = rng.random_range(1..=4);
        let elements = rng.random_range(1..=12);
        let sc = small_scenario(users, antennas, elements, i);
        let rate = sc.rate_model();
        let model = IrsChannel::new(sc, IrsModel::Ideal).unwrap();
        let bounds = ParameterBox::ideal(elements, (0.0, 1.0), (-std::f64::consts::TAU, std::f64::consts::TAU)).unwrap();
        let real = model.sample(&mut rng);
        let theta = bounds.sample_uniform(&mut rng);
        let w = random_precoder(users, antennas, rate.power_budget, 1000 + i);
        worst = worst.max(gradient_check(&model, &rate, &real, &theta, &w, 1e-6).unwrap());
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-5 && secs < 60.0,
        format!("worst relative error {worst:.2e} over 100 instances (<= 1e-5) in {secs:.2} s (< 60 s)"),
    )
}

fn estimator_unbiasedness() -> Verdict {
    let clock = Instant::now();
    let model = AffineChannel::random(2, 3, 5, 0.0, 0xacc2);
    let rate = RateModel::uniform(2, 1.0, 0.5);
    let theta = [0.3, -0.2, 0.1, 0.5, -0.4];
    let mu = 0.05;
    let mut rng = stream(0xacc3);
    let real = model.sample(&mut rng);
    let h = model.compose(&real, &theta).unwrap();
    let (w, _) = wmmse(&h, &rate, &OracleBudget::iterations(5), None).unwrap();
    let g = rate.cogradient(&w, &h).unwrap();
    let exact = model.gradient(&real, &theta, &g).unwrap();
    let n = 100_000;
    let d = theta.len();
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        let u = sample_direction(&mut rng, d).unwrap();
        let plus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t + mu * x).collect();
        let minus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t - mu * x).collect();
        let delta = ChannelDelta::between(&model.compose(&real, &plus).unwrap(), &model.compose(&real, &minus).unwrap()).unwrap();
        let sample = sample_gradient(&delta, &u, mu, &g).unwrap();
        for i in 0..d {
            sum[i] += sample.0[i];
            sum_sq[i] += sample.0[i] * sample.0[i];
        }
    }
    let mut worst_z: f64 = 0.0;
    for i in 0..d {
        let mean = sum[i] / n as f64;
        let var = (sum_sq[i] / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
        worst_z = worst_z.max((mean - exact[i]).abs() / (var / n as f64).sqrt());
    }
    let noisy = AffineChannel::random(2, 3, 5, 0.1, 0xacc4);
    let bounds = ParameterBox::new(vec![-1.0; 5], vec![1.0; 5]).unwrap();
    let run = izosga_run(&noisy, &rate, &bounds, &OptimizerConfig::new(9999, 1e-3, mu, 3, 0xacc5), &[0.0; 5]).unwrap();
    let (bound, ok) = lemma3_check(&run);
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        worst_z <= 3.0 && ok && secs < 120.0,
        format!(
            "max |mean - exact| = {worst_z:.2} SE over {n} samples (<= 3); mean |D|^2 {:.3e} vs bound {bound:.3e} over 10^4 iterations; {secs:.1} s (< 120 s)",
            run.diagnostics.mean_sq_grad
        ),
    )
}

fn oracle_quality() -> Verdict {
    let mut worst_rel: f64 = 0.0;
    let mut misses = Vec::new();
    let mut non_monotone = 0;
    let mut rng = stream(0xacc6);
    for i in 0..100u64 {
        let h = EffectiveChannel::new(2, 2, (0..4).map(|_| complex_normal(&mut rng)).collect()).unwrap();
        let rate = RateModel::uniform(2, 1.0, rng.random_range(0.1..1.0));
        let (w, trace) = wmmse(&h, &rate, &OracleBudget::iterations(50), None).unwrap();
        if trace.sumrate_per_iteration.windows(2).any(|p| p[1] < p[0] - 1e-12 * p[0].abs().max(1.0)) {
            non_monotone += 1;
        }
        let reference = reference_solve(&h, &rate, 64, 2000, 0xacc7 + i);
        let (fw, fr) = (rate.value(&w, &h).unwrap(), rate.value(&reference, &h).unwrap());
        let rel = (fr - fw).abs() / fr;
        if rel > 1e-3 {
            misses.push(i);
        }
        worst_rel = worst_rel.max(rel);
    }
    let mut worst_k1: f64 = 0.0;
    for i in 0..20u64 {
        let mut r = stream(0xacc8 + i);
        let h = EffectiveChannel::new(1, 3, (0..3).map(|_| complex_normal(&mut r)).collect()).unwrap();
        let rate = RateModel::uniform(1, 2.0, 0.3);
        let (_, trace) = wmmse(&h, &rate, &OracleBudget::iterations(50), None).unwrap();
        let optimum = (1.0 + 2.0 * h.norm().powi(2) / 0.3).log2();
        worst_k1 = worst_k1.max((trace.final_sumrate().unwrap() - optimum).abs());
    }
    verdict(
        misses.is_empty() && non_monotone == 0 && worst_k1 <= 1e-6,
        format!(
            "{} of 100 instances outside 1e-3 of the multistart reference {misses:?}, worst {worst_rel:.2e}; {non_monotone} non-monotone traces; K=1 error {worst_k1:.1e} (<= 1e-6)",
            misses.len()
        ),
    )
}

fn fig1_ordering(fig1: &ExperimentOutcome) -> Verdict {
    let b1 = final_mean(fig1, "budget_1");
    let b5 = final_mean(fig1, "budget_5");
    let b10 = final_mean(fig1, "budget_10");
    let b50 = final_mean(fig1, "budget_50");
    let mut worst_ratio = f64::INFINITY;
    let mut runs = 0;
    for c in &fig1.curves {
        let base = fig1.baseline(&format!("baseline_{}", c.label)).unwrap();
        assert_eq!(c.final_window.len(), base.final_window.len());
        for (run, baseline) in c.final_window.iter().zip(&base.final_window) {
            worst_ratio = worst_ratio.min(run / baseline);
            runs += 1;
        }
    }
    let gap_10_50 = (b10 - b50).abs() / b50;
    verdict(
        b1 <= 0.95 * b5 && gap_10_50 <= 0.05 && worst_ratio >= 1.2,
        format!(
            "budget-1 {b1:.3} vs budget-5 {b5:.3} ({:.1}% lower); |budget-10 - budget-50| {:.2}%; worst run/baseline ratio {worst_ratio:.2} over {runs} seeded runs (>= 1.2)",
            100.0 * (1.0 - b1 / b5),
            100.0 * gap_10_50
        ),
    )
}

fn fig2_schedule(fig2: &ExperimentOutcome) -> Verdict {
    let gentle = final_mean(fig2, "schedule_20-10-7-6-5");
    let constant = final_mean(fig2, "budget_20");
    let steep = fig2.summary.curves.iter().find(|c| c.label == "schedule_20-5-4-3-2").unwrap();
    let budget5_phase = steep.segment_means[1].1;
    let terminal = steep.segment_means.last().unwrap().1;
    let rel = (gentle - constant).abs() / constant;
    verdict(
        rel <= 0.05 && terminal < budget5_phase,
        format!(
            "20-10-7-6-5 final {gentle:.3} vs constant-20 {constant:.3} ({:.2}%); 20-5-4-3-2 terminal {terminal:.3} vs budget-5 phase {budget5_phase:.3}",
            100.0 * rel
        ),
    )
}

fn fig3_deploy(fig1: &ExperimentOutcome, fig3: &ExperimentOutcome) -> Verdict {
    let trained = final_mean(fig3, "train_budget_20");
    let deploy = |b: u32| fig3.deploy.iter().find(|r| r.budget == b).unwrap().trained.mean;
    let (d1, d2, d4, d5) = (deploy(1), deploy(2), deploy(4), deploy(5));
    let (t1, t2) = (final_mean(fig1, "budget_1"), final_mean(fig1, "budget_2"));
    verdict(
        d4 >= 0.95 * trained && d5 >= 0.95 * trained && d1 > t1 && d2 > t2,
        format!(
            "deploy-4 {:.1}% and deploy-5 {:.1}% of trained {trained:.3}; deploy-1 {d1:.3} vs trained-with-1 {t1:.3}; deploy-2 {d2:.3} vs trained-with-2 {t2:.3}",
            100.0 * d4 / trained,
            100.0 * d5 / trained
        ),
    )
}

fn fig4_physical(fig1: &ExperimentOutcome, fig4: &ExperimentOutcome) -> Verdict {
    let varactor = final_mean(fig4, "budget_20");
    let baseline = fig4.baseline("baseline_budget_20").unwrap().final_window_stats.mean;
    let ideal = final_mean(fig1, "budget_20");
    verdict(
        varactor >= 1.1 * baseline && varactor < ideal,
        format!(
            "varactor {varactor:.3} vs random capacitance {baseline:.3} (+{:.1}%); ideal surface {ideal:.3}",
            100.0 * (varactor / baseline - 1.0)
        ),
    )
}

fn diagnostics() -> Verdict {
    let objective = QuadraticObjective {
        center: vec![0.0; 4],
        curvature: 1.0,
    };
    let wide = ParameterBox::new(vec![-100.0; 4], vec![100.0; 4]).unwrap();
    let proxy = moreau_gradient_proxy(&objective, &[1.0, 0.0, 0.0, 0.0], 2.0, &wide, 200).unwrap();
    let closed_form_err = (proxy - 2.0 / 3.0).abs();

    let model = AffineChannel::random(1, 2, 4, 0.05, 21);
    let rate = RateModel::uniform(1, 1.0, 1.0);
    let bounds = ParameterBox::new(vec![-1.0; 4], vec![1.0; 4]).unwrap();
    let theta0 = [0.0; 4];
    let run = izosga_run(&model, &rate, &bounds, &OptimizerConfig::new(3000, 0.02, 0.01, 3, 0xacc9), &theta0).unwrap();
    let settings = MoreauSettings {
        rho_bar: 1.0,
        samples: 64,
        inner_steps: 200,
        oracle_iterations: 5,
        stride: 0,
        seed: 99,
    };
    let start = moreau_proxy_sampled(&model, &rate, &theta0, &bounds, &settings).unwrap();
    let returned = moreau_proxy_sampled(&model, &rate, &run.returned_theta, &bounds, &settings).unwrap();
    verdict(
        closed_form_err <= 1e-3 && returned <= 0.1 * start,
        format!(
            "closed-form error {closed_form_err:.1e}; proxy at t*={} is {returned:.2e} vs {start:.2e} at theta_0 (ratio {:.3})",
            run.returned_index,
            returned / start
        ),
    )
}

fn same_bytes(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in std::fs::read_dir(a.join(&rel)).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let rel_path = rel.join(entry.file_name());
            if entry.file_type().map_err(|e| e.to_string())?.is_dir() {
                stack.push(rel_path);
            } else {
                files.push(rel_path);
            }
        }
    }
    for f in &files {
        let x = std::fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{}: {e}", f.display()))?;
        if x != y {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(files.len())
}

fn reproducibility(root: &Path) -> Verdict {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, dir) in [("fig2_schedule.toml", "fig2"), ("fig3_train_deploy.toml", "fig3")] {
        let rerun = root.join(format!("{dir}_rerun"));
        run_shipped(name, &rerun, 3);
        match same_bytes(&root.join(dir), &rerun) {
            Ok(n) => details.push(format!("{dir}: {n} files identical")),
            Err(e) => {
                ok = false;
                details.push(format!("{dir}: {e}"));
            }
        }
    }
    verdict(ok, format!("rerun with three workers: {}", details.join("; ")))
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let v = f();
        println!("criterion {id} [{}] {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, v));
    };

    timed(1, "gradient correctness", &mut gradient_correctness);
    timed(2, "estimator unbiasedness", &mut estimator_unbiasedness);
    timed(3, "oracle quality", &mut oracle_quality);

    let fig1 = run_shipped("fig1_sweep.toml", &root.path().join("fig1"), 0);
    timed(4, "fixed-budget ordering", &mut || fig1_ordering(&fig1));
    let fig2 = run_shipped("fig2_schedule.toml", &root.path().join("fig2"), 0);
    timed(5, "budget schedules", &mut || fig2_schedule(&fig2));
    let fig3 = run_shipped("fig3_train_deploy.toml", &root.path().join("fig3"), 0);
    timed(6, "train expensive, deploy cheap", &mut || fig3_deploy(&fig1, &fig3));
    let fig4 = run_shipped("fig4_physical.toml", &root.path().join("fig4"), 0);
    timed(7, "physical surface", &mut || fig4_physical(&fig1, &fig4));
    timed(8, "stationarity diagnostics", &mut diagnostics);
    timed(9, "reproducibility", &mut || reproducibility(root.path()));

    let failed: Vec<u32> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
