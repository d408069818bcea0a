use irsopt::channel::{effective_channel, sample_realization, ChannelModel, EffectiveChannel, IrsChannel};
use irsopt::experiment::checks::small_scenario;
use irsopt::irs::{IrsModel, ParameterBox};
use irsopt::oracle::{oracle_error_estimate, reference_solve, wmmse, OracleBudget};
use irsopt::rng::{complex_normal, stream};
use irsopt::utility::{cogradient, sumrate, Precoder, RateModel, Utility};
use irsopt::zograd::{sample_direction, sample_gradient, ChannelDelta};
use irsopt::C64;
use proptest::prelude::*;
use rand::Rng;

fn random_channel(users: usize, antennas: usize, seed: u64) -> EffectiveChannel {
    let mut rng = stream(seed);
    EffectiveChannel::new(users, antennas, (0..users * antennas).map(|_| complex_normal(&mut rng)).collect()).unwrap()
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_affine_in_reflection(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let sc = small_scenario(3, 2, 6, seed);
        let mut rng = stream(seed);
        let real = sample_realization(&sc, &mut rng).unwrap();
        let r1: Vec<C64> = (0..6).map(|_| complex_normal(&mut rng)).collect();
        let r2: Vec<C64> = (0..6).map(|_| complex_normal(&mut rng)).collect();
        let mixed: Vec<C64> = r1.iter().zip(&r2).map(|(x, y)| x * a + y * b).collect();
        let direct = effective_channel(&real, &[C64::new(0.0, 0.0); 6]).unwrap().data;
        let h1 = effective_channel(&real, &r1).unwrap().data;
        let h2 = effective_channel(&real, &r2).unwrap().data;
        let hm = effective_channel(&real, &mixed).unwrap().data;
        let lhs: Vec<C64> = hm.iter().zip(&direct).map(|(h, d)| h - d).collect();
        let rhs: Vec<C64> = (0..lhs.len()).map(|i| (h1[i] - direct[i]) * a + (h2[i] - direct[i]) * b).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-12 * (1.0 + a.abs() + b.abs()) * 10.0);
    }

    #[test]
    fn scaling_weights_scales_rate_and_cogradient(seed in any::<u64>(), c in 0.01f64..100.0) {
        let h = random_channel(3, 2, seed);
        let w = Precoder {
            users: 3,
            antennas: 2,
            data: random_channel(3, 2, seed ^ 1).data,
        };
        let weights = [1.0, 0.5, 2.0];
        let scaled: Vec<f64> = weights.iter().map(|x| x * c).collect();
        let noise = [0.3, 0.6, 1.0];
        let (f, fc) = (sumrate(&w, &h, &weights, &noise).unwrap(), sumrate(&w, &h, &scaled, &noise).unwrap());
        prop_assert!((fc - c * f).abs() <= 1e-12 * fc.abs().max(1.0));
        let g = cogradient(&w, &h, &weights, &noise).unwrap();
        let gc = cogradient(&w, &h, &scaled, &noise).unwrap();
        let expected: Vec<C64> = g.data.iter().map(|z| z * c).collect();
        prop_assert!(max_abs_diff(&gc.data, &expected) <= 1e-12 * g.norm().max(1.0) * c.max(1.0));
    }

    #[test]
    fn wmmse_stays_feasible_and_monotone(
        seed in any::<u64>(),
        users in 1usize..5,
        antennas in 1usize..5,
        power in 0.01f64..100.0,
        noise in 0.01f64..10.0,
        iterations in 1u32..30,
    ) {
        let h = random_channel(users, antennas, seed);
        let rate = RateModel::uniform(users, power, noise);
        let (w, trace) = wmmse(&h, &rate, &OracleBudget::iterations(iterations), None).unwrap();
        prop_assert!(w.power() <= power * (1.0 + 1e-9));
        prop_assert_eq!(trace.sumrate_per_iteration.len(), iterations as usize);
        for pair in trace.sumrate_per_iteration.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-12 * pair[0].abs().max(1.0));
        }
    }
}

#[test]
fn multistart_reference_dominates_wmmse() {
    for i in 0..100u64 {
        let h = random_channel(2, 2, 500 + i);
        let rate = RateModel::uniform(2, 1.0, 0.5);
        let (w, _) = wmmse(&h, &rate, &OracleBudget::iterations(50), None).unwrap();
        let reference = reference_solve(&h, &rate, 64, 2000, i);
        let (fw, fr) = (rate.value(&w, &h).unwrap(), rate.value(&reference, &h).unwrap());
        assert!(fr >= fw - 1e-6, "instance {i}: reference {fr} < wmmse {fw}");
    }
}

#[test]
fn longer_budgets_shrink_the_average_gap() {
    let (mut gap1, mut gap10) = (0.0, 0.0);
    for i in 0..100u64 {
        let h = random_channel(2, 2, 900 + i);
        let rate = RateModel::uniform(2, 1.0, 0.5);
        let reference = reference_solve(&h, &rate, 16, 500, i);
        let (w1, _) = wmmse(&h, &rate, &OracleBudget::iterations(1), None).unwrap();
        let (w10, _) = wmmse(&h, &rate, &OracleBudget::iterations(10), None).unwrap();
        gap1 += oracle_error_estimate(&w1, &h, &rate, &reference).unwrap();
        gap10 += oracle_error_estimate(&w10, &h, &rate, &reference).unwrap();
    }
    assert!(gap1 > gap10, "{gap1} <= {gap10}");
}

#[test]
fn warm_start_rarely_loses_to_cold_start() {
    let sc = small_scenario(4, 4, 16, 3);
    let rate = sc.rate_model();
    let model = IrsChannel::new(sc, IrsModel::Ideal).unwrap();
    let bounds = ParameterBox::ideal(16, (0.0, 1.0), (-std::f64::consts::TAU, std::f64::consts::TAU)).unwrap();
    let mut rng = stream(41);
    let mut not_worse = 0;
    for _ in 0..1000 {
        let real = model.sample(&mut rng);
        let theta = bounds.sample_uniform(&mut rng);
        let step: Vec<f64> = theta.iter().map(|t| t + 0.02 * rng.random_range(-1.0..1.0)).collect();
        let next = bounds.project(&step).unwrap();
        let one = OracleBudget::iterations(1);
        let (previous, _) = wmmse(&model.compose(&real, &theta).unwrap(), &rate, &one, None).unwrap();
        let h = model.compose(&real, &next).unwrap();
        let (warm, _) = wmmse(&h, &rate, &one, Some(&previous)).unwrap();
        let (cold, _) = wmmse(&h, &rate, &one, None).unwrap();
        if rate.value(&warm, &h).unwrap() >= rate.value(&cold, &h).unwrap() {
            not_worse += 1;
        }
    }
    assert!(not_worse >= 900, "{not_worse} of 1000");
}

#[test]
fn cogradient_norm_is_bounded_on_a_compact_scenario() {
    let sc = small_scenario(3, 2, 8, 11);
    let rate = sc.rate_model();
    let model = IrsChannel::new(sc, IrsModel::Ideal).unwrap();
    let bounds = ParameterBox::ideal(8, (0.0, 1.0), (-std::f64::consts::TAU, std::f64::consts::TAU)).unwrap();
    let mut rng = stream(12);
    let mut b_f: f64 = 0.0;
    for _ in 0..10_000 {
        let real = model.sample(&mut rng);
        let h = model.compose(&real, &bounds.sample_uniform(&mut rng)).unwrap();
        let (w, _) = wmmse(&h, &rate, &OracleBudget::iterations(1), None).unwrap();
        b_f = b_f.max(rate.cogradient(&w, &h).unwrap().norm());
    }
    assert!(b_f.is_finite() && b_f > 0.0, "{b_f}");
}

#[test]
fn smoothing_bias_shrinks_with_mu() {
    let sc = small_scenario(2, 2, 4, 5);
    let rate = sc.rate_model();
    let model = IrsChannel::new(sc, IrsModel::Ideal).unwrap();
    let mut rng = stream(6);
    let real = model.sample(&mut rng);
    let theta = [0.6, 0.5, 0.7, 0.4, 0.3, -1.0, 2.0, 0.8];
    let h = model.compose(&real, &theta).unwrap();
    let (w, _) = wmmse(&h, &rate, &OracleBudget::iterations(5), None).unwrap();
    let g = rate.cogradient(&w, &h).unwrap();
    let exact = model.gradient(&real, &theta, &g).unwrap();
    let directions: Vec<_> = (0..20_000).map(|_| sample_direction(&mut rng, theta.len()).unwrap()).collect();
    let bias = |mu: f64| {
        let mut acc = vec![0.0; theta.len()];
        for u in &directions {
            let plus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t + mu * x).collect();
            let minus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t - mu * x).collect();
            let delta =
                ChannelDelta::between(&model.compose(&real, &plus).unwrap(), &model.compose(&real, &minus).unwrap())
                    .unwrap();
            let d = sample_gradient(&delta, u, mu, &g).unwrap();
            let linear: f64 = u.0.iter().zip(&exact).map(|(a, b)| a * b).sum();
            for i in 0..acc.len() {
                acc[i] += d.0[i] - u.0[i] * linear;
            }
        }
        acc.iter().map(|x| (x / directions.len() as f64).powi(2)).sum::<f64>().sqrt()
    };
    let b: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&mu| bias(mu)).collect();
    assert!(b[1] <= 0.1 * b[0] && b[2] <= 0.1 * b[1], "{b:?}");
}
