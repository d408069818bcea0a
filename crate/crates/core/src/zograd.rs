//! Two-point zeroth-order sample gradients.
//!
//! Given probes `H(θ ± μU, ω)` and the cogradient `g` of the utility at the
//! communicated channel `H(θ, ω)`, the sample gradient is
//!
//! ```text
//! D = (1/μ) · U · ( Re(Δ)ᵀ Re(g) + Im(Δ)ᵀ Re(j g) ),   Δ = H(θ+μU) − H(θ−μU)
//! ```
//!
//! The `1/μ` (rather than `1/(2μ)`) absorbs the factor 2 of the two-term
//! real gradient assembly.

use rand::Rng;

use crate::channel::EffectiveChannel;
use crate::error::{check_len, Error, Result};
use crate::rng::standard_normal;
use crate::utility::Cogradient;
use crate::C64;

/// Gaussian probing direction `U ~ N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDirection(pub Vec<f64>);

impl ProbeDirection {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<ProbeDirection> {
    if dim == 0 {
        return Err(Error::InvalidArgument("probe direction needs dim >= 1".into()));
    }
    Ok(ProbeDirection((0..dim).map(|_| standard_normal(rng)).collect()))
}

/// `Δ = H⁺ − H⁻`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDelta(pub Vec<C64>);

impl ChannelDelta {
    pub fn between(plus: &EffectiveChannel, minus: &EffectiveChannel) -> Result<Self> {
        check_len("probe channels", plus.data.len(), minus.data.len())?;
        Ok(Self(plus.data.iter().zip(&minus.data).map(|(a, b)| a - b).collect()))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleGradient(pub Vec<f64>);

impl SampleGradient {
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// `Re(Δ)ᵀ Re(g) + Im(Δ)ᵀ Re(j g)`.
pub fn contract(delta: &ChannelDelta, g: &Cogradient) -> Result<f64> {
    check_len("cogradient", delta.0.len(), g.data.len())?;
    Ok(delta
        .0
        .iter()
        .zip(&g.data)
        .map(|(d, gn)| d.re * gn.re + d.im * (C64::i() * gn).re)
        .sum())
}

pub fn sample_gradient(delta: &ChannelDelta, u: &ProbeDirection, mu: f64, g: &Cogradient) -> Result<SampleGradient> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing parameter must be > 0, got {mu}")));
    }
    let scale = contract(delta, g)? / mu;
    Ok(SampleGradient(u.0.iter().map(|x| x * scale).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};
    use crate::synthetic::AffineChannel;
    use crate::channel::ChannelModel;

    fn half(users: usize, antennas: usize) -> Cogradient {
        Cogradient {
            users,
            antennas,
            data: vec![C64::new(0.5, 0.0); users * antennas],
        }
    }

    #[test]
    fn direction_moments() {
        let mut rng = stream(2024);
        let n = 1_000_000;
        let dim = 3;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for _ in 0..n {
            let u = sample_direction(&mut rng, dim).unwrap();
            for i in 0..dim {
                sum[i] += u.0[i];
                sq[i] += u.0[i] * u.0[i];
            }
        }
        for i in 0..dim {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() <= 3.0 / (n as f64).sqrt(), "mean {mean}");
            assert!((0.99..=1.01).contains(&var), "var {var}");
        }
        assert!(sample_direction(&mut rng, 0).is_err());
    }

    #[test]
    fn direction_is_deterministic() {
        let a = sample_direction(&mut stream(5), 7).unwrap();
        let b = sample_direction(&mut stream(5), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_channel_gives_zero() {
        let u = ProbeDirection(vec![1.0, -2.0]);
        let d = sample_gradient(&ChannelDelta(vec![C64::new(0.0, 0.0); 2]), &u, 0.1, &half(1, 2)).unwrap();
        assert!(d.0.iter().all(|&x| x == 0.0));
        assert!(sample_gradient(&ChannelDelta(vec![C64::new(0.0, 0.0); 2]), &u, 0.0, &half(1, 2)).is_err());
    }

    #[test]
    fn scalar_identity_channel() {
        // H(θ) = θ, F = Re z ⇒ g = 1/2, Δ = 2μu, D = u².
        let mut rng = stream(31);
        let mu = 0.01;
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let u = sample_direction(&mut rng, 1).unwrap();
            let delta = ChannelDelta(vec![C64::new(2.0 * mu * u.0[0], 0.0)]);
            let d = sample_gradient(&delta, &u, mu, &half(1, 1)).unwrap();
            assert!((d.0[0] - u.0[0] * u.0[0]).abs() < 1e-12);
            draws.push(d.0[0]);
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() <= 3.0 * (var / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let mut rng = stream(1);
        let delta = ChannelDelta((0..4).map(|_| complex_normal(&mut rng)).collect());
        let g = Cogradient {
            users: 2,
            antennas: 2,
            data: (0..4).map(|_| complex_normal(&mut rng)).collect(),
        };
        let u = sample_direction(&mut rng, 3).unwrap();
        assert_eq!(
            sample_gradient(&delta, &u, 0.3, &g).unwrap(),
            sample_gradient(&delta, &u, 0.3, &g).unwrap()
        );
    }

    #[test]
    fn affine_channel_second_moment_bound() {
        let model = AffineChannel::random(2, 2, 3, 0.0, 99);
        let g = Cogradient {
            users: 2,
            antennas: 2,
            data: vec![C64::new(0.3, -0.2), C64::new(0.1, 0.4), C64::new(-0.5, 0.0), C64::new(0.2, 0.2)],
        };
        let bf = g.norm();
        let lh0 = model.lipschitz_constant();
        let d = model.parameter_dim() as f64;
        let bound = 4.0 * bf * bf * lh0 * lh0 * (d * d + 2.0 * d);
        let mut rng = stream(12);
        let theta = vec![0.1, -0.4, 0.7];
        let real = model.sample(&mut rng);
        let mut acc = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let u = sample_direction(&mut rng, 3).unwrap();
            let plus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t + 0.05 * x).collect();
            let minus: Vec<f64> = theta.iter().zip(&u.0).map(|(t, x)| t - 0.05 * x).collect();
            let delta = ChannelDelta::between(
                &model.compose(&real, &plus).unwrap(),
                &model.compose(&real, &minus).unwrap(),
            )
            .unwrap();
            acc += sample_gradient(&delta, &u, 0.05, &g).unwrap().norm_sqr();
        }
        assert!(acc / n as f64 <= bound, "{} > {bound}", acc / n as f64);
    }
}
