//! Synthetic channels and objectives with known structure.
//!
//! Used by the diagnostic harnesses and tests: an affine channel has an
//! exact Lipschitz constant and makes the two-point estimator unbiased, and
//! the quadratic objective has a closed-form proximal point.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::channel::{ChannelModel, EffectiveChannel};
use crate::error::{check_len, Result};
use crate::optimizer::Objective;
use crate::rng::{complex_normal, stream};
use crate::utility::{assemble_gradient, Cogradient};
use crate::C64;

/// `H(θ, ω) = Σ_i θ_i a_i + b + σ z(ω)` with `z` complex Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChannel {
    pub users: usize,
    pub antennas: usize,
    /// Column `i` is `∂H/∂θ_i`.
    pub columns: Vec<Vec<C64>>,
    pub offset: Vec<C64>,
    pub noise_scale: f64,
}

impl AffineChannel {
    pub fn new(users: usize, antennas: usize, columns: Vec<Vec<C64>>, offset: Vec<C64>, noise_scale: f64) -> Result<Self> {
        let n = users * antennas;
        check_len("affine offset", n, offset.len())?;
        for c in &columns {
            check_len("affine column", n, c.len())?;
        }
        Ok(Self {
            users,
            antennas,
            columns,
            offset,
            noise_scale,
        })
    }

    pub fn random(users: usize, antennas: usize, dim: usize, noise_scale: f64, seed: u64) -> Self {
        let mut rng = stream(seed);
        let n = users * antennas;
        let columns = (0..dim).map(|_| (0..n).map(|_| complex_normal(&mut rng)).collect()).collect();
        let offset = (0..n).map(|_| complex_normal(&mut rng)).collect();
        Self {
            users,
            antennas,
            columns,
            offset,
            noise_scale,
        }
    }

    /// Spectral norm of `θ ↦ (Re H, Im H)`, the exact Lipschitz constant of `H`.
    pub fn lipschitz_constant(&self) -> f64 {
        let d = self.columns.len();
        let gram = DMatrix::from_fn(d, d, |i, j| {
            self.columns[i]
                .iter()
                .zip(&self.columns[j])
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum::<f64>()
        });
        let eig = SymmetricEigen::new(gram);
        eig.eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    pub fn mean_channel(&self, theta: &[f64]) -> EffectiveChannel {
        let mut data = self.offset.clone();
        for (t, col) in theta.iter().zip(&self.columns) {
            for (d, c) in data.iter_mut().zip(col) {
                *d += c * *t;
            }
        }
        EffectiveChannel {
            users: self.users,
            antennas: self.antennas,
            data,
        }
    }
}

impl ChannelModel for AffineChannel {
    type Realization = Vec<C64>;

    fn users(&self) -> usize {
        self.users
    }

    fn antennas(&self) -> usize {
        self.antennas
    }

    fn parameter_dim(&self) -> usize {
        self.columns.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        if self.noise_scale == 0.0 {
            return Vec::new();
        }
        (0..self.offset.len()).map(|_| complex_normal(rng) * self.noise_scale).collect()
    }

    fn compose(&self, realization: &Vec<C64>, theta: &[f64]) -> Result<EffectiveChannel> {
        check_len("affine parameter vector", self.columns.len(), theta.len())?;
        let mut h = self.mean_channel(theta);
        for (d, z) in h.data.iter_mut().zip(realization) {
            *d += z;
        }
        Ok(h)
    }

    fn gradient(&self, _realization: &Vec<C64>, theta: &[f64], cogradient: &Cogradient) -> Result<Vec<f64>> {
        check_len("affine parameter vector", self.columns.len(), theta.len())?;
        assemble_gradient(&self.columns, cogradient)
    }
}

/// `f(u) = −(c/2)‖u − center‖²`, a concave test objective.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    pub center: Vec<f64>,
    pub curvature: f64,
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len("quadratic objective input", self.center.len(), theta.len())?;
        let diff: Vec<f64> = theta.iter().zip(&self.center).map(|(t, c)| t - c).collect();
        let value = -0.5 * self.curvature * diff.iter().map(|x| x * x).sum::<f64>();
        Ok((value, diff.iter().map(|x| -self.curvature * x).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_constant_bounds_secants() {
        let model = AffineChannel::random(2, 3, 4, 0.0, 3);
        let l = model.lipschitz_constant();
        let mut rng = stream(4);
        let real = model.sample(&mut rng);
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ha = model.compose(&real, &a).unwrap();
            let hb = model.compose(&real, &b).unwrap();
            let dh: f64 = ha.data.iter().zip(&hb.data).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            let dt: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            assert!(dh <= l * dt * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quadratic_gradient() {
        let q = QuadraticObjective {
            center: vec![1.0, -2.0],
            curvature: 2.0,
        };
        let (v, g) = q.value_and_gradient(&[0.0, 0.0]).unwrap();
        assert_eq!(v, -5.0);
        assert_eq!(g, vec![2.0, -4.0]);
    }
}
