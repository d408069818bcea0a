//! Weighted sumrate utility and its Wirtinger cogradient.
//!
//! The cogradient follows the convention `∂°F/∂z = ∂F/∂z` with `z*` held
//! constant, i.e. `½(∂F/∂x − j ∂F/∂y)`. With that convention the real
//! gradient of a composition `θ ↦ F(W, H(θ))` is
//! `2 ∇Re(H)·Re(g) + 2 ∇Im(H)·Re(j g)`, see [`assemble_gradient`].

use std::f64::consts::LN_2;

use crate::channel::EffectiveChannel;
use crate::error::{check_len, Error, Result};
use crate::C64;

/// Powers, noise and user weights that define the sumrate problem.
#[derive(Clone, Debug, PartialEq)]
pub struct RateModel {
    pub power_budget: f64,
    pub noise_vars: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RateModel {
    pub fn uniform(users: usize, power_budget: f64, noise_var: f64) -> Self {
        Self {
            power_budget,
            noise_vars: vec![noise_var; users],
            weights: vec![1.0; users],
        }
    }

    pub fn users(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, w: &Precoder, h: &EffectiveChannel) -> Result<()> {
        check_sizes(w, h)?;
        check_len("noise variances", h.users, self.noise_vars.len())?;
        check_len("user weights", h.users, self.weights.len())?;
        for &v in &self.noise_vars {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("noise variance must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-user precoding vectors, stacked user-major like [`EffectiveChannel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    pub users: usize,
    pub antennas: usize,
    pub data: Vec<C64>,
}

impl Precoder {
    pub fn zeros(users: usize, antennas: usize) -> Self {
        Self {
            users,
            antennas,
            data: vec![C64::new(0.0, 0.0); users * antennas],
        }
    }

    pub fn from_users(users: &[Vec<C64>]) -> Result<Self> {
        let h = EffectiveChannel::from_users(users)?;
        Ok(Self {
            users: h.users,
            antennas: h.antennas,
            data: h.data,
        })
    }

    pub fn user(&self, k: usize) -> &[C64] {
        &self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn user_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    /// `Σ_k ‖w_k‖²`.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `∂°F/∂z` evaluated at the effective channel, stacked user-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Cogradient {
    pub users: usize,
    pub antennas: usize,
    pub data: Vec<C64>,
}

impl Cogradient {
    pub fn user(&self, k: usize) -> &[C64] {
        &self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            users: self.users,
            antennas: self.antennas,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }
}

/// A utility exposing its value and cogradient in the channel argument.
pub trait Utility {
    fn value(&self, w: &Precoder, h: &EffectiveChannel) -> Result<f64>;
    fn cogradient(&self, w: &Precoder, h: &EffectiveChannel) -> Result<Cogradient>;
}

impl Utility for RateModel {
    fn value(&self, w: &Precoder, h: &EffectiveChannel) -> Result<f64> {
        sumrate(w, h, &self.weights, &self.noise_vars)
    }

    fn cogradient(&self, w: &Precoder, h: &EffectiveChannel) -> Result<Cogradient> {
        cogradient(w, h, &self.weights, &self.noise_vars)
    }
}

fn check_sizes(w: &Precoder, h: &EffectiveChannel) -> Result<()> {
    check_len("precoder users", h.users, w.users)?;
    check_len("precoder antennas", h.antennas, w.antennas)
}

fn dot_h(h: &[C64], w: &[C64]) -> C64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// `a[k * K + j] = h_kᴴ w_j`.
pub fn cross_gains(w: &Precoder, h: &EffectiveChannel) -> Vec<C64> {
    let k = h.users;
    let mut out = Vec::with_capacity(k * k);
    for u in 0..k {
        let hu = h.user(u);
        for j in 0..k {
            out.push(dot_h(hu, w.user(j)));
        }
    }
    out
}

/// Desired power and interference-plus-noise for every user.
fn signal_and_interference(a: &[C64], users: usize, noise_vars: &[f64]) -> Vec<(f64, f64)> {
    (0..users)
        .map(|k| {
            let row = &a[k * users..(k + 1) * users];
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let signal = row[k].norm_sqr();
            (signal, (total - signal).max(0.0) + noise_vars[k])
        })
        .collect()
}

pub fn sinr(w: &Precoder, h: &EffectiveChannel, k: usize, noise_var: f64) -> Result<f64> {
    check_sizes(w, h)?;
    if k >= h.users {
        return Err(Error::InvalidArgument(format!("user index {k} out of range ({} users)", h.users)));
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be > 0, got {noise_var}")));
    }
    let hk = h.user(k);
    let mut interference = 0.0;
    let mut signal = 0.0;
    for j in 0..w.users {
        let p = dot_h(hk, w.user(j)).norm_sqr();
        if j == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    Ok(signal / (interference + noise_var))
}

/// `Σ_k α_k log₂(1 + SINR_k)`.
pub fn sumrate(w: &Precoder, h: &EffectiveChannel, weights: &[f64], noise_vars: &[f64]) -> Result<f64> {
    let model = RateModel {
        power_budget: f64::INFINITY,
        noise_vars: noise_vars.to_vec(),
        weights: weights.to_vec(),
    };
    model.check(w, h)?;
    Ok(sumrate_unchecked(w, h, weights, noise_vars))
}

pub(crate) fn sumrate_unchecked(w: &Precoder, h: &EffectiveChannel, weights: &[f64], noise_vars: &[f64]) -> f64 {
    let a = cross_gains(w, h);
    signal_and_interference(&a, h.users, noise_vars)
        .iter()
        .zip(weights)
        .map(|(&(s, i), &alpha)| alpha * (1.0 + s / i).log2())
        .sum()
}

/// Wirtinger cogradient of the weighted sumrate with respect to `H`.
///
/// With `a_kj = h_kᴴ w_j`, `I_k = Σ_{j≠k}|a_kj|²` and `T_k = I_k + σ²_k + |a_kk|²`:
/// `g_k = (α_k / ln 2) [Σ_j a_kj w_j* / T_k − Σ_{j≠k} a_kj w_j* / (I_k + σ²_k)]`.
pub fn cogradient(w: &Precoder, h: &EffectiveChannel, weights: &[f64], noise_vars: &[f64]) -> Result<Cogradient> {
    let model = RateModel {
        power_budget: f64::INFINITY,
        noise_vars: noise_vars.to_vec(),
        weights: weights.to_vec(),
    };
    model.check(w, h)?;
    let (users, m) = (h.users, h.antennas);
    let a = cross_gains(w, h);
    let si = signal_and_interference(&a, users, noise_vars);
    let mut data = vec![C64::new(0.0, 0.0); users * m];
    for k in 0..users {
        let (signal, interf) = si[k];
        let total = signal + interf;
        let scale = weights[k] / LN_2;
        let out = &mut data[k * m..(k + 1) * m];
        for j in 0..users {
            let akj = a[k * users + j];
            let coef = if j == k { akj / total } else { akj * (1.0 / total - 1.0 / interf) };
            if coef == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, wj) in out.iter_mut().zip(w.user(j)) {
                *o += wj.conj() * coef * scale;
            }
        }
    }
    Ok(Cogradient { users, antennas: m, data })
}

/// One term of the compositional gradient: `2 Σ_n [Re(∂H_n) Re(g_n) + Im(∂H_n) Re(j g_n)]`.
pub fn directional_term(d_channel: &[C64], g: &Cogradient) -> f64 {
    2.0 * d_channel
        .iter()
        .zip(&g.data)
        .map(|(dh, gn)| dh.re * gn.re + dh.im * (C64::i() * gn).re)
        .sum::<f64>()
}

/// Real gradient of `θ ↦ F(W, H(θ))` from the Jacobian columns `∂H/∂θ_i`.
pub fn assemble_gradient(jacobian_columns: &[Vec<C64>], g: &Cogradient) -> Result<Vec<f64>> {
    jacobian_columns
        .iter()
        .map(|col| {
            check_len("Jacobian column", g.data.len(), col.len())?;
            Ok(directional_term(col, g))
        })
        .collect()
}
