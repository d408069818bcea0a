//! Rician channel realizations and effective-channel composition.
//!
//! Every link is `√g · (√(κ/(1+κ)) · LoS + √(1/(1+κ)) · CN(0, 1))` with a
//! per-class mean path gain `g` and Rician factor `κ`. LoS components are
//! unit-modulus phase ramps (uniform-linear-array steering vectors) whose
//! angles come from the scenario's geometry seed, so they are fixed for a
//! scenario. The scattered part may optionally be exponentially correlated
//! across IRS elements.
//!
//! Effective channels are stacked user-major: entry `k * M + m` is antenna
//! `m` of user `k`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::irs::IrsModel;
use crate::rng::{complex_normal, stream};
use crate::utility::{Cogradient, RateModel};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    /// Mean per-entry power `E|x|²`.
    pub gain: f64,
    /// Rician factor κ (LoS-to-scattered power ratio).
    pub rician_factor: f64,
}

impl LinkStats {
    fn los_weight(&self) -> f64 {
        (self.gain * self.rician_factor / (1.0 + self.rician_factor)).sqrt()
    }

    fn scatter_weight(&self) -> f64 {
        (self.gain / (1.0 + self.rician_factor)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub direct: LinkStats,
    pub tx_irs: LinkStats,
    pub irs_user: LinkStats,
    /// Exponential correlation factor across neighbouring IRS elements, in [0, 1).
    pub irs_correlation: f64,
    pub geometry_seed: u64,
}

/// Static system description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub tx_antennas: usize,
    pub users: usize,
    pub irs_elements: usize,
    pub power_budget: f64,
    pub noise_vars: Vec<f64>,
    pub weights: Vec<f64>,
    pub channel: ChannelStats,
}

impl Scenario {
    /// `M_U = M · K`.
    pub fn effective_dim(&self) -> usize {
        self.tx_antennas * self.users
    }

    pub fn rate_model(&self) -> RateModel {
        RateModel {
            power_budget: self.power_budget,
            noise_vars: self.noise_vars.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Returns every violated invariant, not just the first one.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("tx_antennas", self.tx_antennas),
            ("users", self.users),
            ("irs_elements", self.irs_elements),
        ] {
            if v == 0 {
                problems.push(format!("system.{name} must be a positive integer"));
            }
        }
        if !(self.power_budget.is_finite() && self.power_budget > 0.0) {
            problems.push(format!("system.power_budget_watts must be > 0 (got {})", self.power_budget));
        }
        if self.noise_vars.len() != self.users {
            problems.push(format!(
                "system.noise_var_watts has {} entries, expected {} (one per user)",
                self.noise_vars.len(),
                self.users
            ));
        }
        for (k, v) in self.noise_vars.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                problems.push(format!("system.noise_var_watts[{k}] must be > 0 (got {v})"));
            }
        }
        if self.weights.len() != self.users {
            problems.push(format!(
                "system.weights has {} entries, expected {} (one per user)",
                self.weights.len(),
                self.users
            ));
        }
        for (k, v) in self.weights.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                problems.push(format!("system.weights[{k}] must be finite and >= 0 (got {v})"));
            }
        }
        for (name, link) in [
            ("direct", self.channel.direct),
            ("tx_irs", self.channel.tx_irs),
            ("irs_user", self.channel.irs_user),
        ] {
            if !(link.gain.is_finite() && link.gain >= 0.0) {
                problems.push(format!("channel.{name}.gain must be finite and >= 0 (got {})", link.gain));
            }
            if !(link.rician_factor.is_finite() && link.rician_factor >= 0.0) {
                problems.push(format!(
                    "channel.{name}.rician_factor must be finite and >= 0 (got {})",
                    link.rician_factor
                ));
            }
        }
        let rho = self.channel.irs_correlation;
        if !(0.0..1.0).contains(&rho) {
            problems.push(format!("channel.irs_correlation must lie in [0, 1) (got {rho})"));
        }
        problems
    }
}

/// One draw of the random state ω.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub tx_antennas: usize,
    pub irs_elements: usize,
    /// Transmitter→IRS matrix `G` (S × M), row-major.
    pub g: Vec<C64>,
    /// IRS→user links, one length-S vector per user.
    pub h_r: Vec<Vec<C64>>,
    /// Direct links, one length-M vector per user.
    pub h_d: Vec<Vec<C64>>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.h_d.len()
    }

    pub fn g_entry(&self, s: usize, m: usize) -> C64 {
        self.g[s * self.tx_antennas + m]
    }
}

/// Effective channels `h_k`, stacked user-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel {
    pub users: usize,
    pub antennas: usize,
    pub data: Vec<C64>,
}

impl EffectiveChannel {
    pub fn new(users: usize, antennas: usize, data: Vec<C64>) -> Result<Self> {
        check_len("effective channel", users * antennas, data.len())?;
        Ok(Self { users, antennas, data })
    }

    pub fn from_users(users: &[Vec<C64>]) -> Result<Self> {
        let antennas = users.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(users.len() * antennas);
        for h in users {
            check_len("effective channel user vector", antennas, h.len())?;
            data.extend_from_slice(h);
        }
        Ok(Self {
            users: users.len(),
            antennas,
            data,
        })
    }

    pub fn user(&self, k: usize) -> &[C64] {
        &self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn steering(n: usize, angle: f64) -> Vec<C64> {
    let phase = PI * angle.sin();
    (0..n).map(|i| C64::from_polar(1.0, phase * i as f64)).collect()
}

/// Deterministic line-of-sight components of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct LosComponents {
    pub g: Vec<C64>,
    pub h_r: Vec<Vec<C64>>,
    pub h_d: Vec<Vec<C64>>,
}

impl LosComponents {
    pub fn from_geometry(scenario: &Scenario) -> Self {
        let (m, k, s) = (scenario.tx_antennas, scenario.users, scenario.irs_elements);
        let mut rng = stream(scenario.channel.geometry_seed);
        let mut angle = || rng.random_range(-PI / 2.0..PI / 2.0);
        let irs_arrival = steering(s, angle());
        let tx_departure = steering(m, angle());
        let mut g = Vec::with_capacity(s * m);
        for a in &irs_arrival {
            for d in &tx_departure {
                g.push(a * d.conj());
            }
        }
        let h_r = (0..k).map(|_| steering(s, angle())).collect();
        let h_d = (0..k).map(|_| steering(m, angle())).collect();
        Self { g, h_r, h_d }
    }
}

/// Draws realizations for a fixed scenario; LoS components are cached.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    scenario: Scenario,
    los: LosComponents,
}

impl ChannelSampler {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let problems = scenario.validate();
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let los = LosComponents::from_geometry(&scenario);
        Ok(Self { scenario, los })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn los(&self) -> &LosComponents {
        &self.los
    }

    fn scatter_sequence<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, correlated: bool) -> Vec<C64> {
        let rho = self.scenario.channel.irs_correlation;
        if !correlated || rho == 0.0 {
            return (0..n).map(|_| complex_normal(rng)).collect();
        }
        // AR(1) gives covariance ρ^{|i-j|} with unit marginal variance.
        let innovation = (1.0 - rho * rho).sqrt();
        let mut out = Vec::with_capacity(n);
        let mut prev = complex_normal(rng);
        out.push(prev);
        for _ in 1..n {
            prev = prev * rho + complex_normal(rng) * innovation;
            out.push(prev);
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let sc = &self.scenario;
        let (m, s) = (sc.tx_antennas, sc.irs_elements);
        let stats = &sc.channel;

        let (lw, sw) = (stats.tx_irs.los_weight(), stats.tx_irs.scatter_weight());
        let mut g = vec![C64::new(0.0, 0.0); s * m];
        for col in 0..m {
            let scatter = self.scatter_sequence(rng, s, true);
            for (row, z) in scatter.into_iter().enumerate() {
                g[row * m + col] = self.los.g[row * m + col] * lw + z * sw;
            }
        }

        let (lw, sw) = (stats.irs_user.los_weight(), stats.irs_user.scatter_weight());
        let h_r = self
            .los
            .h_r
            .iter()
            .map(|los| {
                let scatter = self.scatter_sequence(rng, s, true);
                los.iter().zip(scatter).map(|(l, z)| l * lw + z * sw).collect()
            })
            .collect();

        let (lw, sw) = (stats.direct.los_weight(), stats.direct.scatter_weight());
        let h_d = self
            .los
            .h_d
            .iter()
            .map(|los| los.iter().map(|l| l * lw + complex_normal(rng) * sw).collect())
            .collect();

        ChannelRealization {
            tx_antennas: m,
            irs_elements: s,
            g,
            h_r,
            h_d,
        }
    }
}

pub fn sample_realization<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<ChannelRealization> {
    Ok(ChannelSampler::new(scenario.clone())?.sample(rng))
}

/// `h_k = Gᴴ Diag(reflection) h_{r,k} + h_{d,k}` for every user.
pub fn effective_channel(realization: &ChannelRealization, reflection: &[C64]) -> Result<EffectiveChannel> {
    let (m, s) = (realization.tx_antennas, realization.irs_elements);
    check_len("reflection vector", s, reflection.len())?;
    let k = realization.users();
    let mut data = Vec::with_capacity(k * m);
    let mut acc = vec![C64::new(0.0, 0.0); m];
    for (h_r, h_d) in realization.h_r.iter().zip(&realization.h_d) {
        acc.copy_from_slice(h_d);
        for (i, (r, hr)) in reflection.iter().zip(h_r).enumerate() {
            let t = r * hr;
            if t == C64::new(0.0, 0.0) {
                continue;
            }
            let row = &realization.g[i * m..(i + 1) * m];
            for (a, gv) in acc.iter_mut().zip(row) {
                *a += gv.conj() * t;
            }
        }
        data.extend_from_slice(&acc);
    }
    Ok(EffectiveChannel {
        users: k,
        antennas: m,
        data,
    })
}

/// Compose `H(θ ± μu, ω)` on one realization. Probes are not projected.
pub fn probe_pair(
    realization: &ChannelRealization,
    irs: &IrsModel,
    theta: &[f64],
    direction: &[f64],
    mu: f64,
) -> Result<(EffectiveChannel, EffectiveChannel)> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing parameter must be > 0, got {mu}")));
    }
    check_len("probe direction", theta.len(), direction.len())?;
    let s = realization.irs_elements;
    let plus: Vec<f64> = theta.iter().zip(direction).map(|(t, u)| t + mu * u).collect();
    let minus: Vec<f64> = theta.iter().zip(direction).map(|(t, u)| t - mu * u).collect();
    let hp = effective_channel(realization, &irs.reflection(&plus, s)?)?;
    let hm = effective_channel(realization, &irs.reflection(&minus, s)?)?;
    Ok((hp, hm))
}

/// A parameterized random channel `θ ↦ H(θ, ω)` the optimizer can probe.
pub trait ChannelModel: Sync {
    type Realization: Send + Sync;

    fn users(&self) -> usize;
    fn antennas(&self) -> usize;
    fn parameter_dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Realization;
    fn compose(&self, realization: &Self::Realization, theta: &[f64]) -> Result<EffectiveChannel>;

    /// Exact real gradient of `θ ↦ F(W, H(θ, ω))` given the cogradient of
    /// `F` at `H(θ, ω)`.
    fn gradient(&self, realization: &Self::Realization, theta: &[f64], cogradient: &Cogradient) -> Result<Vec<f64>>;
}

/// The IRS-assisted downlink: a scenario's channel statistics plus an element model.
#[derive(Clone, Debug)]
pub struct IrsChannel {
    pub sampler: ChannelSampler,
    pub irs: IrsModel,
}

impl IrsChannel {
    pub fn new(scenario: Scenario, irs: IrsModel) -> Result<Self> {
        Ok(Self {
            sampler: ChannelSampler::new(scenario)?,
            irs,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.sampler.scenario()
    }
}

impl ChannelModel for IrsChannel {
    type Realization = ChannelRealization;

    fn users(&self) -> usize {
        self.scenario().users
    }

    fn antennas(&self) -> usize {
        self.scenario().tx_antennas
    }

    fn parameter_dim(&self) -> usize {
        self.irs.parameter_dim(self.scenario().irs_elements)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        self.sampler.sample(rng)
    }

    fn compose(&self, realization: &ChannelRealization, theta: &[f64]) -> Result<EffectiveChannel> {
        let reflection = self.irs.reflection(theta, realization.irs_elements)?;
        effective_channel(realization, &reflection)
    }

    fn gradient(&self, realization: &ChannelRealization, theta: &[f64], cogradient: &Cogradient) -> Result<Vec<f64>> {
        let (m, s) = (realization.tx_antennas, realization.irs_elements);
        check_len("cogradient", realization.users() * m, cogradient.data.len())?;
        // contraction[s] = Σ_{k,m} g_{k,m} conj(G[s,m]) h_{r,k}[s]
        let mut contraction = vec![C64::new(0.0, 0.0); s];
        for (k, h_r) in realization.h_r.iter().enumerate() {
            let gk = cogradient.user(k);
            for (i, c) in contraction.iter_mut().enumerate() {
                let row = &realization.g[i * m..(i + 1) * m];
                let dot: C64 = gk.iter().zip(row).map(|(a, b)| a * b.conj()).sum();
                *c += dot * h_r[i];
            }
        }
        self.irs.chain_rule(theta, &contraction)
    }
}
