//! Inexact second-stage solvers.
//!
//! [`wmmse`] is the budgeted oracle used inside the outer loop; its error is
//! controlled only by the iteration budget. [`reference_solve`] is a slow
//! multistart projected gradient ascent used to measure the value gap of
//! cheap oracle outputs on small instances.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::channel::EffectiveChannel;
use crate::error::{check_len, Error, Result};
use crate::rng::{complex_normal, stream};
use crate::utility::{cross_gains, sumrate_unchecked, Precoder, RateModel};
use crate::C64;

const MSE_FLOOR: f64 = 1e-12;
const WEIGHT_CAP: f64 = 1e12;
const EIGEN_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 100;

/// Stopping rules for the inner solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBudget {
    pub max_iterations: u32,
    /// Stop early once the per-iteration sumrate gain drops below this.
    pub value_tolerance: Option<f64>,
}

impl OracleBudget {
    pub fn iterations(max_iterations: u32) -> Self {
        Self {
            max_iterations,
            value_tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("oracle budget needs at least one iteration".into()));
        }
        if let Some(tol) = self.value_tolerance {
            if !(tol >= 0.0) {
                return Err(Error::InvalidArgument(format!("value tolerance must be >= 0, got {tol}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleTrace {
    /// Sumrate after each completed iteration.
    pub sumrate_per_iteration: Vec<f64>,
    pub iterations_used: usize,
    /// Value gap to a reference solution, when one was computed.
    pub value_gap: Option<f64>,
    /// Set when a singular system needed diagonal loading.
    pub regularized: bool,
}

impl OracleTrace {
    pub fn final_sumrate(&self) -> Option<f64> {
        self.sumrate_per_iteration.last().copied()
    }
}

/// `w_k = √(P/K) h_k / ‖h_k‖`, so that `Σ‖w_k‖² = P`.
pub fn matched_filter(h: &EffectiveChannel, power_budget: f64) -> Precoder {
    let per_user = (power_budget / h.users as f64).sqrt();
    let mut w = Precoder::zeros(h.users, h.antennas);
    for k in 0..h.users {
        let hk = h.user(k);
        let norm = hk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (o, z) in w.user_mut(k).iter_mut().zip(hk) {
                *o = z * (per_user / norm);
            }
        }
    }
    w
}

struct Workspace {
    m: usize,
    eigvecs: DMatrix<C64>,
    eigvals: Vec<f64>,
}

impl Workspace {
    fn power(&self, projected: &[DVector<C64>], nu: f64) -> f64 {
        projected
            .iter()
            .map(|c| {
                c.iter()
                    .zip(&self.eigvals)
                    .map(|(z, d)| z.norm_sqr() / ((d + nu) * (d + nu)))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// One block-coordinate round: receivers, MSE weights, then precoders.
fn wmmse_step(h: &EffectiveChannel, model: &RateModel, w: &Precoder, regularized: &mut bool) -> Result<Precoder> {
    let (k_users, m) = (h.users, h.antennas);
    let a = cross_gains(w, h);

    let mut system = DMatrix::<C64>::zeros(m, m);
    let mut rhs = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let row = &a[k * k_users..(k + 1) * k_users];
        let total: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>() + model.noise_vars[k];
        let u = row[k] / total;
        let mse = 1.0 - (u.conj() * row[k]).re;
        let alpha = model.weights[k];
        let lambda = if mse <= MSE_FLOOR { alpha * WEIGHT_CAP } else { alpha / mse };
        let hk = DVector::from_column_slice(h.user(k));
        system += (&hk * hk.adjoint()) * C64::new(lambda * u.norm_sqr(), 0.0);
        rhs.push(hk * (u * lambda));
    }

    let eig = SymmetricEigen::new(system);
    let mut ws = Workspace {
        m,
        eigvals: eig.eigenvalues.iter().map(|d| d.max(0.0)).collect(),
        eigvecs: eig.eigenvectors,
    };
    let projected: Vec<DVector<C64>> = rhs.iter().map(|b| ws.eigvecs.adjoint() * b).collect();
    let rhs_energy: f64 = rhs.iter().map(|b| b.norm_squared()).sum();
    let budget = model.power_budget;

    let nu = if rhs_energy == 0.0 {
        0.0
    } else {
        let dmax = ws.eigvals.iter().cloned().fold(0.0, f64::max);
        if ws.eigvals.iter().any(|&d| d <= EIGEN_FLOOR * dmax.max(1.0)) {
            // Singular system: load the diagonal and carry on.
            for d in &mut ws.eigvals {
                *d += EIGEN_FLOOR;
            }
            *regularized = true;
            log::debug!("wmmse: singular precoder system, added {EIGEN_FLOOR:e} I");
        }
        if ws.power(&projected, 0.0) <= budget {
            0.0
        } else {
            // Σ|c|²/(d+ν)² ≤ Σ‖b‖²/ν², so this ν is always feasible.
            let mut hi = (rhs_energy / budget).sqrt();
            let mut lo = 0.0;
            let mut converged = false;
            for _ in 0..MAX_HALVINGS {
                let mid = 0.5 * (lo + hi);
                let p = ws.power(&projected, mid);
                if !p.is_finite() {
                    break;
                }
                if p > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    converged = true;
                    break;
                }
            }
            let p = ws.power(&projected, hi);
            if !(converged || (p <= budget && p >= budget * (1.0 - 1e-9))) || !p.is_finite() {
                return Err(Error::BisectionFailed(MAX_HALVINGS));
            }
            hi
        }
    };

    let mut next = Precoder::zeros(k_users, m);
    for (k, c) in projected.iter().enumerate() {
        let scaled = DVector::from_iterator(m, c.iter().zip(&ws.eigvals).map(|(z, d)| z / (d + nu)));
        let wk = &ws.eigvecs * scaled;
        next.user_mut(k).copy_from_slice(wk.as_slice());
    }
    debug_assert_eq!(ws.m, m);
    Ok(next)
}

/// Budgeted WMMSE. Cold starts use [`matched_filter`].
pub fn wmmse(
    h: &EffectiveChannel,
    model: &RateModel,
    budget: &OracleBudget,
    warm_start: Option<&Precoder>,
) -> Result<(Precoder, OracleTrace)> {
    budget.validate()?;
    check_len("noise variances", h.users, model.noise_vars.len())?;
    check_len("user weights", h.users, model.weights.len())?;
    if !h.is_finite() {
        return Err(Error::InvalidArgument("effective channel has non-finite entries".into()));
    }
    if !(model.power_budget > 0.0) {
        return Err(Error::InvalidArgument("power budget must be positive".into()));
    }
    let mut w = match warm_start {
        Some(w0) => {
            check_len("warm-start precoder users", h.users, w0.users)?;
            check_len("warm-start precoder antennas", h.antennas, w0.antennas)?;
            w0.clone()
        }
        None => matched_filter(h, model.power_budget),
    };
    let mut trace = OracleTrace::default();
    let mut previous = sumrate_unchecked(&w, h, &model.weights, &model.noise_vars);
    for _ in 0..budget.max_iterations {
        w = wmmse_step(h, model, &w, &mut trace.regularized)?;
        let value = sumrate_unchecked(&w, h, &model.weights, &model.noise_vars);
        trace.sumrate_per_iteration.push(value);
        trace.iterations_used += 1;
        let gain = value - previous;
        previous = value;
        if budget.value_tolerance.is_some_and(|tol| gain < tol) {
            break;
        }
    }
    Ok((w, trace))
}

/// Real ascent direction `2 ∂F/∂W*` of the weighted sumrate.
fn precoder_gradient(h: &EffectiveChannel, model: &RateModel, w: &Precoder) -> Precoder {
    let (k_users, m) = (h.users, h.antennas);
    let a = cross_gains(w, h);
    let mut grad = Precoder::zeros(k_users, m);
    for k in 0..k_users {
        let row = &a[k * k_users..(k + 1) * k_users];
        let total: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>() + model.noise_vars[k];
        let interference = total - row[k].norm_sqr();
        let scale = 2.0 * model.weights[k] / std::f64::consts::LN_2;
        let hk = h.user(k);
        for j in 0..k_users {
            let coef = if j == k {
                row[j] / total
            } else {
                row[j] * (1.0 / total - 1.0 / interference)
            } * scale;
            for (g, hv) in grad.user_mut(j).iter_mut().zip(hk) {
                *g += hv * coef;
            }
        }
    }
    grad
}

fn project_power(w: &mut Precoder, budget: f64) {
    let p = w.power();
    if p > budget {
        w.scale((budget / p).sqrt());
    }
}

/// Best of `restarts` projected-gradient-ascent runs on `{‖W‖² ≤ P}`.
///
/// Each run starts from a random Gaussian precoder scaled onto the power
/// sphere and takes up to `inner_steps` backtracking steps. Intended for
/// `M·K ≤ 8`; larger instances work but the multistart gets expensive.
pub fn reference_solve(
    h: &EffectiveChannel,
    model: &RateModel,
    restarts: usize,
    inner_steps: usize,
    seed: u64,
) -> Precoder {
    let f = |w: &Precoder| sumrate_unchecked(w, h, &model.weights, &model.noise_vars);
    let mut rng = stream(seed);
    let mut best = matched_filter(h, model.power_budget);
    let mut best_value = f(&best);
    for _ in 0..restarts.max(1) {
        let mut w = Precoder {
            users: h.users,
            antennas: h.antennas,
            data: (0..h.users * h.antennas).map(|_| complex_normal(&mut rng)).collect(),
        };
        let p = w.power();
        if p > 0.0 {
            w.scale((model.power_budget / p).sqrt());
        }
        let mut value = f(&w);
        let mut step = model.power_budget.sqrt() * rng.random_range(0.05..0.5);
        for _ in 0..inner_steps {
            let g = precoder_gradient(h, model, &w);
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand = w.clone();
                for (c, d) in cand.data.iter_mut().zip(&g.data) {
                    *c += d * step;
                }
                project_power(&mut cand, model.power_budget);
                let v = f(&cand);
                if v > value {
                    w = cand;
                    value = v;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if value > best_value {
            best_value = value;
            best = w;
        }
    }
    best
}

/// Value gap `max(0, F(reference) − F(W̃))`.
pub fn oracle_error_estimate(
    candidate: &Precoder,
    h: &EffectiveChannel,
    model: &RateModel,
    reference: &Precoder,
) -> Result<f64> {
    let f_ref = model_value(model, reference, h)?;
    let f_cand = model_value(model, candidate, h)?;
    Ok((f_ref - f_cand).max(0.0))
}

fn model_value(model: &RateModel, w: &Precoder, h: &EffectiveChannel) -> Result<f64> {
    crate::utility::sumrate(w, h, &model.weights, &model.noise_vars)
}
