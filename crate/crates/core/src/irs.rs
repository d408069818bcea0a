//! IRS element models and the feasible parameter box.
//!
//! The ideal surface is parameterized by `θ = [A; φ]` (length `2S`) with
//! element response `A_i e^{jφ_i}`. The varactor surface is parameterized by
//! one capacitance per element, in picofarads, mapped through a
//! transmission-line surrogate that is the same for every element.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::C64;

const PICO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IrsKind {
    Ideal,
    Varactor,
}

impl std::fmt::Display for IrsKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IrsKind::Ideal => "ideal",
            IrsKind::Varactor => "varactor",
        })
    }
}

/// Equivalent circuit of one varactor-loaded patch: a series R-L-C branch in
/// parallel with the patch inductance, terminating free space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaractorCircuit {
    pub frequency_hz: f64,
    pub series_resistance_ohm: f64,
    pub series_inductance_h: f64,
    pub patch_inductance_h: f64,
    pub free_space_impedance_ohm: f64,
}

impl Default for VaractorCircuit {
    fn default() -> Self {
        Self {
            frequency_hz: 5e9,
            series_resistance_ohm: 1.0,
            series_inductance_h: 0.7e-9,
            patch_inductance_h: 2.5e-9,
            free_space_impedance_ohm: 376.73,
        }
    }
}

impl VaractorCircuit {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            problems.push(format!("varactor.frequency_hz must be > 0 (got {})", self.frequency_hz));
        }
        if !(self.free_space_impedance_ohm.is_finite() && self.free_space_impedance_ohm > 0.0) {
            problems.push(format!(
                "varactor.free_space_impedance_ohm must be > 0 (got {})",
                self.free_space_impedance_ohm
            ));
        }
        if !(self.series_resistance_ohm.is_finite() && self.series_resistance_ohm >= 0.0) {
            problems.push(format!(
                "varactor.series_resistance_ohm must be >= 0 (got {})",
                self.series_resistance_ohm
            ));
        }
        for (name, v) in [
            ("varactor.series_inductance_h", self.series_inductance_h),
            ("varactor.patch_inductance_h", self.patch_inductance_h),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be > 0 (got {v})"));
            }
        }
        problems
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    fn load_impedance(&self, capacitance_f: f64) -> (C64, C64) {
        let w = self.omega();
        let branch = C64::new(self.series_resistance_ohm, w * self.series_inductance_h - 1.0 / (w * capacitance_f));
        let patch = C64::new(0.0, w * self.patch_inductance_h);
        let z = patch * branch / (patch + branch);
        // dZ/dC through the branch reactance -1/(ωC)
        let dz_dbranch = patch * patch / ((patch + branch) * (patch + branch));
        let dbranch_dc = C64::new(0.0, 1.0 / (w * capacitance_f * capacitance_f));
        (z, dz_dbranch * dbranch_dc)
    }

    /// Reflection coefficient for a capacitance given in picofarads.
    pub fn gamma(&self, capacitance_pf: f64) -> C64 {
        let (z, _) = self.load_impedance(capacitance_pf * PICO);
        let z0 = self.free_space_impedance_ohm;
        (z - z0) / (z + z0)
    }

    /// `dΓ/dC` with `C` in picofarads.
    pub fn gamma_derivative(&self, capacitance_pf: f64) -> C64 {
        let (z, dz_dc) = self.load_impedance(capacitance_pf * PICO);
        let z0 = self.free_space_impedance_ohm;
        let dgamma_dz = 2.0 * z0 / ((z + z0) * (z + z0));
        dgamma_dz * dz_dc * PICO
    }
}

/// Ideal element response `A_i e^{jφ_i}`.
pub fn reflection_ideal(amplitudes: &[f64], phases: &[f64]) -> Result<Vec<C64>> {
    check_len("reflection_ideal phases", amplitudes.len(), phases.len())?;
    Ok(amplitudes
        .iter()
        .zip(phases)
        .map(|(&a, &p)| C64::from_polar(a, p))
        .collect())
}

pub fn reflection_varactor(capacitances_pf: &[f64], circuit: &VaractorCircuit) -> Result<Vec<C64>> {
    capacitances_pf
        .iter()
        .map(|&c| {
            if c > 0.0 && c.is_finite() {
                Ok(circuit.gamma(c))
            } else {
                Err(Error::InvalidArgument(format!("capacitance must be positive, got {c} pF")))
            }
        })
        .collect()
}

/// The map from real parameters to per-element reflection coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IrsModel {
    Ideal,
    Varactor(VaractorCircuit),
}

impl IrsModel {
    pub fn kind(&self) -> IrsKind {
        match self {
            IrsModel::Ideal => IrsKind::Ideal,
            IrsModel::Varactor(_) => IrsKind::Varactor,
        }
    }

    pub fn parameter_dim(&self, elements: usize) -> usize {
        match self {
            IrsModel::Ideal => 2 * elements,
            IrsModel::Varactor(_) => elements,
        }
    }

    pub fn reflection(&self, theta: &[f64], elements: usize) -> Result<Vec<C64>> {
        check_len("IRS parameter vector", self.parameter_dim(elements), theta.len())?;
        match self {
            IrsModel::Ideal => reflection_ideal(&theta[..elements], &theta[elements..]),
            IrsModel::Varactor(circuit) => reflection_varactor(theta, circuit),
        }
    }

    /// Chain rule from element space to parameter space.
    ///
    /// `contraction[s] = Σ_n g_n ∂H_n/∂r_s` where `g` is the cogradient and
    /// `r` the reflection vector; returns `2 Re(contraction[s] ∂r_s/∂θ)` per
    /// parameter, which is the two-term real gradient for a holomorphic
    /// dependence of `H` on `r`.
    pub fn chain_rule(&self, theta: &[f64], contraction: &[C64]) -> Result<Vec<f64>> {
        let elements = contraction.len();
        check_len("IRS parameter vector", self.parameter_dim(elements), theta.len())?;
        Ok(match self {
            IrsModel::Ideal => {
                let (amp, phase) = theta.split_at(elements);
                let mut grad = vec![0.0; 2 * elements];
                for s in 0..elements {
                    let rot = C64::from_polar(1.0, phase[s]) * contraction[s];
                    grad[s] = 2.0 * rot.re;
                    // ∂r/∂φ = j A e^{jφ}
                    grad[elements + s] = -2.0 * amp[s] * rot.im;
                }
                grad
            }
            IrsModel::Varactor(circuit) => theta
                .iter()
                .zip(contraction)
                .map(|(&c, &q)| 2.0 * (q * circuit.gamma_derivative(c)).re)
                .collect(),
        })
    }
}

/// Axis-aligned feasible set for θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box bounds", lower.len(), upper.len())?;
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidArgument(format!(
                    "box bound {i}: need finite lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[a_min, a_max]^S × [φ_min, φ_max]^S`.
    pub fn ideal(elements: usize, amplitude: (f64, f64), phase: (f64, f64)) -> Result<Self> {
        let mut lower = vec![amplitude.0; elements];
        let mut upper = vec![amplitude.1; elements];
        lower.extend(std::iter::repeat_n(phase.0, elements));
        upper.extend(std::iter::repeat_n(phase.1, elements));
        Self::new(lower, upper)
    }

    pub fn varactor(elements: usize, capacitance_pf: (f64, f64)) -> Result<Self> {
        if capacitance_pf.0 <= 0.0 {
            return Err(Error::InvalidArgument("capacitance lower bound must be positive".into()));
        }
        Self::new(vec![capacitance_pf.0; elements], vec![capacitance_pf.1; elements])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean diameter `‖upper − lower‖`.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn project(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len("projection input", self.dim(), theta.len())?;
        Ok(theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&l, &u))| x.clamp(l, u))
            .collect())
    }

    pub fn project_in_place(&self, theta: &mut [f64]) {
        for (x, (&l, &u)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(l, u);
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&l, &u))| x >= l && x <= u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect()
    }
}

/// Euclidean projection onto the box (componentwise clamp).
pub fn project(theta: &[f64], bounds: &ParameterBox) -> Result<Vec<f64>> {
    bounds.project(theta)
}

/// Current IRS configuration together with its element model.
#[derive(Clone, Debug, PartialEq)]
pub struct IrsParameters {
    pub kind: IrsKind,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ideal_reflection_examples() {
        let r = reflection_ideal(&[1.0; 4], &[0.0; 4]).unwrap();
        assert!(r.iter().all(|z| *z == C64::new(1.0, 0.0)));

        let r = reflection_ideal(&[0.0, 1.0], &[1.3, 0.2]).unwrap();
        assert_eq!(r[0], C64::new(0.0, 0.0));

        let r = reflection_ideal(&[0.5], &[PI / 2.0]).unwrap();
        assert!((r[0] - C64::new(0.0, 0.5)).norm() < 1e-12);

        assert!(matches!(
            reflection_ideal(&[1.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lossless_varactor_reflects_everything() {
        let circuit = VaractorCircuit {
            series_resistance_ohm: 0.0,
            ..Default::default()
        };
        for i in 0..1000 {
            let c = 0.2 + 1.8 * i as f64 / 999.0;
            assert!((circuit.gamma(c).norm() - 1.0).abs() < 1e-9, "C={c}");
        }
    }

    #[test]
    fn varactor_is_passive() {
        for rs in [0.0, 0.5, 1.0, 5.0, 50.0] {
            let circuit = VaractorCircuit {
                series_resistance_ohm: rs,
                ..Default::default()
            };
            for i in 0..1000 {
                let c = 0.2 + 1.8 * i as f64 / 999.0;
                assert!(circuit.gamma(c).norm() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn default_varactor_phase_is_monotone_with_wide_coverage() {
        let circuit = VaractorCircuit::default();
        let n = 1000;
        let mut unwrapped = Vec::with_capacity(n);
        let mut prev = circuit.gamma(0.2).arg();
        let mut acc = prev;
        for i in 0..n {
            let c = 0.2 + 1.8 * i as f64 / (n - 1) as f64;
            let a = circuit.gamma(c).arg();
            let mut d = a - prev;
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            acc += d;
            prev = a;
            unwrapped.push(acc);
        }
        let steps: Vec<f64> = unwrapped.windows(2).map(|w| w[1] - w[0]).collect();
        let decreasing = steps.iter().all(|&d| d <= 0.0);
        let increasing = steps.iter().all(|&d| d >= 0.0);
        assert!(decreasing || increasing);
        let coverage = (unwrapped[n - 1] - unwrapped[0]).abs().to_degrees();
        assert!(coverage > 270.0, "coverage {coverage}");
    }

    #[test]
    fn varactor_derivative_matches_richardson() {
        let circuit = VaractorCircuit::default();
        let mut rng = crate::rng::stream(11);
        for _ in 0..50 {
            let c: f64 = rng.random_range(0.25..1.95);
            let fd = |h: f64| (circuit.gamma(c + h) - circuit.gamma(c - h)) / (2.0 * h);
            let coarse = fd(1e-6);
            let fine = fd(1e-7);
            let ratio = coarse.norm() / fine.norm();
            assert!((ratio - 1.0).abs() < 1e-2, "C={c} ratio={ratio}");
            let analytic = circuit.gamma_derivative(c);
            assert!((analytic - fine).norm() <= 1e-5 * analytic.norm().max(1.0), "C={c}");
        }
    }

    #[test]
    fn nonpositive_capacitance_rejected() {
        let circuit = VaractorCircuit::default();
        assert!(reflection_varactor(&[1.0, 0.0], &circuit).is_err());
        assert!(reflection_varactor(&[-1.0], &circuit).is_err());
    }

    #[test]
    fn projection_examples() {
        let b = ParameterBox::ideal(2, (0.0, 1.0), (-2.0 * PI, 2.0 * PI)).unwrap();
        let inside = vec![0.3, 0.9, 1.0, -6.0];
        assert_eq!(project(&inside, &b).unwrap(), inside);
        let p = project(&[1.2, -0.1, 7.0, -7.0], &b).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 2.0 * PI, -2.0 * PI]);
        assert!(project(&[0.0], &b).is_err());
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        // F(r) = Re(Σ q_s r_s) has cogradient contraction q/2 with ∂F/∂θ = Re(q ∂r/∂θ)
        let mut rng = crate::rng::stream(5);
        let s = 6;
        let q: Vec<C64> = (0..s).map(|_| crate::rng::complex_normal(&mut rng)).collect();
        let half: Vec<C64> = q.iter().map(|z| z * 0.5).collect();
        let models = [IrsModel::Ideal, IrsModel::Varactor(VaractorCircuit::default())];
        for model in models {
            let dim = model.parameter_dim(s);
            let theta: Vec<f64> = match model {
                IrsModel::Ideal => (0..dim)
                    .map(|i| if i < s { rng.random_range(0.1..0.9) } else { rng.random_range(-3.0..3.0) })
                    .collect(),
                IrsModel::Varactor(_) => (0..dim).map(|_| rng.random_range(0.3..1.9)).collect(),
            };
            let f = |t: &[f64]| -> f64 {
                let r = model.reflection(t, s).unwrap();
                q.iter().zip(&r).map(|(a, b)| (a * b).re).sum()
            };
            let grad = model.chain_rule(&theta, &half).unwrap();
            for i in 0..dim {
                let h = 1e-6;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (f(&tp) - f(&tm)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{model:?} {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            x in prop::collection::vec(-10.0f64..10.0, 8),
            y in prop::collection::vec(-10.0f64..10.0, 8),
        ) {
            let b = ParameterBox::ideal(4, (0.0, 1.0), (-2.0 * PI, 2.0 * PI)).unwrap();
            let px = b.project(&x).unwrap();
            let py = b.project(&y).unwrap();
            prop_assert_eq!(b.project(&px).unwrap(), px.clone());
            let d = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            prop_assert!(d(&px, &py) <= d(&x, &y) + 1e-12);
            prop_assert!(b.contains(&px));
        }

        #[test]
        fn ideal_magnitude_bounded_by_amplitude(
            a in prop::collection::vec(0.0f64..1.0, 5),
            p in prop::collection::vec(-7.0f64..7.0, 5),
        ) {
            let r = reflection_ideal(&a, &p).unwrap();
            for (z, amp) in r.iter().zip(&a) {
                prop_assert!(z.norm() <= amp + 1e-15);
            }
        }
    }
}
