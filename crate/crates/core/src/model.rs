//! The two-tone BAE optomechanical model and its closed-form benchmarks.
//!
//! Frequencies are in units of ω_m. In the rotating-wave approximation (RWA)
//! the drift is constant; the full model keeps the counter-rotating terms and
//! is periodic with period `π/ω_m`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    conditional_periodic_state, FlowKind, MatrixFlowProblem, MatrixFn, Numerics,
    PeriodicTrajectory,
};
use crate::{idx, Error, Mat4, Result, Vec4};

/// Physical parameters of the monitored optomechanical system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_m: f64,
    /// Linearized coupling.
    pub g: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Mechanical decay rate.
    pub gamma: f64,
    /// Thermal phonon number of the mechanical bath.
    pub nbar: f64,
    /// Detection efficiency.
    pub eta: f64,
    pub rwa: bool,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { omega_m: 1.0, g: 0.05, kappa: 1.0, gamma: 1e-4, nbar: 10.0, eta: 1.0, rwa: true }
    }
}

/// Derived dimensionless scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub zeta: f64,
    pub cooperativity: f64,
    pub q_factor: f64,
}

/// Squeezing threshold variance and the lower edge of the usable κ range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub threshold: f64,
    pub excluded_kappa_bound: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("omega_m", self.omega_m), ("kappa", self.kappa), ("gamma", self.gamma)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParams(format!("g must be non-negative, got {}", self.g)));
        }
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(Error::InvalidParams(format!("nbar must be non-negative, got {}", self.nbar)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParams(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    /// `C = 4g²/(κγ)`.
    pub fn cooperativity(&self) -> f64 {
        4.0 * self.g * self.g / (self.kappa * self.gamma)
    }

    /// `Q_m = ω_m/γ`.
    pub fn q_factor(&self) -> f64 {
        self.omega_m / self.gamma
    }

    /// Modulation period `π/ω_m` of the full model.
    pub fn period(&self) -> f64 {
        std::f64::consts::PI / self.omega_m
    }

    pub fn thermal_variance(&self) -> f64 {
        self.nbar + 0.5
    }

    pub fn scales(&self) -> DerivedScales {
        DerivedScales { zeta: zeta(self), cooperativity: self.cooperativity(), q_factor: self.q_factor() }
    }

    /// Fastest open-loop rate, used for the RK4 step rule.
    pub fn rate_scale(&self) -> f64 {
        self.kappa.max(2.0 * self.g).max(self.gamma)
    }

    /// RK4 step for flows of this model whose extra rate scale is `extra`.
    pub fn step(&self, numerics: &Numerics, extra: f64) -> f64 {
        numerics.step(self.omega_m, !self.rwa, self.rate_scale().max(extra), self.period())
    }
}

/// Drift matrix `A(t)`.
pub fn drift_at(p: &SystemParams, t: f64) -> Mat4 {
    let mut a = Mat4::from_diagonal(&Vec4::new(
        -p.kappa / 2.0,
        -p.kappa / 2.0,
        -p.gamma / 2.0,
        -p.gamma / 2.0,
    ));
    if p.rwa {
        a[(idx::Y, idx::Q)] = p.g;
        a[(idx::P, idx::X)] = p.g;
    } else {
        let (s, c) = (2.0 * p.omega_m * t).sin_cos();
        a[(idx::Y, idx::Q)] = p.g * (1.0 + c);
        a[(idx::Y, idx::P)] = p.g * s;
        a[(idx::Q, idx::X)] = -p.g * s;
        a[(idx::P, idx::X)] = p.g * (1.0 + c);
    }
    a
}

/// Diffusion matrix `D`.
pub fn diffusion(p: &SystemParams) -> Mat4 {
    let th = p.gamma * (2.0 * p.nbar + 1.0);
    Mat4::from_diagonal(&Vec4::new(p.kappa, p.kappa, th, th))
}

/// Measurement matrix; `E = B` for homodyne detection of `Y`.
pub fn measurement(p: &SystemParams) -> Mat4 {
    let mut b = Mat4::zeros();
    b[(idx::Y, idx::Y)] = (p.eta * p.kappa).sqrt();
    b
}

/// Drift, diffusion and measurement matrices of the monitored system.
pub fn build_matrices(p: &SystemParams) -> Result<MatrixFlowProblem> {
    p.validate()?;
    let drift = if p.rwa {
        MatrixFn::Constant(drift_at(p, 0.0))
    } else {
        let q = *p;
        MatrixFn::periodic(p.period(), move |t| drift_at(&q, t))
    };
    let b = measurement(p);
    Ok(MatrixFlowProblem { drift, diffusion: diffusion(p), e: b, b, kind: FlowKind::ConditionalRiccati })
}

/// `ζ = √(γκ[16g²η(1+2n̄) + γκ])`.
pub fn zeta(p: &SystemParams) -> f64 {
    let gk = p.gamma * p.kappa;
    (gk * (16.0 * p.g * p.g * p.eta * (1.0 + 2.0 * p.nbar) + gk)).sqrt()
}

/// Cancellation-free pieces of the closed forms: `(ζ − γκ, s, N)` with
/// `s = √(γ² + κ² + 2ζ)` and `N = ζ + γ² − γs`.
pub(crate) fn closed_form_parts(p: &SystemParams) -> (f64, f64, f64) {
    let (g, k) = (p.gamma, p.kappa);
    let x = 16.0 * p.g * p.g * p.eta * (1.0 + 2.0 * p.nbar) / (g * k);
    let delta = g * k * x / ((1.0 + x).sqrt() + 1.0);
    let z = g * k + delta;
    let s = (g * g + k * k + 2.0 * z).sqrt();
    let n = delta * (k - g + s) / (k + g + s);
    (delta, s, n)
}

/// Closed-form conditional steady-state variance of `Q` under the RWA.
pub fn conditional_variance_analytic(p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if p.g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let (_, s, n) = closed_form_parts(p);
    Ok(s * n / (16.0 * p.g * p.g * p.eta * p.kappa))
}

/// Adiabatic (large κ) limit `(√(1 + 4ηC(2n̄+1)) − 1)/(4Cη)`.
pub fn adiabatic_variance(p: &SystemParams) -> Result<f64> {
    p.validate()?;
    let c = p.cooperativity();
    if c == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let m = 2.0 * p.nbar + 1.0;
    // Rationalized to stay accurate as C → 0.
    Ok(m / ((1.0 + 4.0 * p.eta * c * m).sqrt() + 1.0))
}

/// Threshold `γ(2n̄+1)/(γ+κ)` and excluded-region bound `2n̄/Q_m`.
pub fn squeezing_threshold(p: &SystemParams) -> Threshold {
    Threshold {
        threshold: p.gamma * (2.0 * p.nbar + 1.0) / (p.gamma + p.kappa),
        excluded_kappa_bound: 2.0 * p.nbar / p.q_factor(),
    }
}

/// Thermal initial covariance with a vacuum cavity.
pub fn initial_covariance(p: &SystemParams) -> Mat4 {
    let th = 2.0 * p.nbar + 1.0;
    Mat4::from_diagonal(&Vec4::new(1.0, 1.0, th, th))
}

/// Periodic (RWA: constant) steady state of the conditional covariance.
pub fn conditional_steady_state(p: &SystemParams, numerics: &Numerics) -> Result<PeriodicTrajectory> {
    let problem = build_matrices(p)?;
    let dt = p.step(numerics, 0.0);
    conditional_periodic_state(
        &problem,
        &initial_covariance(p),
        p.period(),
        dt,
        &numerics.periodic_options(),
    )
}

/// The RWA conditional variance: closed form when `g > 0`, thermal otherwise.
pub fn conditional_variance_rwa(p: &SystemParams) -> Result<f64> {
    if p.g == 0.0 {
        p.validate()?;
        Ok(p.thermal_variance())
    } else {
        conditional_variance_analytic(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_lyapunov;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(g: f64, kappa: f64) -> SystemParams {
        SystemParams { g, kappa, ..Default::default() }
    }

    fn literal_variance(p: &SystemParams) -> f64 {
        let z = zeta(p);
        let s = (p.gamma.powi(2) + p.kappa.powi(2) + 2.0 * z).sqrt();
        s / (16.0 * p.g * p.g * p.eta * p.kappa) * (z + p.gamma.powi(2) - p.gamma * s)
    }

    #[test]
    fn rwa_matrices() {
        let m = build_matrices(&params(0.05, 1.0)).unwrap();
        let a = m.drift.constant_value().unwrap();
        assert_eq!(a[(1, 2)], 0.05);
        assert_eq!(a[(3, 0)], 0.05);
        assert_eq!(a[(0, 0)], -0.5);
        assert_eq!(a[(2, 2)], -5e-5);
        assert_eq!(m.diffusion[(2, 2)], 1e-4 * 21.0);
        assert_eq!(m.e, m.b);
        assert_eq!(m.b[(1, 1)], 1.0);
        assert_eq!(m.b.iter().filter(|x| **x != 0.0).count(), 1);
        let a0 = build_matrices(&params(0.0, 1.0)).unwrap().drift.constant_value().unwrap();
        assert_eq!(a0, Mat4::from_diagonal(&a0.diagonal()));
    }

    #[test]
    fn full_matrices() {
        let p = SystemParams { rwa: false, ..params(0.05, 1.0) };
        let m = build_matrices(&p).unwrap();
        assert_eq!(m.period(), Some(PI));
        let a = m.drift.at(0.0);
        assert_eq!((a[(1, 2)], a[(1, 3)], a[(2, 0)], a[(3, 0)]), (0.1, 0.0, 0.0, 0.1));
        let a = m.drift.at(PI / 4.0);
        for (v, want) in [(a[(1, 2)], 0.05), (a[(1, 3)], 0.05), (a[(2, 0)], -0.05), (a[(3, 0)], 0.05)] {
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(&params(0.0, 1.0)) - 1e-4).abs() < 1e-18);
        assert!((zeta(&params(0.05, 1.0)) - 9.166e-3).abs() < 1e-6);
        assert!((zeta(&params(0.3, 1.0)) - 5.499e-2).abs() < 1e-5);
    }

    #[test]
    fn conditional_variance_values() {
        let v = conditional_variance_analytic(&params(0.05, 1.0)).unwrap();
        assert!((v - 0.228687559962).abs() < 1e-10);
        assert_eq!(conditional_variance_analytic(&params(0.0, 1.0)), Err(Error::ZeroCoupling));
        for (g, k) in [(0.05, 1.0), (0.3, 10.0), (0.01, 0.01), (1e-3, 1e-4)] {
            let p = params(g, k);
            let a = conditional_variance_analytic(&p).unwrap();
            assert!(((a - literal_variance(&p)) / a).abs() < 1e-9, "g={g} κ={k}");
        }
        // Tiny coupling approaches the thermal value.
        let v = conditional_variance_analytic(&params(1e-9, 1.0)).unwrap();
        assert!((v - 10.5).abs() < 1e-6);
    }

    #[test]
    fn adiabatic_values() {
        assert!((adiabatic_variance(&params(0.3, 10.0)).unwrap() - 0.1201).abs() < 1e-4);
        assert!((adiabatic_variance(&params(0.05, 10.0)).unwrap() - 0.700).abs() < 1e-3);
        let tiny = adiabatic_variance(&params(1e-8, 1.0)).unwrap();
        assert!((tiny - 10.5).abs() < 1e-6);
        assert_eq!(adiabatic_variance(&params(0.0, 1.0)), Err(Error::ZeroCoupling));
    }

    #[test]
    fn threshold_values() {
        let t = squeezing_threshold(&params(0.05, 0.01));
        assert!((t.threshold - 0.2079).abs() < 1e-4);
        assert!((t.excluded_kappa_bound - 2e-3).abs() < 1e-15);
        let t = squeezing_threshold(&SystemParams { nbar: 0.0, ..params(0.05, 1.0) });
        assert!(t.threshold < 0.5);
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            SystemParams { kappa: 0.0, ..Default::default() },
            SystemParams { gamma: -1.0, ..Default::default() },
            SystemParams { eta: 1.5, ..Default::default() },
            SystemParams { g: -0.1, ..Default::default() },
            SystemParams { nbar: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(build_matrices(&p), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn conditional_riccati_matches_closed_form() {
        let p = params(0.05, 1.0);
        let tr = conditional_steady_state(&p, &Numerics::default()).unwrap();
        assert!(tr.constant);
        let v = tr.values[0][(2, 2)] / 2.0;
        assert!((v - 0.2287).abs() < 1e-4);
        assert!(((v - conditional_variance_analytic(&p).unwrap()) / v).abs() < 1e-9);
    }

    #[test]
    fn uncoupled_mechanics_stays_thermal() {
        let tr = conditional_steady_state(&params(0.0, 1.0), &Numerics::default()).unwrap();
        let s = tr.values[0];
        assert!((s[(2, 2)] - 21.0).abs() < 1e-9 && (s[(3, 3)] - 21.0).abs() < 1e-9);
        assert!(s[(2, 3)].abs() < 1e-12);
    }

    #[test]
    fn qnd_quadrature_is_conserved() {
        let p = params(0.05, 1.0);
        let m = build_matrices(&p).unwrap();
        let s0 = initial_covariance(&p);
        let tr = integrate_lyapunov(&m, &s0, 2000.0, 0.05).unwrap();
        for s in &tr.values {
            assert!((s[(2, 2)] - 21.0).abs() < 1e-9);
        }
        // P is heated by back-action, roughly linearly at rate 4g²/κ·… > 0.
        let pp: Vec<f64> = tr.values.iter().map(|s| s[(3, 3)]).collect();
        assert!(pp.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(*pp.last().unwrap() > 21.0 + 10.0);
    }

    proptest! {
        #[test]
        fn zeta_bounded_below(g in 0.0f64..1.0, k in 1e-3f64..100.0, nbar in 0.0f64..50.0) {
            let p = SystemParams { g, kappa: k, nbar, ..Default::default() };
            let z = zeta(&p);
            prop_assert!(z >= p.gamma * k * (1.0 - 1e-14));
            if g > 0.0 { prop_assert!(z > p.gamma * k); }
        }

        #[test]
        fn closed_forms_increase_with_nbar(g in 1e-3f64..1.0, k in 1e-3f64..100.0, n in 0.0f64..50.0, dn in 0.1f64..10.0) {
            let p = SystemParams { g, kappa: k, nbar: n, ..Default::default() };
            let q = SystemParams { nbar: n + dn, ..p };
            prop_assert!(zeta(&q) > zeta(&p));
            prop_assert!(conditional_variance_analytic(&q).unwrap() > conditional_variance_analytic(&p).unwrap());
            prop_assert!(adiabatic_variance(&q).unwrap() > adiabatic_variance(&p).unwrap());
        }

        #[test]
        fn stable_form_matches_literal(g in 1e-2f64..1.0, k in 1e-2f64..100.0) {
            let p = SystemParams { g, kappa: k, ..Default::default() };
            let a = conditional_variance_analytic(&p).unwrap();
            prop_assert!(((a - literal_variance(&p)) / a).abs() < 1e-8);
        }
    }
}
