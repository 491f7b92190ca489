//! Bayesian (state-based, LQG) feedback.
//!
//! The control `u = −K r̄_c` acts on the filtered conditional mean, with
//! `K = Ξ⁻¹FᵀY` and `Y` the stabilizing solution of the control Riccati
//! equation for the cost `⟨rᵀSr⟩ + uᵀΞu`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    control_rate_scale, lyapunov_periodic, rate_scale, solve_control_riccati, time_average,
    MatrixFn, Numerics, PeriodicOptions, PeriodicTrajectory, Stats,
};
use crate::gaussian::{squeezing_db, variance_q_of, ReportingConvention};
use crate::markov::force_direction;
use crate::model::{build_matrices, closed_form_parts, conditional_steady_state, SystemParams};
use crate::{idx, Error, Mat4, Result, Vec4};

/// Quadratic cost: state weight `S` and actuation weight `Ξ = χ·I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub s: Mat4,
    pub chi: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::with_chi(0.1)
    }
}

impl CostSpec {
    /// Penalizes fluctuations of `Q` only.
    pub fn with_chi(chi: f64) -> Self {
        Self { s: Mat4::from_diagonal(&Vec4::new(0.0, 0.0, 1.0, 0.0)), chi }
    }

    pub fn xi(&self) -> Mat4 {
        Mat4::identity() * self.chi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return Err(Error::InvalidParams(format!("chi must be positive, got {}", self.chi)));
        }
        if (self.s - self.s.transpose()).amax() > 0.0 || self.s.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParams("S must be symmetric positive semidefinite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BayesVariant {
    /// Every quadrature can be displaced.
    Ideal,
    /// A single lab-frame force on the resonator.
    ForceLimited,
}

impl BayesVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BayesVariant::Ideal => "ideal",
            BayesVariant::ForceLimited => "force_limited",
        }
    }
}

/// Direction matrix `F`: `I₄`, or `0₂ ⊕ W(t)`.
pub fn direction_matrix(variant: BayesVariant, omega_m: f64) -> MatrixFn {
    match variant {
        BayesVariant::Ideal => MatrixFn::Constant(Mat4::identity()),
        BayesVariant::ForceLimited => {
            MatrixFn::periodic(PI / omega_m, move |t| force_direction(omega_m, t))
        }
    }
}

/// `K(t) = Ξ⁻¹ F(t)ᵀ Y(t)`.
pub fn lqg_gain(y: &MatrixFn, f: &MatrixFn, xi: &Mat4) -> Result<MatrixFn> {
    let xi_inv = xi.try_inverse().ok_or(Error::SingularXi)?;
    Ok(f.zip_with(y, move |f, y| xi_inv * f.transpose() * y))
}

/// Closed-form RWA gain `β = (√(4/χ + γ²) − γ)/2`.
pub fn bayes_gain_analytic_rwa(gamma: f64, chi: f64) -> f64 {
    // Rationalized: equal to 2/(χ(√(4/χ + γ²) + γ)).
    2.0 / (chi * ((4.0 / chi + gamma * gamma).sqrt() + gamma))
}

/// Closed-form steady-state excess noise of `Q` under ideal RWA Bayesian
/// feedback: `√χ/√(4 + γ²χ) · (γ² + ζ − γ√(κ²+γ²+2ζ))² / (16g²ηκ)`.
pub fn excess_q_analytic(p: &SystemParams, chi: f64) -> Result<f64> {
    p.validate()?;
    if p.g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let (_, _, n) = closed_form_parts(p);
    Ok(chi.sqrt() / (4.0 + p.gamma * p.gamma * chi).sqrt() * n * n
        / (16.0 * p.g * p.g * p.eta * p.kappa))
}

/// Periodic steady state of `dΣ/dt = Ã_bΣ + ΣÃ_bᵀ + LLᵀ`.
pub fn excess_noise_bayes(
    a_tilde_b: &MatrixFn,
    l: &MatrixFn,
    period: f64,
    dt: f64,
    opts: &PeriodicOptions,
) -> Result<PeriodicTrajectory> {
    let noise = l.map(|l| l * l.transpose());
    lyapunov_periodic(a_tilde_b, &noise, period, dt, opts)
}

/// Conversion of the dimensionless feedback magnitude to a force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceConversion {
    /// `ℏ/x_zpf` in N·s.
    pub hbar_over_xzpf: f64,
    /// Zero-point motion in m.
    pub x_zpf: f64,
    /// Mechanical angular frequency in s⁻¹.
    pub omega_m_si: f64,
}

impl Default for ForceConversion {
    fn default() -> Self {
        Self { hbar_over_xzpf: 1e-20, x_zpf: 1e-14, omega_m_si: 2.0 * PI * 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageFeedback {
    /// Period average of `Tr[F K Σ Kᵀ Fᵀ]`.
    pub dimensionless: f64,
    /// `(ℏ/x_zpf)·√dimensionless·ω_m`.
    pub force_newton: f64,
}

/// Steady-state mean squared feedback displacement and its force equivalent.
pub fn average_feedback(
    f: &MatrixFn,
    k: &MatrixFn,
    sigma_fb: &PeriodicTrajectory,
    conv: &ForceConversion,
) -> Result<AverageFeedback> {
    if !sigma_fb.converged {
        return Err(Error::NotConverged);
    }
    let n = sigma_fb.len();
    let mut sum = 0.0;
    for (t, s) in sigma_fb.times().zip(sigma_fb.values.iter()) {
        let fk = f.at(t) * k.at(t);
        sum += (fk * s * fk.transpose()).trace();
    }
    let dimensionless = (sum / n as f64).max(0.0);
    Ok(AverageFeedback {
        dimensionless,
        force_newton: conv.hbar_over_xzpf * dimensionless.sqrt() * conv.omega_m_si,
    })
}

/// A Bayesian feedback strategy.
#[derive(Debug, Clone)]
pub struct BayesLaw {
    pub variant: BayesVariant,
    pub cost: CostSpec,
    pub f: MatrixFn,
    pub k: MatrixFn,
    pub y: PeriodicTrajectory,
}

/// Solves the control Riccati equation for `variant` and builds the gain.
pub fn bayes_law(p: &SystemParams, cost: &CostSpec, variant: BayesVariant, numerics: &Numerics) -> Result<BayesLaw> {
    cost.validate()?;
    let problem = build_matrices(p)?;
    let f = direction_matrix(variant, p.omega_m);
    let xi = cost.xi();
    let scale = control_rate_scale(&problem.drift, &f, &cost.s, &xi)?;
    let time_dependent = !(problem.drift.is_constant() && f.is_constant());
    let dt = numerics.step(p.omega_m, time_dependent, p.rate_scale().max(scale), p.period());
    let y = solve_control_riccati(&problem.drift, &f, &cost.s, &xi, p.period(), dt, &numerics.periodic_options())?;
    let k = lqg_gain(&y.to_fn(), &f, &xi)?;
    Ok(BayesLaw { variant, cost: *cost, f, k, y })
}

/// Lab-frame feedback gains `β_Q(t)`, `β_X(t)` of the force-limited law,
/// defined through `H = −(β_Q⟨Q⟩ + β_X⟨X⟩)·Q₀` with `Q₀` the lab-frame position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabGains {
    pub times: Vec<f64>,
    pub beta_q: Vec<f64>,
    pub beta_x: Vec<f64>,
}

/// Projects `K(t)` onto the force direction `n(t) = (sin ω_m t, cos ω_m t)`.
pub fn lab_gains(law: &BayesLaw, omega_m: f64, samples: usize) -> LabGains {
    let period = PI / omega_m;
    let times: Vec<f64> = (0..samples).map(|k| period * k as f64 / samples as f64).collect();
    let project = |t: f64, j: usize| {
        let k = law.k.at(t);
        let (s, c) = (omega_m * t).sin_cos();
        -(s * k[(idx::Q, j)] + c * k[(idx::P, j)])
    };
    LabGains {
        beta_q: times.iter().map(|&t| project(t, idx::Q)).collect(),
        beta_x: times.iter().map(|&t| project(t, idx::X)).collect(),
        times,
    }
}

/// Everything a Bayesian run produces.
#[derive(Debug, Clone)]
pub struct BayesReport {
    pub variant: BayesVariant,
    pub chi: f64,
    /// Period-averaged conditional variance.
    pub var_c: f64,
    pub var_c_stats: Stats,
    pub var_fb: Stats,
    /// `var_fb.mean` in dB, absolute convention.
    pub db: f64,
    pub avg_force: AverageFeedback,
    pub gains: Option<LabGains>,
    pub law: BayesLaw,
    pub sigma_c: PeriodicTrajectory,
    pub excess: PeriodicTrajectory,
    pub sigma_fb: PeriodicTrajectory,
}

impl BayesReport {
    pub fn db_with(&self, convention: ReportingConvention) -> Result<f64> {
        squeezing_db(self.var_fb.mean, convention)
    }
}

/// Conditional steady state, control Riccati, gain, excess noise, variance.
pub fn bayes_report(
    p: &SystemParams,
    cost: &CostSpec,
    variant: BayesVariant,
    numerics: &Numerics,
    conv: &ForceConversion,
) -> Result<BayesReport> {
    let sigma_c = conditional_steady_state(p, numerics)?;
    bayes_report_from(p, cost, variant, &sigma_c, numerics, conv)
}

/// Like [`bayes_report`] with a precomputed conditional steady state.
pub fn bayes_report_from(
    p: &SystemParams,
    cost: &CostSpec,
    variant: BayesVariant,
    sigma_c: &PeriodicTrajectory,
    numerics: &Numerics,
    conv: &ForceConversion,
) -> Result<BayesReport> {
    let problem = build_matrices(p)?;
    let law = bayes_law(p, cost, variant, numerics)?;
    let fk = law.f.zip_with(&law.k, |f, k| f * k);
    let a_tilde = problem.drift.zip_with(&fk, |a, fk| a - fk);
    let (e, b) = (problem.e, problem.b);
    let l = sigma_c.to_fn().map(move |s| e - s * b);
    let time_dependent = !(a_tilde.is_constant() && l.is_constant());
    let dt = numerics.step(p.omega_m, time_dependent, p.rate_scale().max(rate_scale(&a_tilde, 64)), p.period());
    let excess = excess_noise_bayes(&a_tilde, &l, p.period(), dt, &numerics.periodic_options())?;
    let sigma_fb = sigma_c.add(&excess);
    let var_c_stats = time_average(sigma_c, variance_q_of)?;
    let var_fb = time_average(&sigma_fb, variance_q_of)?;
    let avg_force = average_feedback(&law.f, &law.k, &excess, conv)?;
    let gains = (variant == BayesVariant::ForceLimited).then(|| lab_gains(&law, p.omega_m, 256));
    Ok(BayesReport {
        variant,
        chi: cost.chi,
        var_c: var_c_stats.mean,
        var_c_stats,
        var_fb,
        db: squeezing_db(var_fb.mean, ReportingConvention::Absolute)?,
        avg_force,
        gains,
        law,
        sigma_c: sigma_c.clone(),
        excess,
        sigma_fb,
    })
}

/// Bayesian reports for several actuation costs sharing one conditional state.
pub fn chi_scan(
    p: &SystemParams,
    chis: &[f64],
    variant: BayesVariant,
    numerics: &Numerics,
    conv: &ForceConversion,
) -> Result<Vec<BayesReport>> {
    let sigma_c = conditional_steady_state(p, numerics)?;
    chis.par_iter()
        .map(|&chi| bayes_report_from(p, &CostSpec::with_chi(chi), variant, &sigma_c, numerics, conv))
        .collect()
}
