//! Deterministic matrix flows and their steady states.
//!
//! Every flow is integrated with fixed-step classical RK4 and symmetrized
//! after each step. Steady states of time-periodic (or constant) flows are
//! found by shooting on the one-period map: a Newton iteration on
//! `Φ(σ₀) − σ₀ = 0` with a finite-difference Jacobian, followed by plain
//! period iteration until successive periods agree.

mod flow;
mod lyapunov;
mod periodic;
mod riccati;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::Mat4;

pub use flow::{
    filter_riccati_rhs, integrate_conditional_riccati, integrate_lyapunov, lyapunov_rhs,
    MatrixTrajectory, Rk4PeriodMap, DIVERGENCE_GUARD,
};
pub use lyapunov::{
    check_hurwitz, check_stable, lyapunov_periodic, monodromy, steady_state_lyapunov,
};
pub use periodic::{
    periodic_steady_state, time_average, PeriodPropagator, PeriodicOptions, PeriodicTrajectory,
    Stats,
};
pub use riccati::{conditional_periodic_state, control_rate_scale, solve_control_riccati};

/// Matrix-valued function of time: either constant or periodic.
#[derive(Clone)]
pub enum MatrixFn {
    Constant(Mat4),
    Periodic {
        period: f64,
        f: Arc<dyn Fn(f64) -> Mat4 + Send + Sync>,
    },
}

impl fmt::Debug for MatrixFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixFn::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            MatrixFn::Periodic { period, .. } => {
                f.debug_struct("Periodic").field("period", period).finish_non_exhaustive()
            }
        }
    }
}

impl From<Mat4> for MatrixFn {
    fn from(m: Mat4) -> Self {
        MatrixFn::Constant(m)
    }
}

impl MatrixFn {
    pub fn periodic(period: f64, f: impl Fn(f64) -> Mat4 + Send + Sync + 'static) -> Self {
        MatrixFn::Periodic { period, f: Arc::new(f) }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Mat4 {
        match self {
            MatrixFn::Constant(m) => *m,
            MatrixFn::Periodic { f, .. } => f(t),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            MatrixFn::Constant(_) => None,
            MatrixFn::Periodic { period, .. } => Some(*period),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixFn::Constant(_))
    }

    pub fn constant_value(&self) -> Option<Mat4> {
        match self {
            MatrixFn::Constant(m) => Some(*m),
            MatrixFn::Periodic { .. } => None,
        }
    }

    /// Pointwise transform; constants stay constant.
    pub fn map(&self, g: impl Fn(&Mat4) -> Mat4 + Send + Sync + 'static) -> MatrixFn {
        match self {
            MatrixFn::Constant(m) => MatrixFn::Constant(g(m)),
            MatrixFn::Periodic { period, f } => {
                let f = Arc::clone(f);
                MatrixFn::periodic(*period, move |t| g(&f(t)))
            }
        }
    }

    /// Pointwise combination of two functions sharing a period.
    ///
    /// Panics if both are periodic with different periods.
    pub fn zip_with(
        &self,
        other: &MatrixFn,
        g: impl Fn(&Mat4, &Mat4) -> Mat4 + Send + Sync + 'static,
    ) -> MatrixFn {
        match (self, other) {
            (MatrixFn::Constant(a), MatrixFn::Constant(b)) => MatrixFn::Constant(g(a, b)),
            _ => {
                let period = match (self.period(), other.period()) {
                    (Some(p), Some(q)) => {
                        assert!(
                            ((p - q) / p).abs() < 1e-12,
                            "cannot combine periods {p} and {q}"
                        );
                        p
                    }
                    (Some(p), None) | (None, Some(p)) => p,
                    (None, None) => unreachable!(),
                };
                let (a, b) = (self.clone(), other.clone());
                MatrixFn::periodic(period, move |t| g(&a.at(t), &b.at(t)))
            }
        }
    }

    pub fn transpose(&self) -> MatrixFn {
        self.map(|m| m.transpose())
    }
}

/// Which matrix flow a problem describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Lyapunov,
    ConditionalRiccati,
}

/// Drift, diffusion and measurement matrices of a monitored linear system.
#[derive(Debug, Clone)]
pub struct MatrixFlowProblem {
    pub drift: MatrixFn,
    pub diffusion: Mat4,
    pub e: Mat4,
    pub b: Mat4,
    pub kind: FlowKind,
}

impl MatrixFlowProblem {
    pub fn period(&self) -> Option<f64> {
        self.drift.period()
    }

    /// The same system with the measurement switched off.
    pub fn unmonitored(&self) -> Self {
        Self {
            e: Mat4::zeros(),
            b: Mat4::zeros(),
            kind: FlowKind::Lyapunov,
            ..self.clone()
        }
    }
}

/// Step-size and convergence controls shared by all deterministic solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Optional upper bound on the RK4 step (units of 1/ω_m).
    pub dt: Option<f64>,
    pub tol_period: f64,
    pub max_periods: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { dt: None, tol_period: 1e-9, max_periods: 1_000_000 }
    }
}

impl Numerics {
    /// RK4 step for a flow whose fastest rate is `rate`:
    /// `min(2π·10⁻³/ω_m, 0.05/rate)`, where the oscillation bound only
    /// applies to time-dependent coefficients. The result always divides
    /// `period` into at least 8 steps.
    pub fn step(&self, omega_m: f64, time_dependent: bool, rate: f64, period: f64) -> f64 {
        let mut dt = 0.05 / rate.max(1e-300);
        if time_dependent {
            dt = dt.min(1e-3 * 2.0 * PI / omega_m);
        }
        if let Some(cap) = self.dt {
            dt = dt.min(cap);
        }
        let n = (period / dt - 1e-9).ceil().max(8.0);
        period / n
    }

    pub fn periodic_options(&self) -> PeriodicOptions {
        PeriodicOptions {
            tol_period: self.tol_period,
            max_periods: self.max_periods,
            ..PeriodicOptions::default()
        }
    }
}

/// `(M + Mᵀ) / 2`.
#[inline]
pub fn symmetrize(m: &Mat4) -> Mat4 {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry-wise rate of a matrix function, sampled over a period.
pub fn rate_scale(m: &MatrixFn, samples: usize) -> f64 {
    match m {
        MatrixFn::Constant(c) => c.amax(),
        MatrixFn::Periodic { period, .. } => (0..samples)
            .map(|k| m.at(*period * k as f64 / samples as f64).amax())
            .fold(0.0, f64::max),
    }
}
