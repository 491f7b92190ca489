use super::{symmetrize, FlowKind, MatrixFlowProblem, MatrixFn};
use crate::gaussian::check_mat4_physicality;
use crate::{Error, Mat4, Result};

/// Entry magnitude beyond which a flow is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Upper bound on the number of samples kept by the open-ended integrators.
const MAX_RECORDED: usize = 20_000;

/// Sampled solution of a matrix flow.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Mat4>,
}

impl MatrixTrajectory {
    pub fn last(&self) -> &Mat4 {
        self.values.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }
}

#[inline]
pub(crate) fn rk4_step<F>(rhs: &F, t: f64, h: f64, y: &Mat4) -> Result<Mat4>
where
    F: Fn(f64, &Mat4) -> Mat4 + ?Sized,
{
    let half = 0.5 * h;
    let k1 = rhs(t, y);
    let k2 = rhs(t + half, &(y + k1 * half));
    let k3 = rhs(t + half, &(y + k2 * half));
    let k4 = rhs(t + h, &(y + k3 * h));
    let next = symmetrize(&(y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)));
    if next.iter().all(|x| x.is_finite() && x.abs() <= DIVERGENCE_GUARD) {
        Ok(next)
    } else {
        Err(Error::Divergence { t: t + h })
    }
}

/// Right-hand side `Aσ + σAᵀ + N` of a Lyapunov flow.
pub fn lyapunov_rhs(drift: &MatrixFn, noise: &MatrixFn) -> impl Fn(f64, &Mat4) -> Mat4 + Send + Sync {
    let (a, n) = (drift.clone(), noise.clone());
    move |t, s| {
        let at = a.at(t);
        at * s + s * at.transpose() + n.at(t)
    }
}

/// Right-hand side `Aσ + σAᵀ + D − (E − σB)(E − σB)ᵀ` of the conditional flow.
pub fn filter_riccati_rhs(problem: &MatrixFlowProblem) -> impl Fn(f64, &Mat4) -> Mat4 + Send + Sync {
    let a = problem.drift.clone();
    let (d, e, b) = (problem.diffusion, problem.e, problem.b);
    let monitored = problem.kind == FlowKind::ConditionalRiccati;
    move |t, s| {
        let at = a.at(t);
        let mut out = at * s + s * at.transpose() + d;
        if monitored {
            let v = e - s * b;
            out -= v * v.transpose();
        }
        out
    }
}

fn integrate<F>(
    rhs: F,
    sigma0: &Mat4,
    t_end: f64,
    dt: f64,
    check_physical: bool,
) -> Result<MatrixTrajectory>
where
    F: Fn(f64, &Mat4) -> Mat4,
{
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("need dt > 0 and t_end ≥ 0, got dt={dt}, t_end={t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let stride = steps.div_ceil(MAX_RECORDED).max(1);
    let mut y = symmetrize(sigma0);
    let mut out = MatrixTrajectory { times: vec![0.0], values: vec![y] };
    for k in 0..steps {
        let t = k as f64 * h;
        y = rk4_step(&rhs, t, h, &y)?;
        if (k + 1) % stride == 0 || k + 1 == steps {
            let tk = (k + 1) as f64 * h;
            if check_physical {
                let rep = check_mat4_physicality(&y, 1e-6 * y.amax().max(1.0))?;
                if !rep.physical {
                    return Err(Error::Unphysical { t: tk, min_eigenvalue: rep.min_eigenvalue });
                }
            }
            out.times.push(tk);
            out.values.push(y);
        }
    }
    Ok(out)
}

/// Fixed-step RK4 solution of `dσ/dt = Aσ + σAᵀ + D`.
pub fn integrate_lyapunov(
    problem: &MatrixFlowProblem,
    sigma0: &Mat4,
    t_end: f64,
    dt: f64,
) -> Result<MatrixTrajectory> {
    integrate(filter_riccati_rhs(&problem.unmonitored()), sigma0, t_end, dt, false)
}

/// Fixed-step RK4 solution of the conditional (filter) Riccati flow.
pub fn integrate_conditional_riccati(
    problem: &MatrixFlowProblem,
    sigma0: &Mat4,
    t_end: f64,
    dt: f64,
) -> Result<MatrixTrajectory> {
    let p = MatrixFlowProblem { kind: FlowKind::ConditionalRiccati, ..problem.clone() };
    integrate(filter_riccati_rhs(&p), sigma0, t_end, dt, true)
}

/// One-period RK4 propagator for a matrix flow, forward or backward in time.
pub struct Rk4PeriodMap<F> {
    rhs: F,
    period: f64,
    steps: usize,
    backward: bool,
}

impl<F> Rk4PeriodMap<F>
where
    F: Fn(f64, &Mat4) -> Mat4,
{
    /// `rhs` is `dY/dt` in physical time; a backward map integrates from
    /// `t = period` down to `t = 0`.
    pub fn new(rhs: F, period: f64, dt: f64, backward: bool) -> Self {
        let steps = ((period / dt) - 1e-9).ceil().max(1.0) as usize;
        Self { rhs, period, steps, backward }
    }

    pub fn dt(&self) -> f64 {
        self.period / self.steps as f64
    }
}

impl<F> super::PeriodPropagator for Rk4PeriodMap<F>
where
    F: Fn(f64, &Mat4) -> Mat4,
{
    fn period(&self) -> f64 {
        self.period
    }

    fn grid_len(&self) -> usize {
        self.steps
    }

    fn propagate(&self, start: &Mat4, mut samples: Option<&mut Vec<Mat4>>) -> Result<Mat4> {
        let n = self.steps;
        let h = self.dt();
        if let Some(s) = samples.as_deref_mut() {
            s.clear();
            s.reserve(n);
        }
        let mut y = *start;
        for k in 0..n {
            if let Some(s) = samples.as_deref_mut() {
                s.push(y);
            }
            y = if self.backward {
                let t = self.period - k as f64 * h;
                rk4_step(&self.rhs, t, -h, &y)?
            } else {
                rk4_step(&self.rhs, k as f64 * h, h, &y)?
            };
        }
        if self.backward {
            // recorded[k] holds Y(T − k·h); reorder to ascending time.
            if let Some(s) = samples {
                s[0] = y;
                s[1..].reverse();
            }
        }
        Ok(y)
    }
}
