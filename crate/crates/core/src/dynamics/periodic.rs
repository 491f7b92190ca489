use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::MatrixFn;
use crate::{Error, Mat4, Result};

type Vec10 = SVector<f64, 10>;
type Mat10 = SMatrix<f64, 10, 10>;

/// Upper-triangle index pairs of a symmetric 4×4 matrix.
const SYM: [(usize, usize); 10] =
    [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

/// A one-period propagator of a matrix flow.
pub trait PeriodPropagator {
    fn period(&self) -> f64;

    /// Number of grid samples recorded per period.
    fn grid_len(&self) -> usize;

    /// Advances `start` by one period. When `samples` is given it is filled
    /// with the solution on the uniform grid `t_k = k·T/N`, ascending in time.
    fn propagate(&self, start: &Mat4, samples: Option<&mut Vec<Mat4>>) -> Result<Mat4>;
}

/// Convergence controls for [`periodic_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOptions {
    /// Residual bound, relative to `max(1, ‖σ‖_F)`.
    pub tol_period: f64,
    pub max_periods: usize,
    /// Plain periods run before Newton shooting starts.
    pub warmup_periods: usize,
    /// Use Newton shooting on the period map before plain iteration.
    pub newton: bool,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self { tol_period: 1e-9, max_periods: 1_000_000, warmup_periods: 2, newton: true }
    }
}

/// A matrix function sampled on a uniform grid over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTrajectory {
    pub period: f64,
    /// Sample `k` sits at `t = k·period/values.len()`.
    pub values: Vec<Mat4>,
    pub converged: bool,
    /// Largest Frobenius distance between corresponding samples of the last two periods.
    pub residual: f64,
    /// Periods propagated to reach the answer.
    pub periods: usize,
    /// Whether the underlying flow had time-independent coefficients.
    pub constant: bool,
}

impl PeriodicTrajectory {
    pub fn constant(period: f64, value: Mat4) -> Self {
        Self { period, values: vec![value], converged: true, residual: 0.0, periods: 0, constant: true }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.values.len() as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.values.len()).map(move |k| k as f64 * h)
    }

    /// Periodic cubic interpolation between grid samples.
    pub fn at(&self, t: f64) -> Mat4 {
        let n = self.values.len();
        if n == 1 || self.constant {
            return self.values[0];
        }
        let u = (t.rem_euclid(self.period) / self.period) * n as f64;
        let k = u.floor();
        let x = u - k;
        let k = k as usize % n;
        if x < 1e-12 {
            return self.values[k];
        }
        if n < 4 {
            return self.values[k] * (1.0 - x) + self.values[(k + 1) % n] * x;
        }
        let p0 = &self.values[(k + n - 1) % n];
        let p1 = &self.values[k];
        let p2 = &self.values[(k + 1) % n];
        let p3 = &self.values[(k + 2) % n];
        // Lagrange weights on nodes −1, 0, 1, 2.
        let w0 = -x * (x - 1.0) * (x - 2.0) / 6.0;
        let w1 = (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0;
        let w2 = -(x + 1.0) * x * (x - 2.0) / 2.0;
        let w3 = (x + 1.0) * x * (x - 1.0) / 6.0;
        p0 * w0 + p1 * w1 + p2 * w2 + p3 * w3
    }

    /// Wraps the trajectory as a matrix function, constant when the flow was.
    pub fn to_fn(&self) -> MatrixFn {
        if self.constant {
            MatrixFn::Constant(self.values[0])
        } else {
            let tr = self.clone();
            MatrixFn::periodic(self.period, move |t| tr.at(t))
        }
    }

    /// Pointwise sum, sampled on the finer of the two grids.
    pub fn add(&self, other: &PeriodicTrajectory) -> PeriodicTrajectory {
        let (fine, coarse) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        let values = fine.times().zip(fine.values.iter()).map(|(t, v)| v + coarse.at(t)).collect();
        PeriodicTrajectory {
            period: fine.period,
            values,
            converged: self.converged && other.converged,
            residual: self.residual.max(other.residual),
            periods: self.periods.max(other.periods),
            constant: self.constant && other.constant,
        }
    }

    /// Mean of the samples (the periodic trapezoid rule).
    pub fn mean(&self) -> Mat4 {
        self.values.iter().sum::<Mat4>() / self.values.len() as f64
    }
}

/// Period average and extrema of a scalar functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn constant(v: f64) -> Self {
        Self { mean: v, min: v, max: v }
    }
}

/// Trapezoidal period average and grid extrema of `functional` along `traj`.
pub fn time_average(traj: &PeriodicTrajectory, functional: impl Fn(&Mat4) -> f64) -> Result<Stats> {
    if !traj.converged {
        return Err(Error::NotConverged);
    }
    if traj.values.is_empty() {
        return Err(Error::InvalidParams("empty trajectory".into()));
    }
    let vals: Vec<f64> = traj.values.iter().map(functional).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Stats { mean, min, max })
}

fn to_vec10(m: &Mat4) -> Vec10 {
    Vec10::from_fn(|k, _| m[SYM[k]])
}

fn add_sym(m: &Mat4, v: &Vec10, alpha: f64) -> Mat4 {
    let mut out = *m;
    for (k, &(i, j)) in SYM.iter().enumerate() {
        out[(i, j)] += alpha * v[k];
        if i != j {
            out[(j, i)] += alpha * v[k];
        }
    }
    out
}

/// Newton shooting on `P(s) − s = 0`. Returns the best iterate found.
fn newton_fixed_point<P: PeriodPropagator + ?Sized>(
    prop: &P,
    start: Mat4,
    periods: &mut usize,
) -> Mat4 {
    let mut s = start;
    let Ok(mut ps) = prop.propagate(&s, None) else { return s };
    *periods += 1;
    let mut f = to_vec10(&(ps - s));
    let mut nf = f.norm();
    for _ in 0..60 {
        if nf <= f64::EPSILON * s.norm().max(1.0) {
            break;
        }
        let mut jac = Mat10::zeros();
        for (k, &(i, j)) in SYM.iter().enumerate() {
            let scale = s[(i, j)].abs().max((s[(i, i)] * s[(j, j)]).abs().sqrt()).max(1e-6);
            let eps = 1e-6 * scale;
            let mut e = Vec10::zeros();
            e[k] = 1.0;
            let sp = add_sym(&s, &e, eps);
            let Ok(pp) = prop.propagate(&sp, None) else { return s };
            *periods += 1;
            let col = (to_vec10(&pp) - to_vec10(&ps)) / eps;
            jac.set_column(k, &col);
        }
        jac -= Mat10::identity();
        let Some(delta) = jac.lu().solve(&(-f)) else { break };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = add_sym(&s, &delta, alpha);
            if let Ok(pt) = prop.propagate(&trial, None) {
                *periods += 1;
                let ft = to_vec10(&(pt - trial));
                let nt = ft.norm();
                if nt.is_finite() && nt < nf {
                    accepted = Some((trial, pt, ft, nt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, pt, ft, nt)) = accepted else { break };
        let stalled = nt > 0.5 * nf;
        s = trial;
        ps = pt;
        f = ft;
        nf = nt;
        if stalled && nf <= 1e-8 * s.norm().max(1.0) {
            break;
        }
    }
    s
}

/// Propagates two recorded periods from `s` and returns the second one with
/// the sample-wise maximum Frobenius residual between them.
fn verify<P: PeriodPropagator + ?Sized>(
    prop: &P,
    s: &Mat4,
    first: &mut Vec<Mat4>,
    second: &mut Vec<Mat4>,
) -> Result<(Mat4, f64)> {
    let mid = prop.propagate(s, Some(first))?;
    let end = prop.propagate(&mid, Some(second))?;
    let residual = first
        .iter()
        .zip(second.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok((end, residual))
}

/// Steady state of a periodic (or constant) matrix flow.
///
/// Converged when the sampled trajectories of two successive periods differ
/// by at most `tol_period·max(1, ‖σ‖_F)` at every grid point.
pub fn periodic_steady_state<P: PeriodPropagator + ?Sized>(
    prop: &P,
    initial: &Mat4,
    opts: &PeriodicOptions,
) -> Result<PeriodicTrajectory> {
    if !(prop.period() > 0.0) {
        return Err(Error::InvalidParams("period must be positive".into()));
    }
    let mut periods = 0usize;
    let mut s = *initial;
    for _ in 0..opts.warmup_periods.min(opts.max_periods) {
        s = prop.propagate(&s, None)?;
        periods += 1;
    }
    if opts.newton {
        s = newton_fixed_point(prop, s, &mut periods);
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut last_residual = f64::INFINITY;
    loop {
        let (end, residual) = verify(prop, &s, &mut first, &mut second)?;
        periods += 2;
        let scale = second.iter().map(|m| m.norm()).fold(1.0, f64::max);
        if residual <= opts.tol_period * scale {
            return Ok(PeriodicTrajectory {
                period: prop.period(),
                values: second,
                converged: true,
                residual,
                periods,
                constant: false,
            });
        }
        last_residual = last_residual.min(residual);
        // Plain iteration on end states until they settle, then re-verify.
        s = end;
        loop {
            if periods >= opts.max_periods {
                return Err(Error::NoConvergence { periods, residual: last_residual });
            }
            let next = prop.propagate(&s, None)?;
            periods += 1;
            let r = (next - s).norm();
            s = next;
            if r <= opts.tol_period * s.norm().max(1.0) {
                break;
            }
            last_residual = r;
        }
    }
}
