use super::{
    check_stable, filter_riccati_rhs, periodic_steady_state, FlowKind, MatrixFlowProblem,
    rate_scale, MatrixFn, PeriodicOptions, PeriodicTrajectory, Rk4PeriodMap,
};
use crate::gaussian::check_mat4_physicality;
use crate::{Error, Mat4, Result};

/// Integration horizon of the shooting map. Constant flows have stationary
/// fixed points, so a short horizon finds the same point at lower cost.
fn shooting_horizon(constant: bool, period: f64, dt: f64) -> f64 {
    if constant {
        period.min(64.0 * dt)
    } else {
        period
    }
}

fn finish(mut tr: PeriodicTrajectory, constant: bool, period: f64) -> PeriodicTrajectory {
    if constant {
        tr.values.truncate(1);
        tr.period = period;
        tr.constant = true;
    }
    tr
}

/// Periodic steady state of the conditional Riccati flow, started from `initial`.
pub fn conditional_periodic_state(
    problem: &MatrixFlowProblem,
    initial: &Mat4,
    period: f64,
    dt: f64,
    opts: &PeriodicOptions,
) -> Result<PeriodicTrajectory> {
    let p = MatrixFlowProblem { kind: FlowKind::ConditionalRiccati, ..problem.clone() };
    let constant = problem.drift.is_constant();
    let map = Rk4PeriodMap::new(filter_riccati_rhs(&p), shooting_horizon(constant, period, dt), dt, false);
    let tr = finish(periodic_steady_state(&map, initial, opts)?, constant, period);
    for (k, s) in tr.values.iter().enumerate() {
        let rep = check_mat4_physicality(s, 1e-9 * s.amax().max(1.0))?;
        if !rep.physical {
            return Err(Error::Unphysical { t: k as f64 * tr.spacing(), min_eigenvalue: rep.min_eigenvalue });
        }
    }
    Ok(tr)
}

/// Rate scale `2√(‖S‖‖FΞ⁻¹Fᵀ‖) + ‖A‖` of the control Riccati flow near its
/// fixed point, used to pick a stable RK4 step.
pub fn control_rate_scale(a: &MatrixFn, f: &MatrixFn, s: &Mat4, xi: &Mat4) -> Result<f64> {
    let xi_inv = xi.try_inverse().ok_or(Error::SingularXi)?;
    let g = f.map(move |fm| fm * xi_inv * fm.transpose());
    let gn = rate_scale(&g, 64);
    Ok(2.0 * (s.amax() * gn).sqrt() + rate_scale(a, 64))
}

/// Stabilizing periodic solution `Y(t)` of the control Riccati equation
/// `−dY/dt = AᵀY + YA + S − Y F Ξ⁻¹ Fᵀ Y`, found by integrating backwards
/// from `Y = 0` until successive periods agree.
#[allow(clippy::too_many_arguments)]
pub fn solve_control_riccati(
    a: &MatrixFn,
    f: &MatrixFn,
    s: &Mat4,
    xi: &Mat4,
    period: f64,
    dt: f64,
    opts: &PeriodicOptions,
) -> Result<PeriodicTrajectory> {
    let xi_inv = xi.try_inverse().ok_or(Error::SingularXi)?;
    let g = f.map(move |fm| fm * xi_inv * fm.transpose());
    let s = *s;
    let (ac, gc) = (a.clone(), g.clone());
    let rhs = move |t: f64, y: &Mat4| {
        let at = ac.at(t);
        -(at.transpose() * y + y * at + s - y * gc.at(t) * y)
    };
    let constant = a.is_constant() && f.is_constant();
    let map = Rk4PeriodMap::new(rhs, shooting_horizon(constant, period, dt), dt, true);
    let tr = finish(periodic_steady_state(&map, &Mat4::zeros(), opts)?, constant, period);
    let y = tr.to_fn();
    let closed = a.zip_with(&g.zip_with(&y, |gm, ym| gm * ym), |am, gy| am - gy);
    check_stable(&closed, dt).map_err(|e| match e {
        Error::NotHurwitz { re, im } => Error::NonStabilizing { re, im },
        other => other,
    })?;
    Ok(tr)
}
