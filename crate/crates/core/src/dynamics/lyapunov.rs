use nalgebra::{Complex, SMatrix, SVector};

use super::{lyapunov_rhs, periodic_steady_state, symmetrize, MatrixFn, PeriodicOptions};
use super::{PeriodicTrajectory, Rk4PeriodMap};
use crate::{Error, Mat4, Result};

type Mat16 = SMatrix<f64, 16, 16>;
type Vec16 = SVector<f64, 16>;

/// Eigenvalue of `a` with the largest real part.
fn rightmost_eigenvalue(a: &Mat4) -> Complex<f64> {
    a.complex_eigenvalues()
        .iter()
        .copied()
        .max_by(|x, y| x.re.total_cmp(&y.re))
        .expect("4×4 matrix has eigenvalues")
}

/// Fails with `NotHurwitz` unless every eigenvalue of `a` has negative real part.
pub fn check_hurwitz(a: &Mat4) -> Result<()> {
    let ev = rightmost_eigenvalue(a);
    if ev.re < 0.0 && ev.re.is_finite() {
        Ok(())
    } else {
        Err(Error::NotHurwitz { re: ev.re, im: ev.im })
    }
}

/// One-period state-transition matrix of `dΦ/dt = A(t)Φ`.
pub fn monodromy(drift: &MatrixFn, period: f64, dt: f64) -> Result<Mat4> {
    let steps = ((period / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = period / steps as f64;
    let rhs = |t: f64, y: &Mat4| drift.at(t) * y;
    let mut phi = Mat4::identity();
    for k in 0..steps {
        // Φ is not symmetric, so step without the symmetrizing wrapper.
        let t = k as f64 * h;
        let k1 = rhs(t, &phi);
        let k2 = rhs(t + 0.5 * h, &(phi + k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(phi + k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(phi + k3 * h));
        phi += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    Ok(phi)
}

/// Asymptotic stability of `dx/dt = A(t)x`: eigenvalues for constant `A`,
/// Floquet multipliers of the monodromy for periodic `A`.
///
/// A violating Floquet multiplier `μ` is reported as the exponent
/// `ln(μ)/T`.
pub fn check_stable(drift: &MatrixFn, dt: f64) -> Result<()> {
    match drift {
        MatrixFn::Constant(a) => check_hurwitz(a),
        MatrixFn::Periodic { period, .. } => {
            let phi = monodromy(drift, *period, dt)?;
            let mu = phi
                .complex_eigenvalues()
                .iter()
                .copied()
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .expect("4×4 matrix has eigenvalues");
            let re = mu.norm().ln() / period;
            if re < -1e-12 {
                Ok(())
            } else {
                Err(Error::NotHurwitz { re, im: mu.arg() / period })
            }
        }
    }
}

fn kron_operator(a: &Mat4) -> Mat16 {
    // Column-major vec: vec(AX + XAᵀ) = (I⊗A + A⊗I) vec(X).
    let mut k = Mat16::zeros();
    for i in 0..4 {
        for j in 0..4 {
            for p in 0..4 {
                k[(4 * j + i, 4 * j + p)] += a[(i, p)];
                k[(4 * j + i, 4 * p + i)] += a[(j, p)];
            }
        }
    }
    k
}

/// Solves `AX + XAᵀ + N = 0` for Hurwitz `A`.
pub fn steady_state_lyapunov(a: &Mat4, n: &Mat4) -> Result<Mat4> {
    check_hurwitz(a)?;
    let op = kron_operator(a);
    let lu = op.lu();
    let rhs = -Vec16::from_column_slice(n.as_slice());
    let mut x = lu.solve(&rhs).ok_or(Error::NotHurwitz { re: 0.0, im: 0.0 })?;
    for _ in 0..2 {
        let r = rhs - op * x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let sol = symmetrize(&Mat4::from_column_slice(x.as_slice()));
    let residual = (a * sol + sol * a.transpose() + n).norm();
    let bound = 1e-10 * n.norm().max(f64::MIN_POSITIVE);
    if residual <= bound || n.norm() == 0.0 && residual == 0.0 {
        Ok(sol)
    } else {
        Err(Error::Residual { residual, bound })
    }
}

/// Periodic steady state of `dΣ/dt = ÃΣ + ΣÃᵀ + N`.
///
/// Constant coefficients are solved algebraically and returned as a
/// single-sample constant trajectory.
pub fn lyapunov_periodic(
    drift: &MatrixFn,
    noise: &MatrixFn,
    period: f64,
    dt: f64,
    opts: &PeriodicOptions,
) -> Result<PeriodicTrajectory> {
    check_stable(drift, dt)?;
    if let (Some(a), Some(n)) = (drift.constant_value(), noise.constant_value()) {
        return Ok(PeriodicTrajectory::constant(period, steady_state_lyapunov(&a, &n)?));
    }
    let map = Rk4PeriodMap::new(lyapunov_rhs(drift, noise), period, dt, false);
    periodic_steady_state(&map, &Mat4::zeros(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_lyapunov, FlowKind, MatrixFlowProblem};
    use crate::Vec4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_lyapunov() {
        let x = steady_state_lyapunov(&(Mat4::identity() * -0.5), &Mat4::identity()).unwrap();
        assert!((x - Mat4::identity()).amax() < 1e-14);
        let a = Mat4::from_diagonal(&Vec4::new(-1.0, -2.0, -3.0, -4.0));
        let x = steady_state_lyapunov(&a, &Mat4::identity()).unwrap();
        let want = Mat4::from_diagonal(&Vec4::new(0.5, 0.25, 1.0 / 6.0, 0.125));
        assert!((x - want).amax() < 1e-14);
    }

    #[test]
    fn non_hurwitz_rejected() {
        let a = Mat4::from_diagonal(&Vec4::new(-1.0, 0.2, -1.0, -1.0));
        match steady_state_lyapunov(&a, &Mat4::identity()) {
            Err(Error::NotHurwitz { re, .. }) => assert!((re - 0.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matches_long_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = Mat4::from_fn(|_, _| rng.random_range(-0.5..0.5));
        a -= Mat4::identity() * 1.5;
        check_hurwitz(&a).unwrap();
        let l = Mat4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = l * l.transpose();
        let x = steady_state_lyapunov(&a, &n).unwrap();
        let p = MatrixFlowProblem {
            drift: a.into(),
            diffusion: n,
            e: Mat4::zeros(),
            b: Mat4::zeros(),
            kind: FlowKind::Lyapunov,
        };
        let tr = integrate_lyapunov(&p, &Mat4::zeros(), 40.0, 0.01).unwrap();
        assert!((tr.last() - x).norm() < 1e-8);
    }

    #[test]
    fn periodic_stability_by_floquet() {
        let stable = MatrixFn::periodic(std::f64::consts::PI, |t| {
            Mat4::identity() * (-0.1 + 0.5 * (2.0 * t).cos())
        });
        check_stable(&stable, 1e-3).unwrap();
        let unstable = MatrixFn::periodic(std::f64::consts::PI, |t| {
            Mat4::identity() * (0.01 + 0.5 * (2.0 * t).cos())
        });
        match check_stable(&unstable, 1e-3) {
            Err(Error::NotHurwitz { re, .. }) => assert!((re - 0.01).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
