use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance is not symmetric (max asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("matrix flow diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("state became unphysical at t = {t} (min eigenvalue {min_eigenvalue:.3e})")]
    Unphysical { t: f64, min_eigenvalue: f64 },

    #[error("drift is not Hurwitz: eigenvalue {re:.6e} {im:+.6e}i")]
    NotHurwitz { re: f64, im: f64 },

    #[error("no periodic convergence after {periods} periods (residual {residual:.3e})")]
    NoConvergence { periods: usize, residual: f64 },

    #[error("Riccati solution is not stabilizing: closed-loop eigenvalue {re:.6e} {im:+.6e}i")]
    NonStabilizing { re: f64, im: f64 },

    #[error("trajectory has not converged to a periodic steady state")]
    NotConverged,

    #[error("closed form is singular at zero coupling")]
    ZeroCoupling,

    #[error("feedback direction matrix F is singular")]
    SingularF,

    #[error("actuation cost matrix is singular")]
    SingularXi,

    #[error("Lyapunov solve residual {residual:.3e} exceeds bound {bound:.3e}")]
    Residual { residual: f64, bound: f64 },

    #[error("ensemble of {n_traj} trajectories is too small for error estimates")]
    InsufficientEnsemble { n_traj: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
