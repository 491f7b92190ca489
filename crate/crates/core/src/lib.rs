//! Gaussian simulator for unconditional mechanical squeezing generated by a
//! continuous back-action-evading (BAE) measurement plus feedback.
//!
//! The monitored system is a two-tone driven optomechanical cavity, described
//! in the quadrature basis `(X, Y, Q, P)`: the cavity quadratures first, then
//! the mechanical ones. Covariance matrices use the anticommutator convention,
//! so the vacuum covariance is the identity and a quadrature variance is half
//! the corresponding diagonal entry.
//!
//! Module map:
//!
//! - [`gaussian`]: symplectic form, states, physicality and dB reporting.
//! - [`dynamics`]: RK4 matrix flows, algebraic and periodic steady states.
//! - [`model`]: BAE drift/diffusion/measurement matrices and closed forms.
//! - [`markov`]: direct (current) feedback and its constrained variants.
//! - [`bayes`]: state-based LQG feedback.
//! - [`mc`]: Euler–Maruyama ensembles of conditional first moments.

pub mod bayes;
pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod markov;
pub mod mc;
pub mod model;

pub use error::{Error, Result};

/// 4×4 real matrix in the `(X, Y, Q, P)` basis.
pub type Mat4 = nalgebra::Matrix4<f64>;
/// Real vector in the `(X, Y, Q, P)` basis.
pub type Vec4 = nalgebra::Vector4<f64>;

/// Index of each quadrature in the shared ordering.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Q: usize = 2;
    pub const P: usize = 3;
}
