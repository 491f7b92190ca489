//! Symplectic geometry and state-level checks shared by every module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{idx, Error, Mat4, Result, Vec4};

/// Real antisymmetric form `⊕ [[0, 1], [-1, 0]]` over `n_modes` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    pub n_modes: usize,
    pub matrix: DMatrix<f64>,
}

pub fn symplectic_form(n_modes: usize) -> Result<SymplecticForm> {
    if n_modes == 0 {
        return Err(Error::InvalidParams("n_modes must be at least 1".into()));
    }
    let dim = 2 * n_modes;
    let mut matrix = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        matrix[(2 * k, 2 * k + 1)] = 1.0;
        matrix[(2 * k + 1, 2 * k)] = -1.0;
    }
    Ok(SymplecticForm { n_modes, matrix })
}

/// Two-mode symplectic form as a fixed-size matrix.
pub fn omega4() -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 1)] = 1.0;
    m[(1, 0)] = -1.0;
    m[(2, 3)] = 1.0;
    m[(3, 2)] = -1.0;
    m
}

/// First moments and covariance of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() || cov.nrows() % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "shape mismatch: mean {}, cov {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Two-mode state from fixed-size parts.
    pub fn from_mat4(mean: Vec4, cov: Mat4) -> Self {
        Self {
            mean: DVector::from_column_slice(mean.as_slice()),
            cov: DMatrix::from_column_slice(4, 4, cov.as_slice()),
        }
    }

    pub fn vacuum(n_modes: usize) -> Self {
        let dim = 2 * n_modes;
        Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) }
    }

    pub fn thermal(n_modes: usize, nbar: f64) -> Self {
        let dim = 2 * n_modes;
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * (2.0 * nbar + 1.0),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalityReport {
    pub min_eigenvalue: f64,
    pub physical: bool,
}

/// Default absolute tolerance on `cov + iΩ ⪰ 0`.
pub const TOL_PSD: f64 = 1e-9;

/// Checks the uncertainty relation through the real embedding
/// `[[cov, -Ω], [Ω, cov]]` of the Hermitian matrix `cov + iΩ`.
pub fn check_physicality(state: &GaussianState, tol_psd: f64) -> Result<PhysicalityReport> {
    check_cov_physicality(&state.cov, tol_psd)
}

pub fn check_cov_physicality(cov: &DMatrix<f64>, tol_psd: f64) -> Result<PhysicalityReport> {
    let dim = cov.nrows();
    let scale = cov.amax().max(1.0);
    let asymmetry = (cov - cov.transpose()).amax();
    if asymmetry > 1e-9 * scale {
        return Err(Error::NonSymmetric { asymmetry });
    }
    let omega = symplectic_form(dim / 2)?.matrix;
    let mut embed = DMatrix::zeros(2 * dim, 2 * dim);
    let sym = (cov + cov.transpose()) * 0.5;
    embed.view_mut((0, 0), (dim, dim)).copy_from(&sym);
    embed.view_mut((dim, dim), (dim, dim)).copy_from(&sym);
    embed.view_mut((0, dim), (dim, dim)).copy_from(&(-&omega));
    embed.view_mut((dim, 0), (dim, dim)).copy_from(&omega);
    let min_eigenvalue = SymmetricEigen::new(embed).eigenvalues.min();
    Ok(PhysicalityReport { min_eigenvalue, physical: min_eigenvalue >= -tol_psd })
}

/// Fixed-size convenience wrapper used throughout the pipelines.
pub fn check_mat4_physicality(cov: &Mat4, tol_psd: f64) -> Result<PhysicalityReport> {
    check_cov_physicality(&DMatrix::from_column_slice(4, 4, cov.as_slice()), tol_psd)
}

/// Mechanical position variance `⟨ΔQ²⟩ = cov[Q,Q] / 2`.
pub fn variance_q(state: &GaussianState) -> f64 {
    state.cov[(idx::Q, idx::Q)] / 2.0
}

pub fn variance_q_of(cov: &Mat4) -> f64 {
    cov[(idx::Q, idx::Q)] / 2.0
}

/// How a variance is turned into a squeezing figure in dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportingConvention {
    /// `-10 log10(v)`; the vacuum reads about 3.01 dB.
    #[default]
    Absolute,
    /// `-10 log10(2v)`; the vacuum reads 0 dB.
    RelativeToVacuum,
}

pub fn squeezing_db(variance: f64, convention: ReportingConvention) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    Ok(match convention {
        ReportingConvention::Absolute => -10.0 * variance.log10(),
        ReportingConvention::RelativeToVacuum => -10.0 * (2.0 * variance).log10(),
    })
}
