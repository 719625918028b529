//! Gaussian covariance matrices of the joint loop input state.
//!
//! The two noise ports of the loop, the in-coupled mode (subscript 0) and
//! the amplifier ancilla (subscript G), are jointly Gaussian. Their state is
//! parameterized by single-mode squeeze parameters `r0`, `rG` and a two-mode
//! (EPR) squeeze parameter `rE`, and fully described by the 4x4 symmetrized
//! covariance matrix in the fixed quadrature order `(q0, p0, qG, pG)`:
//!
//! ```text
//! V = [ I(2rG, 2r0, rE/2)   Z(2r0, 2rG, rE)  ]
//!     [ Z^T                 I(2r0, 2rG, rE/2) ]
//! I(x,y,z) = 1/2 diag(e^x sinh^2 z + e^y cosh^2 z,
//!                     e^-x sinh^2 z + e^-y cosh^2 z)
//! Z(x,y,z) = 1/4 diag((e^x + e^y) sinh z, -(e^-x + e^-y) sinh z)
//! ```
//!
//! Vacuum (`r0 = rG = rE = 0`) gives exactly `1/2 * identity`. The states
//! are frequency-independent, so `V` doubles as the input spectral matrix at
//! every frequency.
//!
//! Physicality is the uncertainty relation `V + (i/2) Sigma >= 0` with
//! `Sigma = diag(J, J)`, `J = [[0, 1], [-1, 0]]`. The Hermitian matrix is
//! checked through its real symmetric embedding
//! `[[V, -Sigma/2], [Sigma/2, V]]`, whose spectrum equals that of
//! `V + (i/2) Sigma` with doubled multiplicity.

use nalgebra::SMatrix;
// Re-exported so downstream crates can build explicit covariance overrides
// without depending on the linear-algebra backend directly.
pub use nalgebra::Matrix4;
use thiserror::Error;

use crate::model::InputStateParams;

/// Shared quadrature ordering of every 4-component object in this crate.
pub const QUADRATURE_ORDER: [&str; 4] = ["q0", "p0", "qG", "pG"];

/// Indices into the shared quadrature ordering.
pub const IDX_Q0: usize = 0;
pub const IDX_P0: usize = 1;
pub const IDX_QG: usize = 2;
pub const IDX_PG: usize = 3;

/// Eigenvalue tolerance below which a state is ruled unphysical.
const PHYSICALITY_TOL: f64 = 1e-10;
/// Negative eigenvalues above the physicality tolerance but below this are
/// flagged as borderline (valid with warning).
const BORDERLINE_TOL: f64 = 1e-13;

/// Symmetrized covariance matrix of the joint input state, vacuum-normalized
/// (vacuum diagonal = 1/2), in [`QUADRATURE_ORDER`].
#[derive(Debug, Clone, PartialEq)]
pub struct InputCovariance {
    v: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("NotSymmetric: covariance asymmetry {0} exceeds 1e-12")]
    NotSymmetric(f64),
    #[error("NonFiniteEntry: covariance entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
}

/// Verdict of the physicality check `V + (i/2) Sigma >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceValidity {
    /// True when the minimum eigenvalue is above `-1e-10`.
    pub valid: bool,
    /// True when valid but within numerical reach of the boundary
    /// (minimum eigenvalue below `-1e-13`); callers should warn.
    pub borderline: bool,
    /// Smallest eigenvalue of `V + (i/2) Sigma`; `0` for pure
    /// (minimum-uncertainty) states, `> 0` for mixed ones.
    pub min_symplectic_eigenvalue: f64,
}

/// Diagonal entries of the single-mode block `I(x, y, z)`.
fn block_i(x: f64, y: f64, z: f64) -> (f64, f64) {
    let sh2 = z.sinh().powi(2);
    let ch2 = z.cosh().powi(2);
    (
        0.5 * (x.exp() * sh2 + y.exp() * ch2),
        0.5 * ((-x).exp() * sh2 + (-y).exp() * ch2),
    )
}

/// Diagonal entries of the cross block `Z(x, y, z)`; the p-entry carries the
/// opposite sign (EPR correlations: q's correlate, p's anti-correlate for
/// `rE > 0`).
fn block_z(x: f64, y: f64, z: f64) -> (f64, f64) {
    let sh = z.sinh();
    (
        0.25 * (x.exp() + y.exp()) * sh,
        -0.25 * ((-x).exp() + (-y).exp()) * sh,
    )
}

/// Builds the input covariance matrix for the given squeeze parameters.
/// Parameters must be finite (guaranteed for any validated config).
pub fn input_covariance(params: &InputStateParams) -> InputCovariance {
    let (r0, r_g, r_e) = (params.r0, params.r_g, params.r_e);
    let (q0q0, p0p0) = block_i(2.0 * r_g, 2.0 * r0, r_e / 2.0);
    let (qgqg, pgpg) = block_i(2.0 * r0, 2.0 * r_g, r_e / 2.0);
    let (q0qg, p0pg) = block_z(2.0 * r0, 2.0 * r_g, r_e);
    let mut v = Matrix4::zeros();
    v[(IDX_Q0, IDX_Q0)] = q0q0;
    v[(IDX_P0, IDX_P0)] = p0p0;
    v[(IDX_QG, IDX_QG)] = qgqg;
    v[(IDX_PG, IDX_PG)] = pgpg;
    v[(IDX_Q0, IDX_QG)] = q0qg;
    v[(IDX_QG, IDX_Q0)] = q0qg;
    v[(IDX_P0, IDX_PG)] = p0pg;
    v[(IDX_PG, IDX_P0)] = p0pg;
    InputCovariance { v }
}

impl InputCovariance {
    /// Wraps an explicit matrix, enforcing finiteness and symmetry (1e-12).
    /// Physicality is deliberately not enforced here; use
    /// [`covariance_validity`] so that unphysical hand-built matrices can be
    /// diagnosed rather than rejected opaquely.
    pub fn from_matrix(v: Matrix4<f64>) -> Result<Self, GaussianError> {
        for row in 0..4 {
            for col in 0..4 {
                if !v[(row, col)].is_finite() {
                    return Err(GaussianError::NonFiniteEntry { row, col });
                }
            }
        }
        let asym = (v - v.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(GaussianError::NotSymmetric(asym));
        }
        Ok(Self { v })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.v
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.v[(row, col)]
    }

    /// Lower-triangular `L` with `V = L * L^T`, used by the time-domain
    /// simulator to color i.i.d. normal draws. `None` when `V` is not
    /// positive definite (e.g. exactly singular limiting states).
    pub fn cholesky_factor(&self) -> Option<Matrix4<f64>> {
        self.v.cholesky().map(|c| c.unpack())
    }

    /// Row-major flattening in [`QUADRATURE_ORDER`], for CSV export.
    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for row in 0..4 {
            for col in 0..4 {
                out[4 * row + col] = self.v[(row, col)];
            }
        }
        out
    }
}

/// Two-mode symplectic form `Sigma = diag(J, J)` in [`QUADRATURE_ORDER`].
fn symplectic_form() -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    s[(IDX_Q0, IDX_P0)] = 1.0;
    s[(IDX_P0, IDX_Q0)] = -1.0;
    s[(IDX_QG, IDX_PG)] = 1.0;
    s[(IDX_PG, IDX_QG)] = -1.0;
    s
}

/// Checks the uncertainty relation `V + (i/2) Sigma >= 0` and reports the
/// smallest eigenvalue (0 saturated by pure states, negative means
/// unphysical beyond tolerance).
pub fn covariance_validity(cov: &InputCovariance) -> Result<CovarianceValidity, GaussianError> {
    let asym = (cov.v - cov.v.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(GaussianError::NotSymmetric(asym));
    }
    // Real symmetric embedding of the Hermitian matrix V + (i/2) Sigma.
    let half_sigma = symplectic_form() * 0.5;
    let mut embed: SMatrix<f64, 8, 8> = SMatrix::zeros();
    embed.view_mut((0, 0), (4, 4)).copy_from(&cov.v);
    embed.view_mut((4, 4), (4, 4)).copy_from(&cov.v);
    embed.view_mut((0, 4), (4, 4)).copy_from(&(-half_sigma));
    embed.view_mut((4, 0), (4, 4)).copy_from(&half_sigma);
    let eigen = embed.symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let valid = min_eig >= -PHYSICALITY_TOL;
    Ok(CovarianceValidity {
        valid,
        borderline: valid && min_eig < -BORDERLINE_TOL,
        min_symplectic_eigenvalue: min_eig,
    })
}
