//! Dense real linear algebra sized for desk-scale problems.
//!
//! Everything here is a pure function on immutable inputs. Matrices are
//! row-major `f64`; the arithmetic helpers on [`DenseMatrix`] assert on
//! shape mismatches, while the factorizations return [`crate::Error`].

mod decomp;
mod matrix;
mod metrics;

pub use decomp::{
    cholesky, cholesky_with, qr_factor, qr_factor_with, solve_upper_right, sym_eig, sym_eig_with, upper_inverse, SymEig,
};
pub use matrix::{DenseMatrix, OrthonormalBasis};
pub use metrics::{projection_distance, spectral_norm, subspace_error};

/// Numerical tolerances shared by the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `|R_kk| <= rank_tol * ||V||_F` flags rank deficiency in QR.
    pub rank: f64,
    /// Relative asymmetry allowed by Cholesky.
    pub cholesky_symmetry: f64,
    /// A Cholesky pivot `<= pivot * trace(K)` is rejected.
    pub pivot: f64,
    /// Relative asymmetry allowed by the eigensolver.
    pub eig_symmetry: f64,
    /// `||Q^T Q - I||_F` allowed for an orthonormal basis.
    pub orthonormality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-12,
            cholesky_symmetry: 1e-12,
            pivot: 1e-14,
            eig_symmetry: 1e-10,
            orthonormality: 1e-10,
        }
    }
}
