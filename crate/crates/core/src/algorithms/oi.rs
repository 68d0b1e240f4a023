use crate::linalg::{projection_distance, qr_factor, subspace_error, sym_eig, DenseMatrix, OrthonormalBasis};
use crate::{Error, Result};

use super::{check_init, rank_collapse};

/// Top-`r` eigenbasis of `m` and its eigenvalues (descending); fails with
/// `NoEigengap` when `lambda_r` and `lambda_{r+1}` coincide.
pub fn ground_truth(m: &DenseMatrix, r: usize) -> Result<(OrthonormalBasis, Vec<f64>)> {
    let eig = sym_eig(m)?;
    if r == 0 || r > eig.values.len() {
        return Err(Error::InvalidArgument(format!(
            "rank {r} for a {}x{0} matrix",
            eig.values.len()
        )));
    }
    if r < eig.values.len() {
        let (a, b) = (eig.values[r - 1], eig.values[r]);
        let scale = eig.values[0].abs().max(f64::MIN_POSITIVE);
        if a - b <= 1e-10 * scale {
            return Err(Error::NoEigengap {
                lambda_r: a,
                lambda_next: b,
            });
        }
    }
    Ok((eig.top(r), eig.values))
}

/// A centralized orthogonal-iteration run, also used as the lockstep
/// reference inside the distributed estimators.
#[derive(Debug, Clone)]
pub struct OiRun {
    pub basis: OrthonormalBasis,
    /// `R_c` of every iteration.
    pub r_factors: Vec<DenseMatrix>,
    /// Error against ground truth after `t` iterations (entry 0 is `Q_init`).
    /// Empty when no ground truth was requested.
    pub errors: Vec<f64>,
    pub truth: Option<OrthonormalBasis>,
}

impl OiRun {
    pub(crate) fn start(q_init: &OrthonormalBasis, truth: Option<OrthonormalBasis>) -> Result<Self> {
        let errors = match &truth {
            Some(t) => vec![subspace_error(t, q_init)?],
            None => Vec::new(),
        };
        Ok(OiRun {
            basis: q_init.clone(),
            r_factors: Vec::new(),
            errors,
            truth,
        })
    }

    /// `V = M Q`, `(Q, R) = QR(V)`.
    pub(crate) fn step(&mut self, m: &DenseMatrix) -> Result<()> {
        let t = self.r_factors.len();
        let v = m.matmul(self.basis.matrix());
        let (q, r) = qr_factor(&v).map_err(rank_collapse(t, 0))?;
        self.basis = q;
        self.r_factors.push(r);
        if let Some(truth) = &self.truth {
            self.errors.push(subspace_error(truth, &self.basis)?);
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.r_factors.len()
    }
}

/// Orthogonal iteration on a symmetric `m` from `q_init` (rank `r` is
/// `q_init`'s column count). Stops after `max_iters` or once successive
/// iterates are within `tol` in projection distance. With `with_truth` the
/// eigengap and the start vector are checked and errors are recorded.
pub fn centralized_oi(
    m: &DenseMatrix,
    q_init: &OrthonormalBasis,
    max_iters: usize,
    tol: Option<f64>,
    with_truth: bool,
) -> Result<OiRun> {
    if m.rows() != m.cols() || m.rows() != q_init.dim() {
        return Err(Error::ShapeMismatch(format!(
            "matrix {:?} with start basis {:?}",
            m.shape(),
            q_init.matrix().shape()
        )));
    }
    let asymmetry = m.relative_asymmetry();
    if asymmetry > 1e-10 {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let truth = if with_truth {
        let (truth, _) = ground_truth(m, q_init.rank())?;
        check_init(&truth, q_init)?;
        Some(truth)
    } else {
        None
    };
    let mut run = OiRun::start(q_init, truth)?;
    for _ in 0..max_iters {
        let prev = run.basis.clone();
        run.step(m)?;
        if let Some(tol) = tol {
            if projection_distance(&prev, &run.basis)? < tol {
                break;
            }
        }
    }
    Ok(run)
}
