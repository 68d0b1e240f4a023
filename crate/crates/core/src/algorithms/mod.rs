//! PSA estimators: centralized orthogonal iteration, the sample-wise and
//! feature-wise distributed variants, and sequential power-method baselines.
//!
//! Every distributed estimator runs a centralized orthogonal iteration in
//! lockstep from the same `Q_init` so traces can report how far each node
//! has drifted from it.

mod feature;
mod lemma1;
mod oi;
mod sample;
mod sequential;

pub use feature::{distributed_qr, f_dot, DistributedQr};
pub use lemma1::{lemma1_diagnostics, Lemma1Diagnostics};
pub use oi::{centralized_oi, ground_truth, OiRun};
pub use sample::{s_dot, sa_dot, sample_wise_oi};
pub use sequential::{seq_dist_pm, seq_pm};

use crate::datagen::PartitionMode;
use crate::linalg::{qr_factor, sym_eig, DenseMatrix, OrthonormalBasis};
use crate::trace::RunTrace;
use crate::{Error, Result};

/// Per-node estimates after some outer iterations.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub mode: PartitionMode,
    /// `d x r` per node (sample-wise) or the node's `d_i x r` rows of the
    /// stacked basis (feature-wise).
    pub parts: Vec<DenseMatrix>,
    pub outer_iter: usize,
    pub cumulative_rounds: u64,
}

impl EstimatorState {
    /// Node `i`'s basis in a sample-wise run.
    pub fn basis(&self, i: usize) -> Result<OrthonormalBasis> {
        match self.mode {
            PartitionMode::SampleWise => OrthonormalBasis::new(self.parts[i].clone()),
            PartitionMode::FeatureWise => Err(Error::ShapeMismatch(
                "feature-wise nodes hold row blocks, not bases".into(),
            )),
        }
    }

    /// The row blocks stacked in node order.
    pub fn stacked(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.parts).expect("parts share a column count")
    }

    /// Largest `||Q^T Q - I||_F` over nodes (sample-wise) or of the stack.
    pub fn orthonormality_defect(&self) -> f64 {
        match self.mode {
            PartitionMode::SampleWise => self
                .parts
                .iter()
                .map(DenseMatrix::orthonormality_defect)
                .fold(0.0, f64::max),
            PartitionMode::FeatureWise => self.stacked().orthonormality_defect(),
        }
    }
}

/// Estimator output: final state, trace, and the lockstep reference run.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub state: EstimatorState,
    pub trace: RunTrace,
    pub reference: OiRun,
    /// Largest orthonormality defect seen after any outer iteration.
    pub max_defect: f64,
}

/// Smallest principal-angle cosine between `q_true` and `q_init`; fails
/// with `DegenerateInit` when it is numerically zero.
pub fn check_init(q_true: &OrthonormalBasis, q_init: &OrthonormalBasis) -> Result<f64> {
    let c = q_true.matrix().t_matmul(q_init.matrix());
    let smallest = sym_eig(&c.t_matmul(&c))?.values.last().copied().unwrap_or(1.0);
    let cosine = smallest.max(0.0).sqrt();
    if cosine < 1e-8 {
        return Err(Error::DegenerateInit { cosine });
    }
    Ok(cosine)
}

/// Span of an arbitrary full-rank `d x r` matrix.
pub(crate) fn span(m: &DenseMatrix) -> Result<OrthonormalBasis> {
    Ok(qr_factor(m)?.0)
}

pub(crate) fn rank_collapse(iteration: usize, node: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::RankDeficient { .. } | Error::NotPositiveDefinite { .. } => Error::RankCollapse { iteration, node },
        other => other,
    }
}

pub(crate) fn mean_max(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    (mean, values.iter().copied().fold(0.0, f64::max))
}

pub(crate) fn add_counts(total: &mut [u64], more: &[u64]) {
    for (t, m) in total.iter_mut().zip(more) {
        *t += m;
    }
}
