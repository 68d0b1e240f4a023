use crate::datagen::PartitionedDataset;
use crate::linalg::{spectral_norm, upper_inverse};
use crate::Result;

use super::OiRun;

/// Constants of the one-step drift bound for sample-wise estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Diagnostics {
    /// `sum_i ||M_i||_2`
    pub alpha: f64,
    /// `sqrt(sum_i ||M_i||_2^2)`
    pub gamma: f64,
    /// Running max of `||R_c^{-1}||_2`, one entry per iteration.
    pub beta_running: Vec<f64>,
    pub delta: f64,
    /// `max_i ||Q_c - Q_i||_F` at the start of each iteration.
    pub drift: Vec<f64>,
    /// Left side `drift + delta gamma sqrt(N r) / alpha` of the hypothesis.
    pub lhs: Vec<f64>,
    /// Right side `1 / (2 alpha^2 beta^3 sqrt(r) (2 alpha sqrt(r) + delta gamma sqrt(N r)))`.
    pub rhs: Vec<f64>,
    pub holds: Vec<bool>,
}

impl Lemma1Diagnostics {
    pub fn held_throughout(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// Evaluates the drift hypothesis at each iteration of a sample-wise run.
///
/// `reference` is the lockstep centralized run (its `R_c` factors give
/// `beta`), `max_drift[t]` the drift before iteration `t` (entry 0 is the
/// shared start, normally 0).
pub fn lemma1_diagnostics(
    dataset: &PartitionedDataset,
    reference: &OiRun,
    max_drift: &[f64],
    delta: f64,
) -> Result<Lemma1Diagnostics> {
    let norms: Vec<f64> = dataset.local_covariances()?.iter().map(spectral_norm).collect();
    let alpha: f64 = norms.iter().sum();
    let gamma = norms.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = norms.len() as f64;
    let r = reference.basis.rank() as f64;
    let consensus_term = delta * gamma * (n * r).sqrt();

    let mut beta = 0.0f64;
    let mut out = Lemma1Diagnostics {
        alpha,
        gamma,
        beta_running: Vec::new(),
        delta,
        drift: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        holds: Vec::new(),
    };
    for (t, r_c) in reference.r_factors.iter().enumerate() {
        let Some(&drift) = max_drift.get(t) else { break };
        beta = beta.max(spectral_norm(&upper_inverse(r_c)));
        let lhs = drift + consensus_term / alpha;
        let rhs = 1.0 / (2.0 * alpha * alpha * beta.powi(3) * r.sqrt() * (2.0 * alpha * r.sqrt() + consensus_term));
        out.beta_running.push(beta);
        out.drift.push(drift);
        out.lhs.push(lhs);
        out.rhs.push(rhs);
        out.holds.push(lhs <= rhs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::s_dot;
    use crate::consensus::LocalGossip;
    use crate::datagen::{partition, random_orthonormal, PartitionMode};
    use crate::linalg::{DenseMatrix, OrthonormalBasis};
    use crate::netgraph::{gen_complete, metropolis_weights};

    fn reference(d: usize) -> OiRun {
        OiRun {
            basis: OrthonormalBasis::canonical(d, 1),
            r_factors: vec![DenseMatrix::identity(1)],
            errors: Vec::new(),
            truth: None,
        }
    }

    #[test]
    fn identity_shards() {
        let one = partition(&DenseMatrix::identity(3), PartitionMode::SampleWise, 1, 0).unwrap();
        // X = I gives M_1 = I.
        let diag = lemma1_diagnostics(&one, &reference(3), &[0.0], 1e-3).unwrap();
        assert!((diag.alpha - 1.0).abs() < 1e-12 && (diag.gamma - 1.0).abs() < 1e-12);

        // Two nodes each holding I: M_1 = M_2 = I.
        let x = DenseMatrix::hstack(&[DenseMatrix::identity(3), DenseMatrix::identity(3)]).unwrap();
        let two = partition(&x, PartitionMode::SampleWise, 2, 0).unwrap();
        let diag = lemma1_diagnostics(&two, &reference(3), &[0.0], 1e-3).unwrap();
        assert!((diag.alpha - 2.0).abs() < 1e-12);
        assert!((diag.gamma - 2f64.sqrt()).abs() < 1e-12);
        assert!(diag.gamma <= diag.alpha && (diag.alpha - 2f64.sqrt() * diag.gamma).abs() < 1e-12);
    }

    #[test]
    fn shared_start_reduces_to_consensus_term() {
        let x = DenseMatrix::from_fn(6, 30, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let data = partition(&x, PartitionMode::SampleWise, 3, 0).unwrap();
        let q0 = random_orthonormal(6, 2, 1).unwrap();
        let w = metropolis_weights(&gen_complete(3).unwrap());
        let est = s_dot(&data, &mut LocalGossip::new(w), 1, &q0, 5, None).unwrap();
        let delta = 1e-9;
        let diag = lemma1_diagnostics(&data, &est.reference, &est.trace.max_drift, delta).unwrap();
        assert_eq!(diag.drift[0], 0.0);
        let term = delta * diag.gamma * (3.0f64 * 2.0).sqrt() / diag.alpha;
        assert!((diag.lhs[0] - term).abs() <= 1e-20);
        assert_eq!(diag.lhs.len(), 5);
        assert!(diag.beta_running.windows(2).all(|w| w[0] <= w[1]));
        assert!(diag.gamma <= diag.alpha && diag.alpha <= 3f64.sqrt() * diag.gamma + 1e-12);
    }
}
