use std::time::Instant;

use crate::consensus::{ConsensusSchedule, Gossip};
use crate::datagen::{PartitionMode, PartitionedDataset};
use crate::linalg::{cholesky, solve_upper_right, subspace_error, DenseMatrix, OrthonormalBasis};
use crate::trace::{RunTrace, TraceRow};
use crate::{Error, Result};

use super::{add_counts, check_init, ground_truth, rank_collapse, span, Estimate, EstimatorState, OiRun};

/// Row blocks of an orthonormalized stack, with each node's `R`.
#[derive(Debug, Clone)]
pub struct DistributedQr {
    pub parts: Vec<DenseMatrix>,
    pub r: Vec<DenseMatrix>,
    /// Sends per node spent on the Gram consensus.
    pub messages: Vec<u64>,
}

impl DistributedQr {
    pub fn stacked(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.parts).expect("parts share a column count")
    }
}

/// QR of the row-stacked `V = [V_1; ...; V_N]` without gathering it.
///
/// Each node forms `K_i = V_i^T V_i`, consensus estimates `K = sum K_i`,
/// and node `i` sets `Q_i = V_i R^{-1}` with `K = R^T R` from its own
/// estimate. Under exact consensus this is the positive-diagonal QR of `V`.
pub fn distributed_qr(v_parts: &[DenseMatrix], gossip: &mut dyn Gossip, rounds: u32) -> Result<DistributedQr> {
    let n = v_parts.len();
    if n != gossip.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "{n} row blocks on a {}-node network",
            gossip.node_count()
        )));
    }
    let cols = v_parts[0].cols();
    if v_parts.iter().any(|v| v.cols() != cols) {
        return Err(Error::ShapeMismatch("row blocks differ in column count".into()));
    }
    let exec = gossip.execution();
    let grams = exec.map(n, |i| v_parts[i].t_matmul(&v_parts[i]));
    let out = gossip.consensus(grams, rounds)?;
    let r = exec.try_map(n, |i| {
        let k = out.scaled(i);
        // Consensus leaves O(eps) asymmetry; Cholesky wants exact symmetry.
        let k = k.add(&k.transpose()).scale(0.5);
        cholesky(&k)
    })?;
    let parts = exec.map(n, |i| solve_upper_right(&v_parts[i], &r[i]));
    Ok(DistributedQr {
        parts,
        r,
        messages: out.messages,
    })
}

/// F-DOT: feature-wise distributed orthogonal iteration.
///
/// Node `i` holds `X_i` (`d_i x n`) and the rows `Q_i` of the estimate.
/// Iteration `t`: `Z_i = X_i^T Q_i`, consensus recovers `S = sum_j Z_j`,
/// `V_i = X_i S`, then [`distributed_qr`] with `qr_rounds` rounds. Errors
/// are measured on the span of the stacked estimate.
pub fn f_dot(
    dataset: &PartitionedDataset,
    gossip: &mut dyn Gossip,
    schedule: ConsensusSchedule,
    q_init: &OrthonormalBasis,
    outer_iters: usize,
    qr_rounds: u32,
) -> Result<Estimate> {
    if dataset.mode != PartitionMode::FeatureWise {
        return Err(Error::ShapeMismatch("F-DOT needs a feature-wise partition".into()));
    }
    schedule.validate()?;
    let started = Instant::now();
    let n = dataset.node_count();
    if gossip.node_count() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} data shards on a {}-node network",
            gossip.node_count()
        )));
    }
    let d = dataset.global_dims.0;
    if q_init.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "start basis has {} rows, data has {d}",
            q_init.dim()
        )));
    }
    let r = q_init.rank();
    let m = dataset.global_covariance();
    let (truth, _) = ground_truth(&m, r)?;
    check_init(&truth, q_init)?;
    let exec = gossip.execution();
    let shards = &dataset.shards;

    let mut reference = OiRun::start(q_init, Some(truth.clone()))?;
    let mut parts = q_init.matrix().split_rows(&dataset.shard_sizes())?;
    let mut p2p = vec![0u64; n];
    let mut trace = RunTrace::default();
    let e0 = subspace_error(&truth, q_init)?;
    trace.push(
        TraceRow {
            t: 0,
            consensus_rounds: 0,
            mean_error: e0,
            max_error: e0,
            mean_drift: 0.0,
            p2p: p2p.clone(),
            simulated_seconds: gossip.simulated_seconds(),
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        0.0,
    );

    let mut cumulative_rounds = 0u64;
    let mut max_defect = 0.0f64;
    let samples = dataset.global_dims.1;
    let widest = dataset.shard_sizes().into_iter().max().unwrap_or(0);
    for t in 0..outer_iters {
        let rounds = schedule.eval(t);
        let z = exec.map(n, |i| shards[i].t_matmul(&parts[i]));
        let out = gossip.consensus(z, rounds)?;
        let v = exec.map(n, |i| shards[i].matmul(&out.scaled(i)));
        gossip.charge_compute(4.0 * (widest * samples * r) as f64);
        let qr = distributed_qr(&v, gossip, qr_rounds).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::RankCollapse { iteration: t, node: 0 },
            other => other,
        })?;
        parts = qr.parts;
        reference.step(&m)?;
        add_counts(&mut p2p, &out.messages);
        add_counts(&mut p2p, &qr.messages);
        cumulative_rounds += u64::from(rounds) + u64::from(qr_rounds);

        let stacked = DenseMatrix::vstack(&parts)?;
        max_defect = max_defect.max(stacked.orthonormality_defect());
        let error = subspace_error(&truth, &span(&stacked).map_err(rank_collapse(t, 0))?)?;
        let drift = reference.basis.matrix().sub(&stacked).frobenius_norm();
        trace.push(
            TraceRow {
                t: t + 1,
                consensus_rounds: rounds + qr_rounds,
                mean_error: error,
                max_error: error,
                mean_drift: drift,
                p2p: p2p.clone(),
                simulated_seconds: gossip.simulated_seconds(),
                wall_seconds: started.elapsed().as_secs_f64(),
            },
            drift,
        );
    }

    Ok(Estimate {
        state: EstimatorState {
            mode: PartitionMode::FeatureWise,
            parts,
            outer_iter: outer_iters,
            cumulative_rounds,
        },
        trace,
        reference,
        max_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::LocalGossip;
    use crate::datagen::{partition, random_orthonormal, synthetic_dataset, SpectrumSpec};
    use crate::linalg::qr_factor;
    use crate::netgraph::{gen_complete, gen_erdos_renyi, metropolis_weights, WeightMatrix};
    use rand::{Rng, SeedableRng};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn single() -> LocalGossip {
        LocalGossip::new(WeightMatrix::new(DenseMatrix::identity(1)).unwrap())
    }

    #[test]
    fn single_node_is_plain_qr() {
        let v = random_matrix(7, 3, 1);
        let out = distributed_qr(std::slice::from_ref(&v), &mut single(), 1).unwrap();
        let (q, r) = qr_factor(&v).unwrap();
        assert!(out.parts[0].sub(q.matrix()).max_abs() < 1e-12);
        assert!(out.r[0].sub(&r).max_abs() < 1e-12);
    }

    #[test]
    fn exact_averaging_matches_centralized_qr() {
        let v = random_matrix(12, 3, 2);
        let parts = v.split_rows(&[4, 4, 4]).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(3).unwrap()));
        let out = distributed_qr(&parts, &mut g, 1).unwrap();
        let stacked = out.stacked();
        assert!(stacked.orthonormality_defect() < 1e-10);
        assert!(stacked.sub(qr_factor(&v).unwrap().0.matrix()).max_abs() < 1e-10);
        assert_eq!(out.messages, vec![2, 2, 2]);
    }

    #[test]
    fn inexact_consensus_is_nearly_orthonormal() {
        let v = random_matrix(30, 4, 3);
        let parts = v.split_rows(&[3; 10]).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_erdos_renyi(10, 0.5, 4).unwrap()));
        let out = distributed_qr(&parts, &mut g, 50).unwrap();
        let defect = out.stacked().orthonormality_defect();
        assert!(defect <= 1e-6, "{defect}");
    }

    #[test]
    fn rank_deficient_stack_fails() {
        let v = DenseMatrix::from_fn(6, 2, |i, _| i as f64);
        let parts = v.split_rows(&[3, 3]).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(2).unwrap()));
        assert!(matches!(
            distributed_qr(&parts, &mut g, 1),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn exact_averaging_tracks_centralized() {
        let data = synthetic_dataset(
            &SpectrumSpec::new(12, 3, 0.5),
            200,
            3,
            PartitionMode::FeatureWise,
            5,
            false,
        )
        .unwrap();
        let q0 = random_orthonormal(12, 3, 6).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(3).unwrap()));
        let est = f_dot(&data, &mut g, ConsensusSchedule::Fixed(1), &q0, 60, 1).unwrap();
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-8));
        assert!(est.state.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn one_feature_per_node_converges() {
        let data = synthetic_dataset(
            &SpectrumSpec::new(10, 4, 0.4),
            500,
            10,
            PartitionMode::FeatureWise,
            7,
            false,
        )
        .unwrap();
        let q0 = random_orthonormal(10, 4, 8).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_erdos_renyi(10, 0.5, 9).unwrap()));
        let est = f_dot(&data, &mut g, ConsensusSchedule::Fixed(50), &q0, 200, 50).unwrap();
        let e = est.trace.last().unwrap().mean_error;
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn single_node_is_centralized() {
        let x = random_matrix(6, 40, 10);
        let data = partition(&x, PartitionMode::FeatureWise, 1, 0).unwrap();
        let q0 = random_orthonormal(6, 2, 11).unwrap();
        let est = f_dot(&data, &mut single(), ConsensusSchedule::Fixed(1), &q0, 25, 1).unwrap();
        for (row, e) in est.trace.rows.iter().zip(&est.reference.errors) {
            assert!((row.mean_error - e).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_wise_data_is_rejected() {
        let data = synthetic_dataset(
            &SpectrumSpec::new(4, 1, 0.5),
            10,
            2,
            PartitionMode::SampleWise,
            1,
            false,
        )
        .unwrap();
        let q0 = random_orthonormal(4, 1, 1).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(2).unwrap()));
        assert!(f_dot(&data, &mut g, ConsensusSchedule::Fixed(1), &q0, 1, 1).is_err());
    }
}
