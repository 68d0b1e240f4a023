use std::time::Instant;

use crate::consensus::{ConsensusSchedule, Gossip};
use crate::datagen::{PartitionMode, PartitionedDataset};
use crate::linalg::{projection_distance, qr_factor, subspace_error, OrthonormalBasis};
use crate::trace::{RunTrace, TraceRow};
use crate::{Error, Result};

use super::{add_counts, check_init, ground_truth, mean_max, rank_collapse, Estimate, EstimatorState, OiRun};

/// S-DOT: sample-wise distributed orthogonal iteration with `rounds`
/// consensus rounds per outer iteration.
pub fn s_dot(
    dataset: &PartitionedDataset,
    gossip: &mut dyn Gossip,
    rounds: u32,
    q_init: &OrthonormalBasis,
    outer_iters: usize,
    tol: Option<f64>,
) -> Result<Estimate> {
    sample_wise_oi(
        dataset,
        gossip,
        ConsensusSchedule::Fixed(rounds),
        q_init,
        outer_iters,
        tol,
    )
}

/// SA-DOT: as [`s_dot`] with an increasing per-iteration budget.
pub fn sa_dot(
    dataset: &PartitionedDataset,
    gossip: &mut dyn Gossip,
    schedule: ConsensusSchedule,
    q_init: &OrthonormalBasis,
    outer_iters: usize,
    tol: Option<f64>,
) -> Result<Estimate> {
    sample_wise_oi(dataset, gossip, schedule, q_init, outer_iters, tol)
}

/// Shared driver for S-DOT and SA-DOT.
///
/// Iteration `t`: `Z_i = M_i Q_i`, `schedule.eval(t)` consensus rounds,
/// scaled-sum recovery, then a local QR at every node.
pub fn sample_wise_oi(
    dataset: &PartitionedDataset,
    gossip: &mut dyn Gossip,
    schedule: ConsensusSchedule,
    q_init: &OrthonormalBasis,
    outer_iters: usize,
    tol: Option<f64>,
) -> Result<Estimate> {
    schedule.validate()?;
    let started = Instant::now();
    let local = dataset.local_covariances()?;
    let n = local.len();
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

    let mut reference = OiRun::start(q_init, Some(truth.clone()))?;
    let mut bases = vec![q_init.clone(); n];
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
    let mut done = 0;
    let mut max_defect = 0.0f64;
    for t in 0..outer_iters {
        let rounds = schedule.eval(t);
        let z = exec.map(n, |i| local[i].matmul(bases[i].matrix()));
        gossip.charge_compute(2.0 * (d * d * r) as f64);
        let out = gossip.consensus(z, rounds)?;
        let next = exec.try_map(n, |i| {
            qr_factor(&out.scaled(i)).map(|(q, _)| q).map_err(rank_collapse(t, i))
        })?;
        gossip.charge_compute(2.0 * (d * r * r) as f64);
        max_defect = next
            .iter()
            .map(|q| q.matrix().orthonormality_defect())
            .fold(max_defect, f64::max);
        reference.step(&m)?;

        let q_c = reference.basis.matrix();
        let errors = exec.try_map(n, |i| subspace_error(&truth, &next[i]))?;
        let drift: Vec<f64> = next.iter().map(|q| q_c.sub(q.matrix()).frobenius_norm()).collect();
        let converged = match tol {
            Some(tol) => {
                let moves = exec.try_map(n, |i| projection_distance(&bases[i], &next[i]))?;
                moves.iter().all(|&x| x < tol)
            }
            None => false,
        };
        bases = next;
        add_counts(&mut p2p, &out.messages);
        cumulative_rounds += u64::from(rounds);
        done = t + 1;

        let (mean_error, max_error) = mean_max(&errors);
        let (mean_drift, max_drift) = mean_max(&drift);
        trace.push(
            TraceRow {
                t: t + 1,
                consensus_rounds: rounds,
                mean_error,
                max_error,
                mean_drift,
                p2p: p2p.clone(),
                simulated_seconds: gossip.simulated_seconds(),
                wall_seconds: started.elapsed().as_secs_f64(),
            },
            max_drift,
        );
        if converged {
            break;
        }
    }

    Ok(Estimate {
        state: EstimatorState {
            mode: PartitionMode::SampleWise,
            parts: bases.into_iter().map(OrthonormalBasis::into_matrix).collect(),
            outer_iter: done,
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
    use crate::algorithms::centralized_oi;
    use crate::consensus::LocalGossip;
    use crate::datagen::{random_orthonormal, synthetic_dataset, SpectrumSpec};
    use crate::exec::Execution;
    use crate::linalg::DenseMatrix;
    use crate::netgraph::{gen_complete, gen_erdos_renyi, metropolis_weights, WeightMatrix};

    fn dataset(d: usize, r: usize, gap: f64, nodes: usize, seed: u64) -> PartitionedDataset {
        synthetic_dataset(
            &SpectrumSpec::new(d, r, gap),
            100,
            nodes,
            PartitionMode::SampleWise,
            seed,
            false,
        )
        .unwrap()
    }

    #[test]
    fn single_node_matches_centralized() {
        let data = dataset(8, 3, 0.5, 1, 1);
        let q0 = random_orthonormal(8, 3, 2).unwrap();
        let w = WeightMatrix::new(DenseMatrix::identity(1)).unwrap();
        let est = s_dot(&data, &mut LocalGossip::new(w), 3, &q0, 30, None).unwrap();
        let oi = centralized_oi(&data.global_covariance(), &q0, 30, None, true).unwrap();
        for (row, e) in est.trace.rows.iter().zip(&oi.errors) {
            assert!((row.mean_error - e).abs() <= 1e-12);
        }
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-12));
    }

    #[test]
    fn exact_averaging_tracks_centralized() {
        let data = dataset(10, 3, 0.6, 3, 3);
        let q0 = random_orthonormal(10, 3, 4).unwrap();
        let w = metropolis_weights(&gen_complete(3).unwrap());
        let est = s_dot(&data, &mut LocalGossip::new(w.clone()), 1, &q0, 60, None).unwrap();
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-10));
        let sched = ConsensusSchedule::affine(1.0, 1.0, 4);
        let est = sa_dot(&data, &mut LocalGossip::new(w), sched, &q0, 60, None).unwrap();
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-10));
    }

    #[test]
    fn converges_on_random_graph() {
        let data = dataset(20, 5, 0.4, 10, 5);
        let q0 = random_orthonormal(20, 5, 6).unwrap();
        let w = metropolis_weights(&gen_erdos_renyi(10, 0.5, 7).unwrap());
        let est = s_dot(&data, &mut LocalGossip::new(w), 50, &q0, 200, None).unwrap();
        let last = est.trace.last().unwrap();
        assert!(last.mean_error <= 1e-8, "{}", last.mean_error);
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-6));
        assert!(est.state.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn flat_affine_schedule_equals_fixed() {
        let data = dataset(12, 2, 0.5, 6, 8);
        let q0 = random_orthonormal(12, 2, 9).unwrap();
        let w = metropolis_weights(&gen_erdos_renyi(6, 0.5, 1).unwrap());
        let a = s_dot(&data, &mut LocalGossip::new(w.clone()), 7, &q0, 20, None).unwrap();
        let sched = ConsensusSchedule::affine(0.0, 7.0, 50);
        let b = sa_dot(&data, &mut LocalGossip::new(w), sched, &q0, 20, None).unwrap();
        let strip = |t: &RunTrace| {
            t.rows
                .iter()
                .map(|r| TraceRow {
                    wall_seconds: 0.0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.trace), strip(&b.trace));
        assert_eq!(a.state.parts, b.state.parts);
    }

    #[test]
    fn schedules_do_not_change_results() {
        let data = dataset(10, 2, 0.5, 8, 10);
        let q0 = random_orthonormal(10, 2, 11).unwrap();
        let w = metropolis_weights(&gen_erdos_renyi(8, 0.4, 2).unwrap());
        let a = s_dot(
            &data,
            &mut LocalGossip::with_execution(w.clone(), Execution::Sequential),
            5,
            &q0,
            15,
            None,
        )
        .unwrap();
        let b = s_dot(
            &data,
            &mut LocalGossip::with_execution(w, Execution::Parallel),
            5,
            &q0,
            15,
            None,
        )
        .unwrap();
        assert_eq!(a.state.parts, b.state.parts);
    }

    #[test]
    fn shard_count_must_match_network() {
        let data = dataset(6, 2, 0.5, 3, 1);
        let q0 = random_orthonormal(6, 2, 1).unwrap();
        let w = metropolis_weights(&gen_complete(4).unwrap());
        assert!(matches!(
            s_dot(&data, &mut LocalGossip::new(w), 1, &q0, 1, None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn p2p_counts_follow_degrees() {
        let data = dataset(6, 2, 0.5, 5, 2);
        let q0 = random_orthonormal(6, 2, 3).unwrap();
        let topo = gen_erdos_renyi(5, 0.5, 4).unwrap();
        let w = metropolis_weights(&topo);
        let sched = ConsensusSchedule::affine(2.0, 1.0, 6);
        let est = sa_dot(&data, &mut LocalGossip::new(w), sched, &q0, 10, None).unwrap();
        let total = sched.total_rounds(10);
        let expect: Vec<u64> = topo.degrees().iter().map(|&k| k as u64 * total).collect();
        assert_eq!(est.trace.final_p2p(), expect);
    }
}
