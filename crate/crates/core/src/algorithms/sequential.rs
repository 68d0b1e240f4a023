use std::time::Instant;

use crate::consensus::Gossip;
use crate::datagen::{PartitionMode, PartitionedDataset};
use crate::linalg::{subspace_error, sym_eig, DenseMatrix, OrthonormalBasis};
use crate::trace::{RunTrace, TraceRow};
use crate::{Error, Result};

use super::{add_counts, check_init, ground_truth, mean_max, span, Estimate, EstimatorState, OiRun};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components along `found` (twice, for stability) and
/// normalizes. `None` if nothing is left.
fn deflate_normalize(v: &mut [f64], found: &[Vec<f64>]) -> Option<()> {
    for _ in 0..2 {
        for f in found {
            let c = dot(f, v);
            v.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
        }
    }
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// Fails with `NotDistinct` unless `lambda_1 > ... > lambda_{r+1}`.
fn check_distinct(m: &DenseMatrix, r: usize) -> Result<()> {
    let values = sym_eig(m)?.values;
    let scale = values[0].abs().max(f64::MIN_POSITIVE);
    for k in 0..r.min(values.len() - 1) {
        if values[k] - values[k + 1] <= 1e-10 * scale {
            return Err(Error::NotDistinct { index: k, next: k + 1 });
        }
    }
    Ok(())
}

fn matvec(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

/// Columns `found`, then `current`, then the start columns not reached yet.
fn assemble(found: &[Vec<f64>], current: &[f64], q_init: &OrthonormalBasis) -> DenseMatrix {
    let (d, r) = q_init.matrix().shape();
    let mut b = DenseMatrix::zeros(d, r);
    for (k, f) in found.iter().enumerate() {
        b.set_column(k, f);
    }
    if found.len() < r {
        b.set_column(found.len(), current);
    }
    for k in found.len() + 1..r {
        b.set_column(k, &q_init.matrix().column(k));
    }
    b
}

/// Sequential power method: basis vectors one at a time, each iterate
/// re-orthogonalized against the vectors already found. Vector `k` starts
/// from column `k` of `q_init` and is accepted once an iteration moves it
/// by less than `tol` in sine.
pub fn seq_pm(
    m: &DenseMatrix,
    q_init: &OrthonormalBasis,
    max_iters_per_vector: usize,
    tol: f64,
) -> Result<OrthonormalBasis> {
    if m.rows() != m.cols() || m.rows() != q_init.dim() {
        return Err(Error::ShapeMismatch(format!(
            "matrix {:?} with start basis {:?}",
            m.shape(),
            q_init.matrix().shape()
        )));
    }
    let r = q_init.rank();
    check_distinct(m, r)?;
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let mut v = q_init.matrix().column(k);
        deflate_normalize(&mut v, &found).ok_or(Error::RankCollapse { iteration: 0, node: 0 })?;
        let mut converged = false;
        for it in 0..max_iters_per_vector {
            let mut w = matvec(m, &v);
            deflate_normalize(&mut w, &found).ok_or(Error::RankCollapse { iteration: it, node: 0 })?;
            let c = dot(&v, &w).abs().min(1.0);
            v = w;
            if (1.0 - c * c).max(0.0).sqrt() < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SlowConvergence {
                vector: k,
                iterations: max_iters_per_vector,
            });
        }
        found.push(v);
    }
    let mut q = DenseMatrix::zeros(m.rows(), r);
    for (k, f) in found.iter().enumerate() {
        q.set_column(k, f);
    }
    OrthonormalBasis::new(q)
}

/// Distributed sequential power method over a sample-wise split.
///
/// Vector `k` runs `iters_per_vector` iterations of `v_i <- sum_j M_j v_j`
/// (by consensus), deflated against the node's earlier vectors and
/// normalized. Each trace row scores the node's full working basis, where
/// vectors not reached yet still hold their start values.
pub fn seq_dist_pm(
    dataset: &PartitionedDataset,
    gossip: &mut dyn Gossip,
    q_init: &OrthonormalBasis,
    rounds_per_iter: u32,
    iters_per_vector: usize,
) -> Result<Estimate> {
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
    check_distinct(&m, r)?;
    let (truth, _) = ground_truth(&m, r)?;
    check_init(&truth, q_init)?;
    let exec = gossip.execution();

    let mut found: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut found_c: Vec<Vec<f64>> = Vec::new();
    let mut p2p = vec![0u64; n];
    let mut trace = RunTrace::default();
    let mut ref_errors = Vec::new();
    let mut cumulative_rounds = 0u64;
    let mut step = 0usize;

    let e0 = subspace_error(&truth, q_init)?;
    ref_errors.push(e0);
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

    for k in 0..r {
        let start = q_init.matrix().column(k);
        let mut v = vec![start.clone(); n];
        for (i, vi) in v.iter_mut().enumerate() {
            deflate_normalize(vi, &found[i]).ok_or(Error::RankCollapse {
                iteration: step,
                node: i,
            })?;
        }
        let mut v_c = start;
        deflate_normalize(&mut v_c, &found_c).ok_or(Error::RankCollapse {
            iteration: step,
            node: 0,
        })?;

        for _ in 0..iters_per_vector {
            let z = exec.map(n, |i| {
                DenseMatrix::new(d, 1, matvec(&local[i], &v[i])).expect("finite products")
            });
            gossip.charge_compute(2.0 * (d * d) as f64);
            let out = gossip.consensus(z, rounds_per_iter)?;
            let next = exec.map(n, |i| {
                let mut w = out.scaled(i).into_vec();
                deflate_normalize(&mut w, &found[i]).map(|_| w)
            });
            for (i, w) in next.into_iter().enumerate() {
                v[i] = w.ok_or(Error::RankCollapse {
                    iteration: step,
                    node: i,
                })?;
            }
            let mut w_c = matvec(&m, &v_c);
            deflate_normalize(&mut w_c, &found_c).ok_or(Error::RankCollapse {
                iteration: step,
                node: 0,
            })?;
            v_c = w_c;
            add_counts(&mut p2p, &out.messages);
            cumulative_rounds += u64::from(rounds_per_iter);
            step += 1;

            let b_c = assemble(&found_c, &v_c, q_init);
            ref_errors.push(subspace_error(&truth, &span(&b_c)?)?);
            let scored = exec.try_map(n, |i| {
                let b = assemble(&found[i], &v[i], q_init);
                let e = subspace_error(&truth, &span(&b)?)?;
                Ok::<_, Error>((e, b_c.sub(&b).frobenius_norm()))
            })?;
            let errors: Vec<f64> = scored.iter().map(|s| s.0).collect();
            let drift: Vec<f64> = scored.iter().map(|s| s.1).collect();
            let (mean_error, max_error) = mean_max(&errors);
            let (mean_drift, max_drift) = mean_max(&drift);
            trace.push(
                TraceRow {
                    t: step,
                    consensus_rounds: rounds_per_iter,
                    mean_error,
                    max_error,
                    mean_drift,
                    p2p: p2p.clone(),
                    simulated_seconds: gossip.simulated_seconds(),
                    wall_seconds: started.elapsed().as_secs_f64(),
                },
                max_drift,
            );
        }
        for (i, vi) in v.into_iter().enumerate() {
            found[i].push(vi);
        }
        found_c.push(v_c);
    }

    let to_matrix = |vs: &[Vec<f64>]| {
        let mut q = DenseMatrix::zeros(d, r);
        for (k, f) in vs.iter().enumerate() {
            q.set_column(k, f);
        }
        q
    };
    let basis_c = OrthonormalBasis::with_tolerance(to_matrix(&found_c), 1e-8)?;
    let parts: Vec<DenseMatrix> = found.iter().map(|f| to_matrix(f)).collect();
    let max_defect = parts.iter().map(DenseMatrix::orthonormality_defect).fold(0.0, f64::max);
    Ok(Estimate {
        state: EstimatorState {
            mode: PartitionMode::SampleWise,
            parts,
            outer_iter: step,
            cumulative_rounds,
        },
        trace,
        reference: OiRun {
            basis: basis_c,
            r_factors: Vec::new(),
            errors: ref_errors,
            truth: Some(truth),
        },
        max_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::LocalGossip;
    use crate::datagen::{make_covariance, random_orthonormal, synthetic_dataset, SpectrumSpec, TopProfile};
    use crate::netgraph::{gen_complete, metropolis_weights};
    use proptest::prelude::*;

    #[test]
    fn diagonal_basis() {
        let m = DenseMatrix::diag(&[4.0, 2.0, 1.0]);
        let q0 = random_orthonormal(3, 2, 1).unwrap();
        let q = seq_pm(&m, &q0, 1000, 1e-12).unwrap();
        assert!((q.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-10);
        assert!((q.matrix()[(1, 1)].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_top_eigenvalue_is_rejected() {
        let m = DenseMatrix::diag(&[2.0, 2.0, 1.0]);
        let q0 = random_orthonormal(3, 1, 1).unwrap();
        assert!(matches!(
            seq_pm(&m, &q0, 100, 1e-10),
            Err(Error::NotDistinct { index: 0, next: 1 })
        ));
    }

    #[test]
    fn iteration_cap_reports_slow_convergence() {
        let m = DenseMatrix::diag(&[1.0, 0.999, 0.5]);
        let q0 = random_orthonormal(3, 1, 2).unwrap();
        assert!(matches!(
            seq_pm(&m, &q0, 10, 1e-12),
            Err(Error::SlowConvergence {
                vector: 0,
                iterations: 10
            })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn agrees_with_eigensolver(d in 4usize..10, seed in 0u64..1000) {
            let r = d / 2;
            let (m, q_true) = make_covariance(&SpectrumSpec::new(d, r, 0.5).with_tail(0.7), seed).unwrap();
            let q0 = random_orthonormal(d, r, seed + 1).unwrap();
            let q = seq_pm(&m, &q0, 5000, 1e-13).unwrap();
            prop_assert!(subspace_error(&q_true, &q).unwrap() <= 1e-8);
        }
    }

    fn data(seed: u64) -> PartitionedDataset {
        synthetic_dataset(
            &SpectrumSpec::new(10, 3, 0.5),
            200,
            3,
            PartitionMode::SampleWise,
            seed,
            false,
        )
        .unwrap()
    }

    #[test]
    fn exact_averaging_matches_eigensolver_and_steps_down() {
        let data = data(3);
        let q0 = random_orthonormal(10, 3, 4).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(3).unwrap()));
        let est = seq_dist_pm(&data, &mut g, &q0, 1, 80).unwrap();
        let (truth, _) = ground_truth(&data.global_covariance(), 3).unwrap();
        for i in 0..3 {
            assert!(subspace_error(&truth, &est.state.basis(i).unwrap()).unwrap() <= 1e-6);
        }
        let rows = &est.trace.rows;
        let final_error = rows.last().unwrap().mean_error;
        let before_last_phase = rows[2 * 80].mean_error;
        assert!(before_last_phase >= 10.0 * final_error);
        assert!(est.trace.max_drift.iter().all(|&x| x <= 1e-8));
    }

    #[test]
    fn single_vector_is_the_power_method() {
        let data = data(5);
        let q0 = random_orthonormal(10, 1, 6).unwrap();
        let mut g = LocalGossip::new(metropolis_weights(&gen_complete(3).unwrap()));
        let est = seq_dist_pm(&data, &mut g, &q0, 1, 60).unwrap();
        let m = data.global_covariance();
        let mut v = q0.matrix().clone();
        for _ in 0..60 {
            let w = m.matmul(&v);
            v = w.scale(1.0 / w.frobenius_norm());
        }
        assert!(v.sub(&est.state.parts[0]).frobenius_norm() < 1e-10);
    }

    #[test]
    fn equal_top_eigenvalues_are_rejected() {
        let spec = SpectrumSpec::new(6, 2, 0.5).with_top(TopProfile::EqualTopR);
        let (m, _) = make_covariance(&spec, 1).unwrap();
        let q0 = random_orthonormal(6, 2, 2).unwrap();
        assert!(matches!(seq_pm(&m, &q0, 100, 1e-10), Err(Error::NotDistinct { .. })));
    }
}
