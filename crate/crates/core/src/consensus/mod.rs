//! Bulk-synchronous matrix average consensus with scaled-sum recovery.
//!
//! One round replaces every node value by `sum_{j in N_i} w_ij Z_j`, where
//! `N_i` includes `i`. All sends of a round complete before any node
//! combines: rounds are computed from an immutable snapshot into a fresh
//! buffer, and each node sums its neighbourhood in ascending id order, so
//! results do not depend on how nodes are scheduled or which transport moved
//! the messages.
//!
//! After `T` rounds node `i` divides by `[W^T e_1]_i`, a network constant
//! computed locally from `W`, to estimate the *sum* of the initial values.
//! A node that node 0's mass has not reached yet (`[W^T e_1]_i = 0`, fewer
//! rounds than its hop distance to node 0) divides by `1/N` instead.

mod schedule;

pub use schedule::{ConsensusSchedule, DEFAULT_CAP};

use crate::exec::Execution;
use crate::linalg::DenseMatrix;
use crate::netgraph::WeightMatrix;
use crate::{Error, Result};

/// Neighbourhoods (self included, ascending) implied by the support of `W`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    lists: Vec<Vec<usize>>,
}

impl Support {
    pub fn of(w: &WeightMatrix) -> Self {
        let n = w.size();
        let lists = (0..n)
            .map(|i| (0..n).filter(|&j| j == i || w.get(i, j) > 0.0).collect())
            .collect();
        Support { lists }
    }

    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    /// Neighbours excluding `i`.
    pub fn peers(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[i].iter().copied().filter(move |&j| j != i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.lists[i].len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.lists.len()
    }
}

/// `sum_{j} w_ij Z_j` over `(j, Z_j)` pairs given in ascending `j`.
pub fn weighted_combine<'a>(
    w: &WeightMatrix,
    node: usize,
    values: impl IntoIterator<Item = (usize, &'a DenseMatrix)>,
    shape: (usize, usize),
) -> DenseMatrix {
    let mut acc = DenseMatrix::zeros(shape.0, shape.1);
    for (j, z) in values {
        acc.axpy(w.get(node, j), z);
    }
    acc
}

/// Moves one round of messages and combines them.
pub trait Exchange {
    /// Runs round number `round`; returns the new value of every node.
    fn round(
        &mut self,
        w: &WeightMatrix,
        support: &Support,
        round: u64,
        states: &[DenseMatrix],
    ) -> Result<Vec<DenseMatrix>>;
}

/// Shared-memory exchange: each node reads its neighbours from the previous
/// round's buffer.
#[derive(Debug, Clone, Copy, Default)]
pub struct InProcess {
    pub exec: Execution,
}

impl Exchange for InProcess {
    fn round(
        &mut self,
        w: &WeightMatrix,
        support: &Support,
        _round: u64,
        states: &[DenseMatrix],
    ) -> Result<Vec<DenseMatrix>> {
        let shape = states[0].shape();
        Ok(self.exec.map(states.len(), |i| {
            weighted_combine(w, i, support.neighborhood(i).iter().map(|&j| (j, &states[j])), shape)
        }))
    }
}

/// Node values after a consensus run.
#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub states: Vec<DenseMatrix>,
    /// `[W^T e_1]_i` per node.
    pub scale: Vec<f64>,
    pub rounds_used: u32,
    /// Messages sent by each node during this run.
    pub messages: Vec<u64>,
}

impl ConsensusOutcome {
    /// Node `i`'s estimate of the sum of the initial values.
    pub fn scaled(&self, i: usize) -> DenseMatrix {
        self.states[i].scale(1.0 / self.scale[i])
    }

    pub fn scaled_all(&self) -> Vec<DenseMatrix> {
        (0..self.states.len()).map(|i| self.scaled(i)).collect()
    }
}

fn check_initial(initial: &[DenseMatrix], n: usize) -> Result<()> {
    if initial.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} node values for {n} nodes",
            initial.len()
        )));
    }
    let shape = initial[0].shape();
    if let Some(k) = initial.iter().position(|z| z.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "node {k} holds {:?}, node 0 holds {shape:?}",
            initial[k].shape()
        )));
    }
    Ok(())
}

/// Runs `rounds` rounds over `exchange`. `first_round` numbers the rounds
/// for transports that tag frames.
pub fn run_rounds(
    exchange: &mut dyn Exchange,
    w: &WeightMatrix,
    support: &Support,
    initial: Vec<DenseMatrix>,
    rounds: u32,
    first_round: u64,
) -> Result<ConsensusOutcome> {
    check_initial(&initial, w.size())?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("consensus needs at least one round".into()));
    }
    let mut states = initial;
    for k in 0..rounds {
        states = exchange.round(w, support, first_round + u64::from(k), &states)?;
    }
    let messages = (0..w.size())
        .map(|i| support.degree(i) as u64 * u64::from(rounds))
        .collect();
    Ok(ConsensusOutcome {
        states,
        scale: scale_factors(w, rounds),
        rounds_used: rounds,
        messages,
    })
}

/// `[W^T e_1]_i`, with `1/N` for nodes not yet reached from node 0.
pub fn scale_factors(w: &WeightMatrix, rounds: u32) -> Vec<f64> {
    let uniform = 1.0 / w.size() as f64;
    w.first_column_power(rounds as usize)
        .into_iter()
        .map(|s| if s > 0.0 { s } else { uniform })
        .collect()
}

/// Network-wide disagreement `sqrt(sum_i ||Z_i - mean||_F^2)`.
pub fn disagreement(states: &[DenseMatrix]) -> f64 {
    let n = states.len() as f64;
    let mean = states
        .iter()
        .skip(1)
        .fold(states[0].clone(), |a, b| a.add(b))
        .scale(1.0 / n);
    states
        .iter()
        .map(|z| z.sub(&mean).frobenius_norm().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// In-process consensus with the default execution policy.
pub fn consensus_sum(initial: &[DenseMatrix], w: &WeightMatrix, rounds: u32) -> Result<ConsensusOutcome> {
    run_rounds(
        &mut InProcess::default(),
        w,
        &Support::of(w),
        initial.to_vec(),
        rounds,
        0,
    )
}

/// `||sum_i |Z_i|||_F` with entrywise absolute values.
pub fn z_prime_norm(initial: &[DenseMatrix]) -> f64 {
    let mut acc = DenseMatrix::zeros(initial[0].rows(), initial[0].cols());
    for z in initial {
        acc = acc.add(&z.map(f64::abs));
    }
    acc.frobenius_norm()
}

/// Largest `||scaled_i - exact_sum||_F` over nodes.
pub fn max_sum_error(outcome: &ConsensusOutcome, exact_sum: &DenseMatrix) -> f64 {
    (0..outcome.states.len())
        .map(|i| outcome.scaled(i).sub(exact_sum).frobenius_norm())
        .fold(0.0, f64::max)
}

/// True iff every node satisfies `||scaled_i - Z||_F <= delta * ||Z'||_F`.
pub fn consensus_error_bound_check(
    outcome: &ConsensusOutcome,
    exact_sum: &DenseMatrix,
    z_prime_norm: f64,
    delta: f64,
) -> bool {
    (0..outcome.states.len()).all(|i| outcome.scaled(i).sub(exact_sum).frobenius_norm() <= delta * z_prime_norm)
}

/// The consensus service seen by the estimators.
pub trait Gossip {
    fn weights(&self) -> &WeightMatrix;

    /// Runs `rounds` averaging rounds starting from `initial`.
    fn consensus(&mut self, initial: Vec<DenseMatrix>, rounds: u32) -> Result<ConsensusOutcome>;

    /// Charges local computation (in flops, max over nodes) to the clock.
    fn charge_compute(&mut self, _flops: f64) {}

    /// Simulated seconds elapsed so far.
    fn simulated_seconds(&self) -> f64 {
        0.0
    }

    /// Execution policy for per-node local work.
    fn execution(&self) -> Execution {
        Execution::default()
    }

    fn node_count(&self) -> usize {
        self.weights().size()
    }
}

/// In-process [`Gossip`] without a clock.
#[derive(Debug, Clone)]
pub struct LocalGossip {
    w: WeightMatrix,
    support: Support,
    exchange: InProcess,
    rounds_so_far: u64,
}

impl LocalGossip {
    pub fn new(w: WeightMatrix) -> Self {
        Self::with_execution(w, Execution::default())
    }

    pub fn with_execution(w: WeightMatrix, exec: Execution) -> Self {
        LocalGossip {
            support: Support::of(&w),
            w,
            exchange: InProcess { exec },
            rounds_so_far: 0,
        }
    }
}

impl Gossip for LocalGossip {
    fn weights(&self) -> &WeightMatrix {
        &self.w
    }

    fn consensus(&mut self, initial: Vec<DenseMatrix>, rounds: u32) -> Result<ConsensusOutcome> {
        let out = run_rounds(
            &mut self.exchange,
            &self.w,
            &self.support,
            initial,
            rounds,
            self.rounds_so_far,
        )?;
        self.rounds_so_far += u64::from(rounds);
        Ok(out)
    }

    fn execution(&self) -> Execution {
        self.exchange.exec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{gen_complete, gen_erdos_renyi, gen_ring, metropolis_weights, mixing_time, slem};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_values(n: usize, rows: usize, cols: usize, seed: u64) -> Vec<DenseMatrix> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn exact_sum(values: &[DenseMatrix]) -> DenseMatrix {
        values.iter().skip(1).fold(values[0].clone(), |a, b| a.add(b))
    }

    #[test]
    fn equal_values_are_a_fixed_point() {
        let w = metropolis_weights(&gen_ring(6).unwrap());
        let a = DenseMatrix::from_rows(&[[1.5, -2.0], [0.25, 4.0]]).unwrap();
        let out = consensus_sum(&vec![a.clone(); 6], &w, 7).unwrap();
        for i in 0..6 {
            assert!(out.states[i].sub(&a).max_abs() < 1e-14);
            // The divisor is exactly 1/N only in the limit.
            assert!(out.scaled(i).sub(&a.scale(1.0 / out.scale[i])).max_abs() < 1e-12);
        }
        let out = consensus_sum(&vec![a.clone(); 6], &w, 200).unwrap();
        for i in 0..6 {
            assert!(out.scaled(i).sub(&a.scale(6.0)).max_abs() < 1e-10);
        }
    }

    #[test]
    fn unreached_nodes_fall_back_to_uniform_divisor() {
        let w = metropolis_weights(&gen_ring(20).unwrap());
        let s = scale_factors(&w, 2);
        assert!(s[0] > 0.0 && s[2] > 0.0 && s[18] > 0.0);
        assert_eq!(s[10], 1.0 / 20.0);
        let init = random_values(20, 2, 2, 5);
        let out = consensus_sum(&init, &w, 1).unwrap();
        assert!(out
            .scaled_all()
            .iter()
            .all(|m| m.as_slice().iter().all(|v| v.is_finite())));
    }

    #[test]
    fn two_node_hand_example() {
        let w = WeightMatrix::new(DenseMatrix::from_fn(2, 2, |_, _| 0.5)).unwrap();
        let init = vec![
            DenseMatrix::from_rows(&[[2.0]]).unwrap(),
            DenseMatrix::from_rows(&[[0.0]]).unwrap(),
        ];
        let out = consensus_sum(&init, &w, 1).unwrap();
        assert_eq!(out.states[0][(0, 0)], 1.0);
        assert_eq!(out.states[1][(0, 0)], 1.0);
        assert_eq!(out.scale, vec![0.5, 0.5]);
        assert_eq!(out.scaled(1)[(0, 0)], 2.0);
        assert_eq!(out.messages, vec![1, 1]);
    }

    #[test]
    fn complete_graph_is_exact_after_one_round() {
        let w = metropolis_weights(&gen_complete(3).unwrap());
        let init = random_values(3, 4, 2, 1);
        let sum = exact_sum(&init);
        let out = consensus_sum(&init, &w, 1).unwrap();
        assert!(max_sum_error(&out, &sum) < 1e-12 * sum.frobenius_norm().max(1.0));
    }

    #[test]
    fn scaled_error_contracts_at_slem() {
        let w = metropolis_weights(&gen_erdos_renyi(10, 0.5, 3).unwrap());
        let init = random_values(10, 3, 2, 1);
        let sum = exact_sum(&init);
        let errs: Vec<f64> = (1..=30)
            .map(|k| {
                let out = consensus_sum(&init, &w, k).unwrap();
                (0..w.size())
                    .map(|i| out.scaled(i).sub(&sum).frobenius_norm().powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        // rounds 4..=30
        let ratio = (errs[29] / errs[3]).powf(1.0 / 26.0);
        let s = slem(&w);
        assert!((ratio - s).abs() <= 0.1 * s, "ratio {ratio} slem {s}");
    }

    #[test]
    fn disagreement_contracts_at_slem_on_ring() {
        let w = metropolis_weights(&gen_ring(20).unwrap());
        let init = random_values(20, 3, 2, 2);
        let d5 = disagreement(&consensus_sum(&init, &w, 5).unwrap().states);
        let d30 = disagreement(&consensus_sum(&init, &w, 30).unwrap().states);
        let ratio = (d30 / d5).powf(1.0 / 25.0);
        let s = slem(&w);
        assert!((ratio - s).abs() <= 0.1 * s, "ratio {ratio} slem {s}");
    }

    #[test]
    fn bound_check_cases() {
        let w = metropolis_weights(&gen_erdos_renyi(10, 0.5, 8).unwrap());
        let init = random_values(10, 5, 3, 4);
        let sum = exact_sum(&init);
        let zp = z_prime_norm(&init);
        let delta = 1e-6;
        let tau = mixing_time(&w).unwrap() as f64;
        let long = consensus_sum(&init, &w, (10.0 * tau * (1.0f64 / delta).ln()).ceil() as u32).unwrap();
        assert!(consensus_error_bound_check(&long, &sum, zp, delta));

        let ring = metropolis_weights(&gen_ring(30).unwrap());
        let init = random_values(30, 5, 3, 4);
        let one = consensus_sum(&init, &ring, 1).unwrap();
        assert!(!consensus_error_bound_check(
            &one,
            &exact_sum(&init),
            z_prime_norm(&init),
            1e-9
        ));

        let err = max_sum_error(&one, &exact_sum(&init));
        let zp = z_prime_norm(&init);
        assert!(consensus_error_bound_check(&one, &exact_sum(&init), zp, err / zp));
    }

    #[test]
    fn errors_on_bad_inputs() {
        let w = metropolis_weights(&gen_ring(3).unwrap());
        let mut init = random_values(3, 2, 2, 0);
        assert!(matches!(consensus_sum(&init[..2], &w, 1), Err(Error::ShapeMismatch(_))));
        init[1] = DenseMatrix::zeros(3, 2);
        assert!(matches!(consensus_sum(&init, &w, 1), Err(Error::ShapeMismatch(_))));
        assert!(consensus_sum(&random_values(3, 2, 2, 0), &w, 0).is_err());
    }

    #[test]
    fn scaled_error_monotone_after_burn_in() {
        let w = metropolis_weights(&gen_erdos_renyi(12, 0.35, 5).unwrap());
        let init = random_values(12, 4, 2, 9);
        let sum = exact_sum(&init);
        let s = slem(&w);
        let start = (12f64.ln() / (1.0f64 / s).ln()).ceil() as u32;
        let mut last = f64::INFINITY;
        for k in start.max(1)..start + 40 {
            let e = max_sum_error(&consensus_sum(&init, &w, k).unwrap(), &sum);
            assert!(e <= last + 1e-13, "round {k}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn sequential_and_parallel_rounds_are_bit_identical() {
        let w = metropolis_weights(&gen_erdos_renyi(16, 0.3, 2).unwrap());
        let init = random_values(16, 6, 3, 3);
        let mut a = LocalGossip::with_execution(w.clone(), Execution::Sequential);
        let mut b = LocalGossip::with_execution(w, Execution::Parallel);
        let oa = a.consensus(init.clone(), 25).unwrap();
        let ob = b.consensus(init, 25).unwrap();
        assert_eq!(oa.states, ob.states);
    }

    proptest! {
        #[test]
        fn mass_is_conserved(n in 2usize..12, p in 0.3f64..1.0, seed in 0u64..300, rounds in 1u32..40) {
            let w = metropolis_weights(&gen_erdos_renyi(n, p, seed).unwrap());
            let init = random_values(n, 3, 2, seed);
            let before = exact_sum(&init);
            let out = consensus_sum(&init, &w, rounds).unwrap();
            let after = exact_sum(&out.states);
            prop_assert!(after.sub(&before).frobenius_norm() <= 1e-10 * before.frobenius_norm().max(1e-300));
            prop_assert!((w.first_column_power(rounds as usize).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
