use crate::linalg::{sym_eig, DenseMatrix};
use crate::{Error, Result};

use super::Topology;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A symmetric doubly-stochastic matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DenseMatrix,
}

impl WeightMatrix {
    pub fn new(w: DenseMatrix) -> Result<Self> {
        let (n, m) = w.shape();
        if n != m || n == 0 {
            return Err(Error::InvalidWeights(format!("shape {n}x{m}")));
        }
        if w.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidWeights("negative entry".into()));
        }
        for i in 0..n {
            let row: f64 = w.row(i).iter().sum();
            let col: f64 = (0..n).map(|k| w[(k, i)]).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidWeights(format!("row/column {i} sums to {row}/{col}")));
            }
            for j in 0..i {
                if (w[(i, j)] - w[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidWeights(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(WeightMatrix { w })
    }

    /// Skips validation; used to inject faulty weights in self-checks.
    pub fn new_unchecked(w: DenseMatrix) -> Self {
        WeightMatrix { w }
    }

    /// Checks that positive weights only sit on edges or the diagonal.
    pub fn check_support(&self, t: &Topology) -> Result<()> {
        let n = self.size();
        if t.node_count() != n {
            return Err(Error::InvalidWeights(format!(
                "{n} weights rows for {} nodes",
                t.node_count()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.w[(i, j)] > 0.0 && !t.has_edge(i, j) {
                    return Err(Error::InvalidWeights(format!("weight on non-edge ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.w
    }

    /// `W^t`.
    pub fn power(&self, t: usize) -> DenseMatrix {
        let mut p = DenseMatrix::identity(self.size());
        for _ in 0..t {
            p = p.matmul(&self.w);
        }
        p
    }

    /// `W^t e_1`, the divisor that turns consensus averages into sums.
    pub fn first_column_power(&self, t: usize) -> Vec<f64> {
        let n = self.size();
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        for _ in 0..t {
            v = (0..n)
                .map(|i| self.w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
        }
        v
    }
}

/// Metropolis–Hastings weights `1 / (1 + max(deg_i, deg_j))` on edges, with
/// the remaining mass on the diagonal.
pub fn metropolis_weights(t: &Topology) -> WeightMatrix {
    let n = t.node_count();
    let mut w = DenseMatrix::zeros(n, n);
    for &(i, j) in t.edges() {
        let v = 1.0 / (1 + t.degree(i).max(t.degree(j))) as f64;
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = t.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix { w }
}

/// Second-largest eigenvalue modulus.
pub fn slem(w: &WeightMatrix) -> f64 {
    if w.size() == 1 {
        return 0.0;
    }
    let values = sym_eig(w.matrix()).expect("weight matrices are symmetric").values;
    // values[0] is the Perron eigenvalue 1.
    values[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub const MIXING_CAP: usize = 1_000_000;

/// Smallest `t` with `||e_i^T W^t - 1^T/N||_2 <= 1/2` for every row `i`.
pub fn mixing_time(w: &WeightMatrix) -> Result<usize> {
    mixing_time_capped(w, MIXING_CAP)
}

pub(crate) fn mixing_time_capped(w: &WeightMatrix, cap: usize) -> Result<usize> {
    let n = w.size();
    let uniform = 1.0 / n as f64;
    let mut p = DenseMatrix::identity(n);
    for t in 1..=cap {
        p = p.matmul(w.matrix());
        let worst = (0..n)
            .map(|i| p.row(i).iter().map(|v| (v - uniform).powi(2)).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        if worst <= 0.5 {
            return Ok(t);
        }
    }
    Err(Error::NotMixing { cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{gen_complete, gen_erdos_renyi, gen_ring, gen_star};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn metropolis_examples() {
        let w = metropolis_weights(&gen_complete(3).unwrap());
        assert!(w.matrix().as_slice().iter().all(|&v| close(v, 1.0 / 3.0)));

        let w = metropolis_weights(&gen_ring(4).unwrap());
        for i in 0..4 {
            assert!(close(w.get(i, i), 1.0 / 3.0));
            assert!(close(w.get(i, (i + 1) % 4), 1.0 / 3.0));
            assert_eq!(w.get(i, (i + 2) % 4), 0.0);
        }

        let w = metropolis_weights(&gen_star(5).unwrap());
        assert!(close(w.get(0, 1), 0.2));
        assert!(close(w.get(1, 1), 0.8));
        assert!(close(w.get(0, 0), 0.2));
    }

    #[test]
    fn slem_examples() {
        let w = metropolis_weights(&gen_complete(3).unwrap());
        assert!(slem(&w) < 1e-15);
        let w = metropolis_weights(&gen_ring(4).unwrap());
        // Circulant eigenvalues (1 + 2 cos(2 pi k / 4)) / 3.
        let brute: f64 = (1..4)
            .map(|k| ((1.0 + 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 4.0).cos()) / 3.0).abs())
            .fold(0.0, f64::max);
        assert!((slem(&w) - brute).abs() < 1e-14);
        assert!((slem(&w) - 1.0 / 3.0).abs() < 1e-14);
        let w = metropolis_weights(&gen_erdos_renyi(12, 0.3, 4).unwrap());
        assert!(slem(&w) < 1.0);
    }

    #[test]
    fn mixing_examples() {
        let w = metropolis_weights(&gen_complete(3).unwrap());
        assert_eq!(mixing_time(&w).unwrap(), 1);
        let half = WeightMatrix::new(DenseMatrix::from_fn(2, 2, |_, _| 0.5)).unwrap();
        assert_eq!(mixing_time(&half).unwrap(), 1);
        let flip = WeightMatrix::new(DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(
            mixing_time_capped(&flip, 10_000),
            Err(Error::NotMixing { cap: 10_000 })
        ));
    }

    #[test]
    fn chords_do_not_slow_mixing_on_ring() {
        let ring = gen_ring(20).unwrap();
        let mut last = mixing_time(&metropolis_weights(&ring)).unwrap();
        let mut edges: Vec<(usize, usize)> = ring.edges().to_vec();
        for chord in [(0, 10), (5, 15), (2, 12), (7, 17)] {
            edges.push(chord);
            let t = Topology::from_edges(20, edges.clone()).unwrap();
            let now = mixing_time(&metropolis_weights(&t)).unwrap();
            assert!(now <= last, "{now} > {last} after {chord:?}");
            last = now;
        }
    }

    #[test]
    fn validation_rejects_bad_weights() {
        let bad = DenseMatrix::from_rows(&[[0.6, 0.5], [0.4, 0.5]]).unwrap();
        assert!(WeightMatrix::new(bad).is_err());
        let neg = DenseMatrix::from_rows(&[[1.5, -0.5], [-0.5, 1.5]]).unwrap();
        assert!(WeightMatrix::new(neg).is_err());
        let w = metropolis_weights(&gen_complete(3).unwrap());
        assert!(w.check_support(&gen_star(3).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn metropolis_is_doubly_stochastic(n in 2usize..16, p in 0.2f64..1.0, seed in 0u64..500) {
            let t = gen_erdos_renyi(n, p, seed).unwrap();
            let w = metropolis_weights(&t);
            prop_assert!(WeightMatrix::new(w.matrix().clone()).is_ok());
            prop_assert!(w.check_support(&t).is_ok());
            prop_assert!((0..n).all(|i| w.get(i, i) > 0.0));
        }

        #[test]
        fn powers_contract_at_slem_rate(n in 3usize..12, p in 0.3f64..1.0, seed in 0u64..200) {
            let w = metropolis_weights(&gen_erdos_renyi(n, p, seed).unwrap());
            let s = slem(&w);
            let avg = DenseMatrix::from_fn(n, n, |_, _| 1.0 / n as f64);
            let mut pw = DenseMatrix::identity(n);
            for t in 1..=50 {
                pw = pw.matmul(w.matrix());
                let dev = crate::linalg::spectral_norm(&pw.sub(&avg));
                prop_assert!(dev <= s.powi(t) + 1e-10, "t={} dev={} bound={}", t, dev, s.powi(t));
            }
            let tau = mixing_time(&w).unwrap();
            // Row deviation at step t is at most slem^t * sqrt(1 - 1/N).
            let upper = if s == 0.0 { 1 } else {
                ((2.0 * (1.0 - 1.0 / n as f64).sqrt()).ln() / (1.0 / s).ln()).ceil().max(1.0) as usize
            };
            prop_assert!(tau <= upper, "tau={} upper={}", tau, upper);
            prop_assert!(0.5 <= s.powi(tau as i32 - 1) * (n as f64).sqrt() + 1e-12);
        }
    }
}
