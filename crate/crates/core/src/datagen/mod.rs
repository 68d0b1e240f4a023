//! Synthetic spectra, Gaussian sampling, centering and partitioning.
//!
//! Data matrices follow the "row = feature, column = sample" convention:
//! `X` is `d x n`. Local covariances are unnormalised Gram matrices
//! `M_i = X_i X_i^T`, so that `sum_i M_i = X X^T` holds exactly for a
//! sample-wise split.

mod io;

pub use io::{load_binary, load_csv, load_matrix, save_binary, save_csv, BINARY_MAGIC};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{qr_factor, sym_eig, DenseMatrix, OrthonormalBasis};
use crate::{Error, Result};

/// Shape of the leading `r` eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopProfile {
    /// `lambda_i = ratio^(i-1)` for `i <= r`.
    DistinctGeometric { ratio: f64 },
    /// `lambda_1 = ... = lambda_r = 1`.
    EqualTopR,
}

impl Default for TopProfile {
    fn default() -> Self {
        TopProfile::DistinctGeometric { ratio: 0.9 }
    }
}

/// A covariance spectrum with a prescribed `r`-th eigengap.
///
/// `lambda_1 = 1`, the top block follows [`TopProfile`],
/// `lambda_{r+1} = gap * lambda_r` and the tail decays geometrically with
/// `tail_ratio` below `lambda_{r+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSpec {
    pub d: usize,
    pub r: usize,
    pub gap: f64,
    pub top: TopProfile,
    pub tail_ratio: f64,
}

impl SpectrumSpec {
    pub fn new(d: usize, r: usize, gap: f64) -> Self {
        SpectrumSpec {
            d,
            r,
            gap,
            top: TopProfile::default(),
            tail_ratio: 0.9,
        }
    }

    pub fn with_top(mut self, top: TopProfile) -> Self {
        self.top = top;
        self
    }

    pub fn with_tail(mut self, tail_ratio: f64) -> Self {
        self.tail_ratio = tail_ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r >= self.d {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= r < d, got r={} d={}",
                self.r, self.d
            )));
        }
        if !(self.gap > 0.0 && self.gap < 1.0) {
            return Err(Error::InvalidSpec(format!("gap must lie in (0,1), got {}", self.gap)));
        }
        if !(self.tail_ratio > 0.0 && self.tail_ratio <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "tail ratio must lie in (0,1], got {}",
                self.tail_ratio
            )));
        }
        if let TopProfile::DistinctGeometric { ratio } = self.top {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidSpec(format!("top ratio must lie in (0,1], got {ratio}")));
            }
        }
        Ok(())
    }

    /// The realised eigenvalues, in descending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut lambda = Vec::with_capacity(self.d);
        for i in 0..self.r {
            lambda.push(match self.top {
                TopProfile::DistinctGeometric { ratio } => ratio.powi(i as i32),
                TopProfile::EqualTopR => 1.0,
            });
        }
        let mut next = lambda[self.r - 1] * self.gap;
        for _ in self.r..self.d {
            lambda.push(next);
            next *= self.tail_ratio;
        }
        Ok(lambda)
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// A seeded random `d x r` orthonormal matrix (QR of a Gaussian matrix).
pub fn random_orthonormal(d: usize, r: usize, seed: u64) -> Result<OrthonormalBasis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(qr_factor(&gaussian_matrix(d, r, &mut rng))?.0)
}

/// `U diag(lambda) U^T` with a seeded random orthogonal `U`; also returns the
/// leading `r` columns of `U`.
pub fn make_covariance(spec: &SpectrumSpec, seed: u64) -> Result<(DenseMatrix, OrthonormalBasis)> {
    let lambda = spec.eigenvalues()?;
    let d = spec.d;
    let u = random_orthonormal(d, d, seed)?.into_matrix();
    let mut m = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|k| lambda[k] * u[(i, k)] * u[(j, k)]).sum();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let q_true = OrthonormalBasis::new(u.col_block(0, spec.r))?;
    Ok((m, q_true))
}

/// `n` i.i.d. zero-mean Gaussian columns with covariance `m`.
pub fn sample_gaussian(m: &DenseMatrix, n: usize, seed: u64) -> Result<DenseMatrix> {
    let eig = sym_eig(m)?;
    let d = m.rows();
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(&worst) = eig.values.last() {
        if worst < -1e-10 * scale {
            return Err(Error::NotPsd { eigenvalue: worst });
        }
    }
    let u = eig.vectors.matrix();
    let roots: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let sqrt_m = DenseMatrix::from_fn(d, d, |i, j| (0..d).map(|k| roots[k] * u[(i, k)] * u[(j, k)]).sum());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian_matrix(d, n, &mut rng);
    Ok(sqrt_m.matmul(&g))
}

/// Subtracts each row's mean over the columns.
pub fn center_columns(x: &DenseMatrix) -> DenseMatrix {
    let n = x.cols();
    if n == 0 {
        return x.clone();
    }
    let means: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().sum::<f64>() / n as f64).collect();
    DenseMatrix::from_fn(x.rows(), n, |i, j| x[(i, j)] - means[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Node `i` holds whole samples, `X_i` is `d x n_i`.
    SampleWise,
    /// Node `i` holds some features of every sample, `X_i` is `d_i x n`.
    FeatureWise,
}

/// The global data split across `N` nodes.
#[derive(Debug, Clone)]
pub struct PartitionedDataset {
    pub mode: PartitionMode,
    pub shards: Vec<DenseMatrix>,
    /// `(d, n)` of the global matrix.
    pub global_dims: (usize, usize),
    pub seed: u64,
}

impl PartitionedDataset {
    pub fn node_count(&self) -> usize {
        self.shards.len()
    }

    /// Samples per node (sample-wise) or features per node (feature-wise).
    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards
            .iter()
            .map(|s| match self.mode {
                PartitionMode::SampleWise => s.cols(),
                PartitionMode::FeatureWise => s.rows(),
            })
            .collect()
    }

    /// Reassembles `X` in node order.
    pub fn global(&self) -> DenseMatrix {
        match self.mode {
            PartitionMode::SampleWise => DenseMatrix::hstack(&self.shards),
            PartitionMode::FeatureWise => DenseMatrix::vstack(&self.shards),
        }
        .expect("shards are consistent by construction")
    }

    /// `M = X X^T`.
    pub fn global_covariance(&self) -> DenseMatrix {
        match self.mode {
            PartitionMode::SampleWise => {
                let mut m = DenseMatrix::zeros(self.global_dims.0, self.global_dims.0);
                for c in self.local_covariances().expect("sample-wise") {
                    m = m.add(&c);
                }
                m
            }
            PartitionMode::FeatureWise => self.global().gram_rows(),
        }
    }

    /// `M_i = X_i X_i^T` for a sample-wise split.
    pub fn local_covariances(&self) -> Result<Vec<DenseMatrix>> {
        if self.mode != PartitionMode::SampleWise {
            return Err(Error::ShapeMismatch(
                "local covariances need a sample-wise partition".into(),
            ));
        }
        Ok(self.shards.iter().map(DenseMatrix::gram_rows).collect())
    }
}

/// Near-even sizes: `total / parts`, with the first `total % parts` one larger.
pub fn even_split(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Contiguous near-even split of `x` by columns or rows.
pub fn partition(x: &DenseMatrix, mode: PartitionMode, node_count: usize, seed: u64) -> Result<PartitionedDataset> {
    let items = match mode {
        PartitionMode::SampleWise => x.cols(),
        PartitionMode::FeatureWise => x.rows(),
    };
    if node_count == 0 || items < node_count {
        return Err(Error::TooFewItems {
            items,
            nodes: node_count,
        });
    }
    let sizes = even_split(items, node_count);
    let shards = match mode {
        PartitionMode::FeatureWise => x.split_rows(&sizes)?,
        PartitionMode::SampleWise => {
            let mut start = 0;
            sizes
                .iter()
                .map(|&k| {
                    let b = x.col_block(start, k);
                    start += k;
                    b
                })
                .collect()
        }
    };
    Ok(PartitionedDataset {
        mode,
        shards,
        global_dims: x.shape(),
        seed,
    })
}

/// Sample-wise split after a seeded shuffle of the columns.
///
/// Column order does not affect `X X^T`, so the ground-truth subspace is the
/// same as for [`partition`].
pub fn partition_shuffled(x: &DenseMatrix, node_count: usize, seed: u64) -> Result<PartitionedDataset> {
    let mut order: Vec<usize> = (0..x.cols()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, order[j])]);
    partition(&shuffled, PartitionMode::SampleWise, node_count, seed)
}

/// Draws a synthetic dataset: covariance from `spec`, `n` Gaussian samples,
/// then a contiguous split. For a sample-wise split `n = per_node * nodes`;
/// for a feature-wise split every node sees all `per_node` samples.
pub fn synthetic_dataset(
    spec: &SpectrumSpec,
    samples_per_node: usize,
    nodes: usize,
    mode: PartitionMode,
    seed: u64,
    center: bool,
) -> Result<PartitionedDataset> {
    let (m, _) = make_covariance(spec, seed)?;
    let n = match mode {
        PartitionMode::SampleWise => samples_per_node * nodes,
        PartitionMode::FeatureWise => samples_per_node,
    };
    let mut x = sample_gaussian(&m, n, seed.wrapping_add(1))?;
    if center {
        x = center_columns(&x);
    }
    partition(&x, mode, nodes, seed)
}
