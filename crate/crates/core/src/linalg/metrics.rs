use crate::{Error, Result};

use super::{sym_eig, DenseMatrix, OrthonormalBasis};

fn check_same_shape(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<()> {
    if a.matrix().shape() != b.matrix().shape() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces {:?} vs {:?}",
            a.matrix().shape(),
            b.matrix().shape()
        )));
    }
    Ok(())
}

/// Mean squared sine of the principal angles between two `r`-dimensional
/// subspaces: `(1/r) * sum(1 - sigma_i^2(Q^T Qhat))`.
pub fn subspace_error(q_true: &OrthonormalBasis, q_hat: &OrthonormalBasis) -> Result<f64> {
    check_same_shape(q_true, q_hat)?;
    let r = q_true.rank();
    if r == 0 {
        return Ok(0.0);
    }
    let c = q_true.matrix().t_matmul(q_hat.matrix());
    // sigma_i^2 are the eigenvalues of C C^T.
    let cosines_sq = sym_eig(&c.gram_rows())?.values;
    let e = cosines_sq.iter().map(|s| 1.0 - s).sum::<f64>() / r as f64;
    Ok(e.clamp(0.0, 1.0))
}

/// `||Q Q^T - Qhat Qhat^T||_2`, the sine of the largest principal angle.
///
/// Evaluated as `||(I - Q Q^T) Qhat||_2`, which equals the projector
/// distance for subspaces of equal dimension and avoids forming `d x d`
/// matrices.
pub fn projection_distance(q_true: &OrthonormalBasis, q_hat: &OrthonormalBasis) -> Result<f64> {
    check_same_shape(q_true, q_hat)?;
    if q_true.rank() == 0 {
        return Ok(0.0);
    }
    let q = q_true.matrix();
    let qh = q_hat.matrix();
    let resid = qh.sub(&q.matmul(&q.t_matmul(qh)));
    let top = sym_eig(&resid.t_matmul(&resid))?.values[0];
    Ok(top.max(0.0).sqrt().min(1.0))
}

/// Gram matrices up to this size are diagonalised directly.
const DIRECT_GRAM_LIMIT: usize = 128;
const POWER_MAX_ITERS: usize = 200_000;

/// Largest singular value.
///
/// Works on the smaller Gram matrix (`M^T M` or `M M^T`): small ones are
/// diagonalised with the Jacobi solver, larger ones use power iteration from
/// a fixed start vector.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.max_abs() == 0.0 || m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = if m.cols() <= m.rows() {
        m.t_matmul(m)
    } else {
        m.gram_rows()
    };
    let top = if gram.rows() <= DIRECT_GRAM_LIMIT {
        sym_eig(&gram).map(|e| e.values[0]).unwrap_or_else(|_| power_top(&gram))
    } else {
        power_top(&gram)
    };
    top.max(0.0).sqrt()
}

/// Dominant eigenvalue of a PSD matrix by power iteration (Rayleigh quotient).
fn power_top(g: &DenseMatrix) -> f64 {
    let n = g.rows();
    // Deterministic, generically non-orthogonal start vector.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i + 1) as f64).sin()).collect();
    normalize(&mut x);
    let mut last = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = matvec(g, &x);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        x = y;
        if normalize(&mut x) == 0.0 {
            return 0.0;
        }
        if (rq - last).abs() <= 1e-15 * rq.abs() {
            return rq;
        }
        last = rq;
    }
    last
}

fn matvec(g: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..g.rows())
        .map(|i| g.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr_factor;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn basis(rows: &[&[f64]]) -> OrthonormalBasis {
        OrthonormalBasis::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_basis(d: usize, r: usize, seed: u64) -> OrthonormalBasis {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
        qr_factor(&g).unwrap().0
    }

    /// Dense projector route: spectral norm of the d x d difference.
    fn projector_oracle(a: &OrthonormalBasis, b: &OrthonormalBasis) -> f64 {
        let pa = a.matrix().gram_rows();
        let pb = b.matrix().gram_rows();
        let e = sym_eig(&pa.sub(&pb)).unwrap();
        e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn subspace_error_examples() {
        let q = OrthonormalBasis::canonical(4, 2);
        assert_eq!(subspace_error(&q, &q).unwrap(), 0.0);

        let complement = basis(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert!((subspace_error(&q, &complement).unwrap() - 1.0).abs() < 1e-15);

        let theta = PI / 6.0;
        let e1 = basis(&[&[1.0], &[0.0]]);
        let rot = basis(&[&[theta.cos()], &[theta.sin()]]);
        assert!((subspace_error(&e1, &rot).unwrap() - 0.25).abs() < 1e-15);
        assert!((projection_distance(&e1, &rot).unwrap() - 0.5).abs() < 1e-15);
        assert!((projection_distance(&q, &complement).unwrap() - 1.0).abs() < 1e-15);
        assert!(projection_distance(&q, &q).unwrap() < 1e-15);

        let other = OrthonormalBasis::canonical(4, 1);
        assert!(matches!(subspace_error(&q, &other), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            projection_distance(&q, &other),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&DenseMatrix::diag(&[2.0, -5.0])) - 5.0).abs() < 1e-14);
        let nil = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&nil) - 1.0).abs() < 1e-15);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn power_route_matches_direct_route() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = DenseMatrix::from_fn(30, 30, |_, _| rng.random_range(-1.0..1.0));
        let g = a.t_matmul(&a);
        let direct = sym_eig(&g).unwrap().values[0];
        assert!((power_top(&g) - direct).abs() <= 1e-10 * direct);
        // Wide input exercises the M M^T branch and the power path.
        let wide = DenseMatrix::from_fn(140, 300, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let direct = sym_eig(&wide.gram_rows()).unwrap().values[0].sqrt();
        assert!((spectral_norm(&wide) - direct).abs() <= 1e-10 * direct);
    }

    proptest! {
        #[test]
        fn basis_rotation_invariance(seed in 0u64..5_000, d in 4usize..9, r in 1usize..4) {
            let q = random_basis(d, r, seed);
            let qh = random_basis(d, r, seed + 77_777);
            let rot = random_basis(r, r, seed + 1);
            let rotated = OrthonormalBasis::new(qh.matrix().matmul(rot.matrix())).unwrap();
            let e1 = subspace_error(&q, &qh).unwrap();
            let e2 = subspace_error(&q, &rotated).unwrap();
            let e3 = subspace_error(&OrthonormalBasis::new(q.matrix().matmul(rot.matrix())).unwrap(), &qh).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-12);
            prop_assert!((e1 - e3).abs() <= 1e-12);
        }

        #[test]
        fn projection_distance_brackets_mean_error(seed in 0u64..5_000, d in 4usize..9, r in 1usize..4) {
            let q = random_basis(d, r, seed);
            let qh = random_basis(d, r, seed + 99);
            let e = subspace_error(&q, &qh).unwrap();
            let p = projection_distance(&q, &qh).unwrap();
            prop_assert!(e <= p * p + 1e-12);
            prop_assert!(p * p <= r as f64 * e + 1e-12);
            prop_assert!((p - projector_oracle(&q, &qh)).abs() <= 1e-10);
        }

        #[test]
        fn column_sign_flips_do_not_change_error(seed in 0u64..5_000, flips in 0u8..8) {
            let q = random_basis(6, 3, seed);
            let qh = random_basis(6, 3, seed + 5);
            let mut flipped = qh.matrix().clone();
            for j in 0..3 {
                if flips & (1 << j) != 0 {
                    let col: Vec<f64> = flipped.column(j).iter().map(|v| -v).collect();
                    flipped.set_column(j, &col);
                }
            }
            let flipped = OrthonormalBasis::new(flipped).unwrap();
            let a = subspace_error(&q, &qh).unwrap();
            let b = subspace_error(&q, &flipped).unwrap();
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }
}
