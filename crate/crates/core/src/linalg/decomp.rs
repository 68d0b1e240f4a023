use crate::{Error, Result};

use super::{DenseMatrix, OrthonormalBasis, Tolerances};

/// Thin Householder QR of a `d x r` matrix with `d >= r`.
///
/// The diagonal of `R` is made strictly positive, which fixes `Q` uniquely.
pub fn qr_factor(v: &DenseMatrix) -> Result<(OrthonormalBasis, DenseMatrix)> {
    qr_factor_with(v, &Tolerances::default())
}

pub fn qr_factor_with(v: &DenseMatrix, tol: &Tolerances) -> Result<(OrthonormalBasis, DenseMatrix)> {
    let (d, r) = v.shape();
    if d < r {
        return Err(Error::DimensionMismatch(format!("QR needs rows >= cols, got {d}x{r}")));
    }
    let scale = v.frobenius_norm();
    let mut a = v.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);

    for k in 0..r {
        let x: Vec<f64> = (k..d).map(|i| a[(i, k)]).collect();
        let norm_x = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm_x <= tol.rank * scale || norm_x == 0.0 {
            return Err(Error::RankDeficient { column: k });
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        let mut u = x;
        u[0] -= alpha;
        let norm_u = u.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in u.iter_mut() {
            *t /= norm_u;
        }
        apply_reflector(&mut a, &u, k, k..r);
        reflectors.push(u);
    }

    let mut q = DenseMatrix::from_fn(d, r, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, u) in reflectors.iter().enumerate().rev() {
        apply_reflector(&mut q, u, k, 0..r);
    }

    let mut r_upper = DenseMatrix::from_fn(r, r, |i, j| if j >= i { a[(i, j)] } else { 0.0 });
    for k in 0..r {
        if r_upper[(k, k)] < 0.0 {
            for j in k..r {
                r_upper[(k, j)] = -r_upper[(k, j)];
            }
            for i in 0..d {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok((OrthonormalBasis::new_unchecked(q), r_upper))
}

/// Applies `I - 2uu^T` (acting on rows `offset..`) to the given columns.
fn apply_reflector(a: &mut DenseMatrix, u: &[f64], offset: usize, cols: std::ops::Range<usize>) {
    for j in cols {
        let dot: f64 = u.iter().enumerate().map(|(i, ui)| ui * a[(offset + i, j)]).sum();
        if dot == 0.0 {
            continue;
        }
        for (i, ui) in u.iter().enumerate() {
            a[(offset + i, j)] -= 2.0 * dot * ui;
        }
    }
}

/// Upper-triangular Cholesky factor `R` with `R^T R = k`.
pub fn cholesky(k: &DenseMatrix) -> Result<DenseMatrix> {
    cholesky_with(k, &Tolerances::default())
}

pub fn cholesky_with(k: &DenseMatrix, tol: &Tolerances) -> Result<DenseMatrix> {
    let (n, m) = k.shape();
    if n != m {
        return Err(Error::DimensionMismatch(format!("Cholesky of a {n}x{m} matrix")));
    }
    let asymmetry = k.relative_asymmetry();
    if asymmetry > tol.cholesky_symmetry {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let floor = tol.pivot * k.trace();
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let s = k[(j, j)] - (0..j).map(|p| r[(p, j)] * r[(p, j)]).sum::<f64>();
        if s <= floor || s <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: s });
        }
        let d = s.sqrt();
        r[(j, j)] = d;
        for i in j + 1..n {
            let s = k[(j, i)] - (0..j).map(|p| r[(p, j)] * r[(p, i)]).sum::<f64>();
            r[(j, i)] = s / d;
        }
    }
    Ok(r)
}

/// Solves `X R = B` for `X` with `R` upper triangular (row-wise forward
/// substitution), i.e. `X = B R^{-1}`.
pub fn solve_upper_right(b: &DenseMatrix, r: &DenseMatrix) -> DenseMatrix {
    let n = r.rows();
    assert_eq!(r.cols(), n);
    assert_eq!(b.cols(), n);
    let mut x = DenseMatrix::zeros(b.rows(), n);
    for row in 0..b.rows() {
        for j in 0..n {
            let s = b[(row, j)] - (0..j).map(|k| x[(row, k)] * r[(k, j)]).sum::<f64>();
            x[(row, j)] = s / r[(j, j)];
        }
    }
    x
}

pub fn upper_inverse(r: &DenseMatrix) -> DenseMatrix {
    solve_upper_right(&DenseMatrix::identity(r.rows()), r)
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: OrthonormalBasis,
}

impl SymEig {
    /// The leading `r` eigenvectors.
    pub fn top(&self, r: usize) -> OrthonormalBasis {
        OrthonormalBasis::new_unchecked(self.vectors.matrix().col_block(0, r))
    }
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(m: &DenseMatrix) -> Result<SymEig> {
    sym_eig_with(m, &Tolerances::default())
}

pub fn sym_eig_with(m: &DenseMatrix, tol: &Tolerances) -> Result<SymEig> {
    let (n, c) = m.shape();
    if n != c {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {n}x{c} matrix"
        )));
    }
    let asymmetry = m.relative_asymmetry();
    if asymmetry > tol.eig_symmetry {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v = DenseMatrix::identity(n);
    let total = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off == 0.0 || off.sqrt() <= 1e-17 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                rotate_columns(&mut a, p, q, cos, sin);
                rotate_rows(&mut a, p, q, cos, sin);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, cos, sin);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEig {
        values,
        vectors: OrthonormalBasis::new_unchecked(vectors),
    })
}

fn rotate_columns(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.rows() {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
}

fn rotate_rows(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.cols() {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Classical Gram-Schmidt, only used as an independent reference.
    fn gram_schmidt(v: &DenseMatrix) -> DenseMatrix {
        let (d, r) = v.shape();
        let mut q = DenseMatrix::zeros(d, r);
        for j in 0..r {
            let mut col = v.column(j);
            for k in 0..j {
                let qk = q.column(k);
                let dot: f64 = qk.iter().zip(&v.column(j)).map(|(a, b)| a * b).sum();
                for (c, x) in col.iter_mut().zip(&qk) {
                    *c -= dot * x;
                }
            }
            let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            q.set_column(j, &col.iter().map(|x| x / n).collect::<Vec<_>>());
        }
        q
    }

    #[test]
    fn qr_identity_columns() {
        let v = DenseMatrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let (q, r) = qr_factor(&v).unwrap();
        assert!(q.matrix().sub(&v).frobenius_norm() < 1e-15);
        assert!(r.sub(&DenseMatrix::identity(2)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn qr_hand_example() {
        let v = DenseMatrix::from_rows(&[[3.0, 0.0], [4.0, 0.0], [0.0, 5.0]]).unwrap();
        let (q, r) = qr_factor(&v).unwrap();
        let first = q.matrix().column(0);
        for (a, b) in first.iter().zip([0.6, 0.8, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((r[(1, 1)] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn qr_matches_gram_schmidt_reference() {
        let v = pseudo_random(6, 3, 7);
        let (q, r) = qr_factor(&v).unwrap();
        assert!(q.matrix().matmul(&r).sub(&v).frobenius_norm() <= 1e-10 * v.frobenius_norm());
        assert!(q.matrix().sub(&gram_schmidt(&v)).frobenius_norm() < 1e-12);
        for k in 0..3 {
            assert!(r[(k, k)] > 0.0);
        }
    }

    #[test]
    fn qr_errors() {
        let wide = DenseMatrix::zeros(2, 3);
        assert!(matches!(qr_factor(&wide), Err(Error::DimensionMismatch(_))));
        let dependent = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(qr_factor(&dependent), Err(Error::RankDeficient { column: 1 })));
        assert!(matches!(
            qr_factor(&DenseMatrix::zeros(3, 1)),
            Err(Error::RankDeficient { column: 0 })
        ));
    }

    #[test]
    fn cholesky_examples() {
        let r = cholesky(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(r, DenseMatrix::identity(2));
        let k = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]]).unwrap();
        let r = cholesky(&k).unwrap();
        let expected = DenseMatrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]).unwrap();
        assert!(r.sub(&expected).frobenius_norm() < 1e-15);
        assert!(r.t_matmul(&r).sub(&k).frobenius_norm() < 1e-14);
        let indefinite = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&indefinite),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        let skew = DenseMatrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(matches!(cholesky(&skew), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eig_examples() {
        let e = sym_eig(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-15);

        let e = sym_eig(&DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);

        let bad = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&bad), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eig_residual_on_random_symmetric() {
        let a = pseudo_random(8, 8, 3);
        let m = a.add(&a.transpose());
        let e = sym_eig(&m).unwrap();
        let norm2 = e.values.iter().fold(0.0f64, |x, v| x.max(v.abs()));
        let vecs = e.vectors.matrix();
        for (i, lambda) in e.values.iter().enumerate() {
            let col = DenseMatrix::new(8, 1, vecs.column(i)).unwrap();
            let resid = m.matmul(&col).sub(&col.scale(*lambda)).frobenius_norm();
            assert!(resid <= 1e-8 * norm2, "pair {i}: {resid}");
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let trace_err = (e.values.iter().sum::<f64>() - m.trace()).abs();
        assert!(trace_err <= 1e-8 * m.frobenius_norm());
        assert!(vecs.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn triangular_solve_inverts() {
        let r = DenseMatrix::from_rows(&[[2.0, 1.0, -1.0], [0.0, 3.0, 0.5], [0.0, 0.0, 1.5]]).unwrap();
        let inv = upper_inverse(&r);
        assert!(inv.matmul(&r).sub(&DenseMatrix::identity(3)).frobenius_norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn qr_reconstructs_and_is_orthonormal(seed in 0u64..10_000, d in 3usize..9, r in 1usize..4) {
            let v = pseudo_random(d, r, seed);
            let (q, rr) = qr_factor(&v).unwrap();
            prop_assert!(q.matrix().orthonormality_defect() <= 1e-10);
            prop_assert!(q.matrix().matmul(&rr).sub(&v).frobenius_norm() <= 1e-10 * v.frobenius_norm());
            // Uniqueness under the positive-diagonal convention.
            let (q2, _) = qr_factor(&q.matrix().matmul(&rr)).unwrap();
            prop_assert!(q2.matrix().sub(q.matrix()).frobenius_norm() < 1e-10);
        }

        #[test]
        fn cholesky_inverts_gram(seed in 0u64..10_000, n in 1usize..6) {
            let mut r = pseudo_random(n, n, seed);
            for i in 0..n {
                for j in 0..i {
                    r[(i, j)] = 0.0;
                }
                r[(i, i)] = r[(i, i)].abs() + 0.5;
            }
            let k = r.t_matmul(&r);
            let back = cholesky(&k).unwrap();
            prop_assert!(back.sub(&r).frobenius_norm() <= 1e-10 * r.frobenius_norm());
        }

        #[test]
        fn eig_trace_and_orthonormality(seed in 0u64..10_000, n in 2usize..10) {
            let a = pseudo_random(n, n, seed);
            let m = a.add(&a.transpose());
            let e = sym_eig(&m).unwrap();
            let tr = e.values.iter().sum::<f64>();
            prop_assert!((tr - m.trace()).abs() <= 1e-8 * m.frobenius_norm().max(1.0));
            prop_assert!(e.vectors.matrix().orthonormality_defect() <= 1e-8);
        }
    }
}
