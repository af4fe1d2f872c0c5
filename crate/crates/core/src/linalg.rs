//! Numerical rank, kernels and subspace arithmetic for the small dense
//! matrices that show up fiberwise (a handful of rows and columns).

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold: pivots below `1e-9 × largest pivot` count as zero.
pub const RANK_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct RankKernel {
    pub rank: usize,
    /// Orthonormal basis of the numerical kernel.
    pub kernel: Vec<DVector<f64>>,
    /// Absolute pivot threshold that was applied.
    pub threshold: f64,
}

/// Rank and kernel by Gauss-Jordan elimination with full (row and column)
/// pivoting.
pub fn rank_kernel(m: &DMatrix<f64>, relative_tolerance: f64) -> RankKernel {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut threshold = 0.0;
    let mut rank = 0;

    for step in 0..rows.min(cols) {
        let mut best = (step, step, 0.0_f64);
        for i in step..rows {
            for j in step..cols {
                let v = a[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if step == 0 {
            threshold = relative_tolerance * best.2;
        }
        if best.2 == 0.0 || best.2 <= threshold {
            break;
        }
        a.swap_rows(step, best.0);
        a.swap_columns(step, best.1);
        perm.swap(step, best.1);

        let pivot = a[(step, step)];
        for j in step..cols {
            a[(step, j)] /= pivot;
        }
        for i in 0..rows {
            if i != step {
                let factor = a[(i, step)];
                if factor != 0.0 {
                    for j in step..cols {
                        a[(i, j)] -= factor * a[(step, j)];
                    }
                }
            }
        }
        rank += 1;
    }

    // Reduced form in permuted columns is [I F; 0 0]; each free column f gives
    // the kernel vector e_f − Σ_i F[i, f] e_i.
    let raw: Vec<DVector<f64>> = (rank..cols)
        .map(|free| {
            let mut v = DVector::zeros(cols);
            v[perm[free]] = 1.0;
            for i in 0..rank {
                v[perm[i]] = -a[(i, free)];
            }
            v
        })
        .collect();
    let kernel = orthonormal_basis(&raw, relative_tolerance);
    debug_assert_eq!(kernel.len(), cols - rank);
    RankKernel { rank, kernel, threshold }
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    rank_kernel(m, RANK_RELATIVE_TOLERANCE).rank
}

/// Orthonormal basis of the span of `vectors` by twice-iterated modified
/// Gram-Schmidt. A vector is dropped when its residual falls below
/// `relative_tolerance × (largest input norm)`.
pub fn orthonormal_basis(vectors: &[DVector<f64>], relative_tolerance: f64) -> Vec<DVector<f64>> {
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let cutoff = relative_tolerance * scale;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let norm = w.norm();
        if norm > cutoff {
            basis.push(w / norm);
        }
    }
    basis
}

pub fn span_dim(vectors: &[DVector<f64>]) -> usize {
    orthonormal_basis(vectors, RANK_RELATIVE_TOLERANCE).len()
}

pub fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Inverse of a square matrix, or `None` when it is numerically singular.
pub fn checked_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !m.is_square() || rank(m) < m.nrows() {
        return None;
    }
    m.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_zero() {
        let id = rank_kernel(&DMatrix::identity(2, 2), RANK_RELATIVE_TOLERANCE);
        assert_eq!(id.rank, 2);
        assert!(id.kernel.is_empty());
        let z = rank_kernel(&DMatrix::zeros(2, 2), RANK_RELATIVE_TOLERANCE);
        assert_eq!(z.rank, 0);
        assert_eq!(z.kernel.len(), 2);
    }

    #[test]
    fn rank_deficient_kernel_is_annihilated() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
        let rk = rank_kernel(&m, RANK_RELATIVE_TOLERANCE);
        assert_eq!(rk.rank, 2);
        assert_eq!(rk.kernel.len(), 1);
        assert!((&m * &rk.kernel[0]).amax() < 1e-12);
    }

    #[test]
    fn wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        let rk = rank_kernel(&m, RANK_RELATIVE_TOLERANCE);
        assert_eq!(rk.rank, 1);
        assert_eq!(rk.kernel.len(), 2);
        for v in &rk.kernel {
            assert!(v[2].abs() < 1e-15);
        }
    }

    #[test]
    fn singular_inverse() {
        assert!(checked_inverse(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).is_none());
        let inv = checked_inverse(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        assert_eq!(inv[(1, 1)], 0.25);
    }

    proptest! {
        #[test]
        fn rank_nullity(rows in 1usize..5, cols in 1usize..5, inner in 1usize..4, seed in any::<u64>()) {
            // Product of random rows×inner and inner×cols factors has rank min(rows, cols, inner).
            let mut rng = crate::sampling::seeded_rng(seed);
            let a = DMatrix::from_vec(rows, inner, crate::sampling::uniform_vector(rows * inner, 1.0, &mut rng));
            let b = DMatrix::from_vec(inner, cols, crate::sampling::uniform_vector(inner * cols, 1.0, &mut rng));
            let m = a * b;
            let rk = rank_kernel(&m, RANK_RELATIVE_TOLERANCE);
            prop_assert_eq!(rk.rank + rk.kernel.len(), cols);
            prop_assert_eq!(rk.rank, rows.min(cols).min(inner));
            for v in &rk.kernel {
                prop_assert!((&m * v).amax() < 1e-9);
            }
        }
    }
}
