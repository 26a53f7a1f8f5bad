//! Small dense helpers on top of nalgebra: column selection, SVD-based
//! pseudoinverse with a relative cutoff, numerical rank, power iteration.

use nalgebra::{DMatrix, DVector};

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])])
}

/// Moore-Penrose pseudoinverse via the SVD, together with the numerical rank.
pub fn pseudoinverse(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(n, m), 0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = RANK_TOL * sigma_max;
    let mut out = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        rank += 1;
        let v = v_t.row(k).transpose();
        out.ger(1.0 / sigma, &v, &u.column(k), 1.0);
    }
    (out, rank)
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

/// Numerical rank with the relative cutoff [`RANK_TOL`].
pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = singular_values(a);
    if sv.is_empty() {
        return 0;
    }
    let cutoff = RANK_TOL * sv.max();
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Estimates `||a||_2^2` by power iteration on `a^T a`.
pub fn spectral_norm_sq(a: &DMatrix<f64>, max_iters: usize, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic start with no exact zero components
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= tol * next.abs() {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate
}

/// `sqrt(sum of squares)` of a sequence, accumulated in order.
pub fn l2(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_full_column_rank_is_left_inverse() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let (p, r) = pseudoinverse(&a);
        assert_eq!(r, 2);
        let eye = &p * &a;
        assert!((eye - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_detects_rank_deficiency() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let (p, r) = pseudoinverse(&a);
        assert_eq!(r, 1);
        // Penrose identity A A+ A = A
        assert!((&a * &p * &a - &a).norm() < 1e-12);
    }

    #[test]
    fn empty_matrices() {
        let a = DMatrix::<f64>::zeros(4, 0);
        let (p, r) = pseudoinverse(&a);
        assert_eq!(p.shape(), (0, 4));
        assert_eq!(r, 0);
        assert_eq!(rank(&a), 0);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let a = DMatrix::from_row_slice(2, 3, &[3.0, 1.0, 0.0, -1.0, 2.0, 4.0]);
        let exact = singular_values(&a).max().powi(2);
        let est = spectral_norm_sq(&a, 500, 1e-14);
        assert!((est - exact).abs() < 1e-9 * exact);
    }
}
