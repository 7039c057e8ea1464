//! Small dense linear-algebra helpers (SPD solves, orthonormalization).

use ndarray::{Array1, Array2};

use crate::num::Real;

/// Solve `A x = b` for symmetric positive-definite `A` via Cholesky.
///
/// Returns `None` when the factorization encounters a non-positive pivot.
pub fn solve_spd<T: Real>(a: &Array2<T>, b: &Array1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);

    // Lower-triangular factor, row-major.
    let mut l = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= T::zero() {
                    return None;
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }

    // Forward substitution L y = b.
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    // Back substitution L^T x = y.
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Some(x)
}

/// Orthonormalize the columns of `m` in place (modified Gram-Schmidt).
///
/// Panics if a column becomes numerically zero (rank deficiency), which a
/// randomly sampled matrix never produces.
pub fn orthonormalize_columns<T: Real>(m: &mut Array2<T>) {
    let cols = m.ncols();
    for j in 0..cols {
        for k in 0..j {
            let dot = m.column(j).dot(&m.column(k));
            let prev = m.column(k).to_owned();
            let mut col = m.column_mut(j);
            col.zip_mut_with(&prev, |x, &p| *x -= dot * p);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        assert!(
            norm > T::of(1e-12),
            "rank-deficient column during orthonormalization"
        );
        m.column_mut(j).mapv_inplace(|x| x / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spd_solve_matches_hand_inverse() {
        let a: Array2<f64> = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let x = solve_spd(&a, &b).unwrap();
        // inverse of [[4,1],[1,3]] = 1/11 [[3,-1],[-1,4]]
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a: Array2<f64> = array![[1.0, 2.0], [2.0, 1.0]]; // eigenvalues 3, -1
        let b = array![1.0, 1.0];
        assert!(solve_spd(&a, &b).is_none());
    }

    #[test]
    fn gram_schmidt_yields_orthonormal_columns() {
        let mut m = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin() + 0.1);
        orthonormalize_columns(&mut m);
        for i in 0..3 {
            for j in 0..3 {
                let dot = m.column(i).dot(&m.column(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12, "col {i}.{j} dot = {dot}");
            }
        }
    }
}
