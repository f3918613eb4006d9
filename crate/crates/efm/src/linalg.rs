//! Small dense solvers. Everything here is O(n^3) on matrices that stay tiny
//! (Gram matrices over a handful of anchors, normal equations in k+1 unknowns).

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{EfmError, Result};

/// Solves A X = B for symmetric positive definite A via Cholesky.
///
/// Fails when a pivot drops below `1e-12 * max_diag`, which callers treat as
/// "rank deficient" rather than attempting a pseudo-inverse.
pub fn cholesky_solve(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(EfmError::Input(format!("cholesky: matrix is {}x{}, not square", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(EfmError::Input(format!(
            "cholesky: rhs has {} rows, expected {}",
            b.nrows(),
            n
        )));
    }
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max);
    let floor = 1e-12 * max_diag.max(1e-300);

    // Lower-triangular factor, row-major.
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            if i == j {
                if s <= floor {
                    return Err(EfmError::IllPosed(format!(
                        "Cholesky pivot {:.3e} at row {} (matrix not positive definite)",
                        s, i
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }

    // Forward then backward substitution, one rhs column at a time.
    let m = b.ncols();
    let mut x = Array2::<f64>::zeros((n, m));
    for col in 0..m {
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = b[[i, col]];
            for p in 0..i {
                s -= l[[i, p]] * y[p];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= l[[p, i]] * x[[p, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Least squares min ||X beta - Y||_F via normal equations.
/// Returns Err when X'X is rank deficient; callers decide on a fallback.
pub fn least_squares(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != y.nrows() {
        return Err(EfmError::Input(format!(
            "least_squares: {} design rows vs {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    cholesky_solve(&xtx.view(), &xty.view())
}

/// Largest singular value by power iteration on A'A. Deterministic start.
pub fn spectral_norm(a: &ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..200 {
        let av = a.dot(&v);
        let atav = a.t().dot(&av);
        let norm = atav.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = atav / norm;
        sigma = norm.sqrt();
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.5], [0.6, 1.5, 3.0]];
        let x_true = array![[1.0], [-2.0], [0.5]];
        let b = a.dot(&x_true);
        let x = cholesky_solve(&a.view(), &b.view()).unwrap();
        for i in 0..3 {
            assert!((x[[i, 0]] - x_true[[i, 0]]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![[1.0], [1.0]];
        assert!(cholesky_solve(&a.view(), &b.view()).is_err());
    }

    #[test]
    fn least_squares_recovers_affine_map() {
        // y = 2*x1 - x2 + 3, exactly representable.
        let x = array![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let y = array![[3.0], [5.0], [2.0], [4.0]];
        let beta = least_squares(&x.view(), &y.view()).unwrap();
        assert!((beta[[0, 0]] - 2.0).abs() < 1e-10);
        assert!((beta[[1, 0]] + 1.0).abs() < 1e-10);
        assert!((beta[[2, 0]] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, -7.0]];
        assert!((spectral_norm(&a.view()) - 7.0).abs() < 1e-9);
    }
}
