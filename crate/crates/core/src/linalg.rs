//! Small dense kernels: Householder least squares and a pivoted inverse.

use crate::scalar::Real;

/// Result of a least-squares solve `y ~ X b`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    pub coef: Vec<T>,
    /// Residual sum of squares.
    pub sse: T,
    /// Diagonal of `(X'X)^-1`, for standard errors.
    pub xtx_inv_diag: Vec<T>,
}

/// Solve least squares by Householder QR. `columns` are the design columns
/// (include a column of ones for an intercept). Returns `None` when the design
/// is numerically rank deficient or has more columns than rows.
pub fn least_squares<T: Real>(columns: &[&[T]], y: &[T]) -> Option<LeastSquares<T>> {
    let n = y.len();
    let p = columns.len();
    if p > n {
        return None;
    }
    let mut a: Vec<Vec<T>> = columns
        .iter()
        .map(|c| {
            debug_assert_eq!(c.len(), n);
            c.to_vec()
        })
        .collect();
    let col_norms: Vec<T> = a.iter().map(|c| norm(c)).collect();
    let mut b = y.to_vec();
    let tol = T::epsilon().sqrt();
    let mut diag = vec![T::zero(); p];

    for k in 0..p {
        let x = &a[k][k..];
        let nrm = norm(x);
        if nrm <= tol * col_norms[k] || nrm == T::zero() {
            return None;
        }
        let alpha = if a[k][k] > T::zero() { -nrm } else { nrm };
        // v = x - alpha e1
        let mut v: Vec<T> = x.to_vec();
        v[0] = v[0] - alpha;
        let vtv: T = v.iter().map(|&e| e * e).sum();
        if vtv == T::zero() {
            diag[k] = alpha;
            continue;
        }
        let two = T::of(2.0);
        for col in a.iter_mut().skip(k + 1) {
            reflect(&v, vtv, two, &mut col[k..]);
        }
        reflect(&v, vtv, two, &mut b[k..]);
        diag[k] = alpha;
        a[k][k] = alpha;
        for e in a[k][k + 1..].iter_mut() {
            *e = T::zero();
        }
    }
    // after the loop column j holds R[..=j, j] in its first rows
    let r = |i: usize, j: usize| if i == j { diag[j] } else { a[j][i] };

    let mut coef = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in (i + 1)..p {
            s = s - r(i, j) * coef[j];
        }
        coef[i] = s / r(i, i);
    }
    let sse: T = b[p..].iter().map(|&e| e * e).sum();

    // R^-1 is upper triangular; (X'X)^-1 = R^-1 R^-T
    let mut rinv = vec![vec![T::zero(); p]; p];
    for j in 0..p {
        rinv[j][j] = T::one() / r(j, j);
        for i in (0..j).rev() {
            let mut s = T::zero();
            for k in (i + 1)..=j {
                s = s + r(i, k) * rinv[k][j];
            }
            rinv[i][j] = -s / r(i, i);
        }
    }
    let xtx_inv_diag = (0..p)
        .map(|i| (i..p).map(|j| rinv[i][j] * rinv[i][j]).sum())
        .collect();

    Some(LeastSquares {
        coef,
        sse,
        xtx_inv_diag,
    })
}

#[inline]
fn reflect<T: Real>(v: &[T], vtv: T, two: T, x: &mut [T]) {
    let dot: T = v.iter().zip(x.iter()).map(|(&a, &b)| a * b).sum();
    let f = two * dot / vtv;
    for (xi, &vi) in x.iter_mut().zip(v) {
        *xi = *xi - f * vi;
    }
}

fn norm<T: Real>(x: &[T]) -> T {
    // scaled to avoid overflow on large raw values
    let scale = x.iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s: T = x.iter().map(|&e| (e / scale) * (e / scale)).sum();
    scale * s.sqrt()
}

/// Inverse of a square matrix by Gauss-Jordan with partial pivoting.
/// `None` when a pivot falls below `1e-12` relative to the largest entry.
pub fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line() {
        let ones = [1.0; 4];
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let ls = least_squares(&[&ones, &x], &y).unwrap();
        assert_relative_eq!(ls.coef[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ls.coef[1], 2.0, epsilon = 1e-12);
        assert!(ls.sse < 1e-20);
        // (X'X)^-1 for x = 1..4: [[1.5, -0.5], [-0.5, 0.2]]
        assert_relative_eq!(ls.xtx_inv_diag[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(ls.xtx_inv_diag[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        let ones = [1.0; 6];
        let x1 = [0.3, -1.2, 2.2, 0.7, -0.4, 1.9];
        let x2 = [1.0, 0.5, -0.3, 2.2, 1.1, -0.8];
        let y = [1.2, -0.7, 3.1, 2.9, 0.1, 1.0];
        let ls = least_squares(&[&ones, &x1, &x2], &y).unwrap();
        // residuals orthogonal to every column
        for c in [&ones[..], &x1[..], &x2[..]] {
            let r: f64 = (0..6)
                .map(|i| (y[i] - ls.coef[0] - ls.coef[1] * x1[i] - ls.coef[2] * x2[i]) * c[i])
                .sum();
            assert!(r.abs() < 1e-12);
        }
        let sse: f64 = (0..6)
            .map(|i| (y[i] - ls.coef[0] - ls.coef[1] * x1[i] - ls.coef[2] * x2[i]).powi(2))
            .sum();
        assert_relative_eq!(ls.sse, sse, epsilon = 1e-12);
    }

    #[test]
    fn collinear_is_rejected() {
        let ones = [1.0; 4];
        let x = [1.0, 2.0, 3.0, 4.0];
        let x2 = [2.0, 4.0, 6.0, 8.0];
        assert!(least_squares(&[&ones, &x, &x2], &[1.0, 0.0, 1.0, 0.0]).is_none());
        let c = [5.0; 4];
        assert!(least_squares(&[&ones, &c], &[1.0, 0.0, 1.0, 0.0]).is_none());
    }

    #[test]
    fn works_in_f32() {
        let ones = [1.0f32; 4];
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let y = [2.0f32, 4.0, 6.0, 8.0];
        let ls = least_squares(&[&ones, &x], &y).unwrap();
        assert!((ls.coef[1] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn inverse() {
        let m = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let inv = invert(&m).unwrap();
        assert_relative_eq!(inv[0][0], 3.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(inv[0][1], -1.0 / 11.0, epsilon = 1e-14);
        assert!(invert(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }
}
