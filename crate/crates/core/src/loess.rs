//! Tricube-weighted local linear regression.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Local linear fit of `y` on `x` evaluated at each point of `at`.
///
/// Each fit uses the `q = ceil(span * n)` nearest observations (at least 3)
/// weighted by `(1 - (d / d_q)^3)^3`, where `d_q` is the distance to the
/// `q`-th nearest; for `span > 1`, `d_q` is scaled by `span`. Points where
/// the weighted design has no spread fall back to the weighted mean.
pub fn loess<T: Real>(x: &[T], y: &[T], span: f64, at: &[T]) -> Result<Vec<T>> {
    if x.len() != y.len() {
        return Err(Error::config("y", "length differs from x"));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::config("span", format!("must be positive, got {span}")));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} points for a local linear fit")));
    }
    let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.to_f64_lossy()).collect();
    let q = ((span * n as f64).ceil() as usize).clamp(3, n);
    let mut dist = vec![0.0; n];
    at.iter()
        .map(|&x0| {
            let x0 = x0.to_f64_lossy();
            for (d, &xi) in dist.iter_mut().zip(&xs) {
                *d = (xi - x0).abs();
            }
            let mut sorted = dist.clone();
            sorted.select_nth_unstable_by(q - 1, f64::total_cmp);
            let mut h = sorted[q - 1];
            if span > 1.0 {
                h *= span;
            }
            let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
            let weights: Vec<f64> = dist
                .iter()
                .map(|&d| {
                    if h <= 0.0 {
                        if d == 0.0 { 1.0 } else { 0.0 }
                    } else {
                        let u = d / h;
                        if u < 1.0 { (1.0 - u * u * u).powi(3) } else { 0.0 }
                    }
                })
                .collect();
            for ((&w, &xi), &yi) in weights.iter().zip(&xs).zip(&ys) {
                sw += w;
                sx += w * xi;
                sy += w * yi;
            }
            if sw <= 0.0 {
                return Err(Error::InsufficientData("no points inside the smoothing window".into()));
            }
            let (mx, my) = (sx / sw, sy / sw);
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for ((&w, &xi), &yi) in weights.iter().zip(&xs).zip(&ys) {
                sxx += w * (xi - mx) * (xi - mx);
                sxy += w * (xi - mx) * (yi - my);
            }
            let scale = weights
                .iter()
                .zip(&xs)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, xi)| (xi - mx).abs())
                .fold(0.0, f64::max);
            let fit = if sxx > 1e-12 * sw * scale * scale && scale > 0.0 {
                my + sxy / sxx * (x0 - mx)
            } else {
                my
            };
            Ok(T::of(fit))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn reproduces_a_line() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.25 * v - 3.0).collect();
        let fit = loess(&x, &y, 0.3, &x).unwrap();
        for (f, t) in fit.iter().zip(&y) {
            assert!((f - t).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_direct_weighted_least_squares() {
        let mut rng = rng_from(3);
        let x: Vec<f64> = (0..25).map(|i| i as f64 + 0.1 * f64::standard_normal(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 4.0).sin() + 0.1 * f64::standard_normal(&mut rng)).collect();
        let x0 = 11.3;
        let got = loess(&x, &y, 0.5, &[x0]).unwrap()[0];

        // normal equations for weighted a + b (x - x0), solved by Cramer's rule
        let mut d: Vec<f64> = x.iter().map(|v| (v - x0).abs()).collect();
        d.sort_by(f64::total_cmp);
        let h = d[12];
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(&y) {
            let u = (xi - x0).abs() / h;
            let w = if u < 1.0 { (1.0 - u.powi(3)).powi(3) } else { 0.0 };
            let z = xi - x0;
            s0 += w;
            s1 += w * z;
            s2 += w * z * z;
            t0 += w * yi;
            t1 += w * z * yi;
        }
        let a = (t0 * s2 - t1 * s1) / (s0 * s2 - s1 * s1);
        assert!((got - a).abs() < 1e-10);
    }

    #[test]
    fn constant_and_errors() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let fit = loess(&x, &vec![2.0; 10], 0.3, &x).unwrap();
        assert!(fit.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(loess(&x[..2], &x[..2], 0.3, &x).is_err());
        assert!(loess(&x, &x, 0.0, &x).is_err());
    }
}
