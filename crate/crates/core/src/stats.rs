//! Distribution tails, quantiles, and ordinary least squares with classical
//! inference.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::gamma_ur};

use crate::linalg::least_squares;
use crate::scalar::Real;

/// Two-sided p-value of a Student t statistic: `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Upper `1 - alpha/2` quantile of Student t with `df` degrees of freedom.
pub fn t_quantile_two_sided(alpha: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n-1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi || sorted[hi] == sorted[lo] {
        return sorted[lo];
    }
    if sorted[hi].is_infinite() {
        return if h > lo as f64 { sorted[hi] } else { sorted[lo] };
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// Logarithm applied before modeling skewed counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogPolicy {
    /// `ln(1 + x)`, defined at 0.
    #[default]
    Log1p,
    /// `ln(x)`, rejecting values that are not strictly positive.
    StrictLog,
}

impl LogPolicy {
    pub fn apply(self, x: f64, variable: &str) -> crate::Result<f64> {
        match self {
            LogPolicy::Log1p if x > -1.0 => Ok(x.ln_1p()),
            LogPolicy::StrictLog if x > 0.0 => Ok(x.ln()),
            _ => Err(crate::Error::NonPositiveValue {
                variable: variable.to_string(),
                value: x,
            }),
        }
    }
}

pub fn mean<T: Real>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::of_usize(x.len())
}

/// Sample variance with denominator `n - 1`.
pub fn sample_variance<T: Real>(x: &[T]) -> T {
    let m = mean(x);
    x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::of_usize(x.len() - 1)
}

/// OLS fit with intercept. Vectors are ordered intercept first, then the
/// predictors in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    /// Unbiased residual variance, SSE / (n - p - 1).
    pub sigma2: f64,
    pub sse: f64,
    pub df_resid: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlsError {
    /// Need `n > p + 1` rows.
    TooFewRows { needed: usize, got: usize },
    RankDeficient,
}

/// Ordinary least squares of `y` on `predictors` plus an intercept, with
/// t-based inference on `n - p - 1` degrees of freedom.
pub fn ols<T: Real>(y: &[T], predictors: &[&[T]]) -> Result<OlsFit, OlsError> {
    let n = y.len();
    let p = predictors.len();
    if n <= p + 1 {
        return Err(OlsError::TooFewRows {
            needed: p + 2,
            got: n,
        });
    }
    let ones = vec![T::one(); n];
    let mut cols: Vec<&[T]> = Vec::with_capacity(p + 1);
    cols.push(&ones);
    cols.extend_from_slice(predictors);
    let ls = least_squares(&cols, y).ok_or(OlsError::RankDeficient)?;

    let df = n - p - 1;
    let sse = ls.sse.to_f64_lossy();
    let sigma2 = sse / df as f64;
    let ybar = mean(y).to_f64_lossy();
    let sst: f64 = y
        .iter()
        .map(|&v| (v.to_f64_lossy() - ybar).powi(2))
        .sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / df as f64;

    let coefficients: Vec<f64> = ls.coef.iter().map(|c| c.to_f64_lossy()).collect();
    let std_errors: Vec<f64> = ls
        .xtx_inv_diag
        .iter()
        .map(|d| (sigma2 * d.to_f64_lossy()).sqrt())
        .collect();
    let t_values: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(&c, &s)| c / s)
        .collect();
    let p_values = t_values
        .iter()
        .map(|&t| t_two_sided_p(t, df as f64))
        .collect();

    Ok(OlsFit {
        coefficients,
        std_errors,
        t_values,
        p_values,
        r2,
        adj_r2,
        sigma2,
        sse,
        df_resid: df,
        n,
    })
}

impl OlsFit {
    /// Two-sided confidence interval for coefficient `j` (0 = intercept).
    pub fn confidence_interval(&self, j: usize, level: f64) -> (f64, f64) {
        let q = t_quantile_two_sided(1.0 - level, self.df_resid as f64);
        let c = self.coefficients[j];
        let h = q * self.std_errors[j];
        (c - h, c + h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn t_tail_closed_forms() {
        // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi
        for t in [0.1f64, 1.0, 3.0, 40.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert_relative_eq!(t_two_sided_p(t, 1.0), exact, max_relative = 1e-10);
        }
        // df = 2: p = 1 - t / sqrt(2 + t^2)
        for t in [0.2f64, 1.5, 7.0] {
            let exact = 1.0 - t / (2.0 + t * t).sqrt();
            assert_relative_eq!(t_two_sided_p(t, 2.0), exact, max_relative = 1e-10);
        }
        assert_eq!(t_two_sided_p(f64::INFINITY, 3.0), 0.0);
        assert_eq!(t_two_sided_p(0.0, 3.0), 1.0);
    }

    #[test]
    fn t_quantile_inverts_tail() {
        let q = t_quantile_two_sided(0.05, 10.0);
        assert_relative_eq!(q, 2.228138851986274, epsilon = 1e-9);
        assert_relative_eq!(t_two_sided_p(q, 10.0), 0.05, epsilon = 1e-10);
    }

    #[test]
    fn normal_and_chi2_tails() {
        assert_relative_eq!(normal_two_sided_p(1.959963984540054), 0.05, epsilon = 1e-10);
        // chi2 with 2 df: sf = exp(-x/2)
        assert_relative_eq!(chi2_sf(3.0, 2.0), (-1.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn quantile_rule() {
        let v = [0.0, 0.0, 0.0, 10.0];
        assert_eq!(quantile_sorted(&v, 0.5), 0.0);
        assert_relative_eq!(quantile_sorted(&v, 0.9), 7.0, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&[3.0], 0.9), 3.0);
        assert_relative_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
    }

    #[test]
    fn ols_hand_checked() {
        // x = 1..4, y = (1, 3, 2, 4): slope 0.8, intercept 0.5, SSE 1.8, SST 5
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let f = ols(&y, &[&x]).unwrap();
        assert_relative_eq!(f.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.coefficients[1], 0.8, epsilon = 1e-12);
        assert_relative_eq!(f.sse, 1.8, epsilon = 1e-12);
        assert_relative_eq!(f.r2, 0.64, epsilon = 1e-12);
        assert_relative_eq!(f.adj_r2, 0.46, epsilon = 1e-12);
        assert_relative_eq!(f.std_errors[1], 0.18f64.sqrt(), epsilon = 1e-12);
        // df = 2 closed form: slope p = 1 - sqrt(32/50) = 0.2
        assert_relative_eq!(f.p_values[1], 0.2, epsilon = 1e-12);
        assert_relative_eq!(f.p_values[0], 1.0 - (5.0f64 / 59.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ols_perfect_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let f = ols(&y, &[&x]).unwrap();
        assert_relative_eq!(f.coefficients[1], 2.0, epsilon = 1e-12);
        assert_eq!(f.adj_r2, 1.0);
        assert!(f.p_values[1] < 1e-12);
    }

    #[test]
    fn ols_errors() {
        assert_eq!(
            ols(&[1.0, 2.0], &[&[1.0, 2.0][..]]),
            Err(OlsError::TooFewRows { needed: 3, got: 2 })
        );
        let c = [1.0; 4];
        assert_eq!(ols(&[1.0, 2.0, 0.0, 3.0], &[&c[..]]), Err(OlsError::RankDeficient));
    }
}
