use crate::data::Dataset;
use crate::discrete::DiscreteDataset;
use crate::error::{Error, Result};
use crate::linalg::invert;
use crate::scalar::Real;
use crate::stats::{chi2_sf, normal_two_sided_p};

/// Conditional-independence test of `x` and `y` given `z`.
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;

    /// p-value of the null hypothesis that `x` and `y` are independent
    /// given `z`.
    fn p_value(&self, x: usize, y: usize, z: &[usize]) -> Result<f64>;
}

/// Fisher z test on partial correlation.
#[derive(Debug, Clone)]
pub struct FisherZ {
    corr: Vec<Vec<f64>>,
    n: usize,
}

impl FisherZ {
    pub fn new<T: Real>(data: &Dataset<T>) -> Self {
        let p = data.n_vars();
        let n = data.n_rows();
        let centered: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let c: Vec<f64> = data.column(j).iter().map(|v| v.to_f64_lossy()).collect();
                let m = c.iter().sum::<f64>() / n as f64;
                c.into_iter().map(|v| v - m).collect()
            })
            .collect();
        let ss: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut corr = vec![vec![0.0; p]; p];
        for i in 0..p {
            corr[i][i] = 1.0;
            for j in (i + 1)..p {
                let cross: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                let denom = (ss[i] * ss[j]).sqrt();
                let r = if denom > 0.0 { cross / denom } else { 0.0 };
                corr[i][j] = r;
                corr[j][i] = r;
            }
        }
        FisherZ { corr, n }
    }

    pub fn partial_correlation(&self, x: usize, y: usize, z: &[usize]) -> Result<f64> {
        if z.is_empty() {
            return Ok(self.corr[x][y]);
        }
        let idx: Vec<usize> = [x, y].iter().chain(z).copied().collect();
        let sub: Vec<Vec<f64>> = idx
            .iter()
            .map(|&a| idx.iter().map(|&b| self.corr[a][b]).collect())
            .collect();
        let inv = invert(&sub).ok_or(Error::SingularCorrelation)?;
        let r = -inv[0][1] / (inv[0][0] * inv[1][1]).sqrt();
        Ok(r.clamp(-1.0, 1.0))
    }
}

impl CiTest for FisherZ {
    fn n_vars(&self) -> usize {
        self.corr.len()
    }

    fn p_value(&self, x: usize, y: usize, z: &[usize]) -> Result<f64> {
        let df = self.n as f64 - z.len() as f64 - 3.0;
        if df <= 0.0 {
            return Ok(1.0);
        }
        let r = self.partial_correlation(x, y, z)?;
        Ok(normal_two_sided_p(df.sqrt() * r.atanh()))
    }
}

/// Likelihood-ratio (G) test on a contingency table, with degrees of
/// freedom `(rx - 1)(ry - 1) * prod(rz)`.
#[derive(Debug, Clone, Copy)]
pub struct GTest<'a> {
    data: &'a DiscreteDataset,
}

impl<'a> GTest<'a> {
    pub fn new(data: &'a DiscreteDataset) -> Self {
        GTest { data }
    }

    pub fn statistic(&self, x: usize, y: usize, z: &[usize]) -> (f64, f64) {
        let d = self.data;
        let rx = d.levels(x) as usize;
        let ry = d.levels(y) as usize;
        let mut rz = 1usize;
        let mut zcode = vec![0usize; d.n_rows()];
        for &v in z {
            let r = d.levels(v) as usize;
            for (code, &l) in zcode.iter_mut().zip(d.column(v)) {
                *code = *code * r + l as usize;
            }
            rz *= r;
        }
        let mut nxyz = vec![0usize; rz * rx * ry];
        for (i, &c) in zcode.iter().enumerate() {
            let a = d.column(x)[i] as usize;
            let b = d.column(y)[i] as usize;
            nxyz[(c * rx + a) * ry + b] += 1;
        }
        let mut g = 0.0;
        for c in 0..rz {
            let cell = |a: usize, b: usize| nxyz[(c * rx + a) * ry + b] as f64;
            let nz: f64 = (0..rx).flat_map(|a| (0..ry).map(move |b| (a, b))).map(|(a, b)| cell(a, b)).sum();
            if nz == 0.0 {
                continue;
            }
            let nxz: Vec<f64> = (0..rx).map(|a| (0..ry).map(|b| cell(a, b)).sum()).collect();
            let nyz: Vec<f64> = (0..ry).map(|b| (0..rx).map(|a| cell(a, b)).sum()).collect();
            for a in 0..rx {
                for b in 0..ry {
                    let o = cell(a, b);
                    if o > 0.0 {
                        g += o * (o * nz / (nxz[a] * nyz[b])).ln();
                    }
                }
            }
        }
        let df = ((rx - 1) * (ry - 1) * rz) as f64;
        (2.0 * g, df)
    }
}

impl CiTest for GTest<'_> {
    fn n_vars(&self) -> usize {
        self.data.n_vars()
    }

    fn p_value(&self, x: usize, y: usize, z: &[usize]) -> Result<f64> {
        let (g, df) = self.statistic(x, y, z);
        if df == 0.0 {
            return Ok(1.0);
        }
        Ok(chi2_sf(g, df))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VariableSet;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn partial_correlation_matches_residual_regression() {
        let x = [0.3, -1.2, 2.2, 0.7, -0.4, 1.9, 0.0, -2.0];
        let z = [1.0, 0.5, -0.3, 2.2, 1.1, -0.8, 0.4, -1.5];
        let y: Vec<f64> = x.iter().zip(&z).enumerate().map(|(i, (a, b))| a + 0.5 * b + (i as f64).sin()).collect();
        let data = Dataset::from_named_columns(vec![("x", x.to_vec()), ("y", y.clone()), ("z", z.to_vec())]).unwrap();
        let fz = FisherZ::new(&data);

        // oracle: correlate the residuals of x|z and y|z
        let resid = |v: &[f64]| {
            let f = crate::stats::ols(v, &[&z[..]]).unwrap();
            v.iter().zip(&z).map(|(a, b)| a - f.coefficients[0] - f.coefficients[1] * b).collect::<Vec<_>>()
        };
        let (rx, ry) = (resid(&x), resid(&y));
        let num: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
        let den = (rx.iter().map(|a| a * a).sum::<f64>() * ry.iter().map(|a| a * a).sum::<f64>()).sqrt();
        assert_relative_eq!(fz.partial_correlation(0, 1, &[2]).unwrap(), num / den, epsilon = 1e-12);

        let r = num / den;
        let expected = normal_two_sided_p((8.0f64 - 4.0).sqrt() * r.atanh());
        assert_relative_eq!(fz.p_value(0, 1, &[2]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn g_statistic_hand_table() {
        // 2x2 table [[3, 1], [1, 3]]
        let x = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let vars = Arc::new(VariableSet::numbered(2));
        let d = DiscreteDataset::new(vars, vec![x, y], vec![2, 2]).unwrap();
        let (g, df) = GTest::new(&d).statistic(0, 1, &[]);
        let expected = 2.0 * (2.0 * 3.0 * (3.0f64 / 2.0).ln() + 2.0 * (0.5f64).ln());
        assert_relative_eq!(g, expected, epsilon = 1e-12);
        assert_eq!(df, 1.0);
    }

    #[test]
    fn g_test_conditional_independence() {
        // x and y are identical copies of z: dependent marginally, independent given z
        let z: Vec<u32> = (0..60).map(|i| (i % 3) as u32).collect();
        let vars = Arc::new(VariableSet::numbered(3));
        let d = DiscreteDataset::new(vars, vec![z.clone(), z.clone(), z], vec![3, 3, 3]).unwrap();
        let t = GTest::new(&d);
        assert!(t.p_value(0, 1, &[]).unwrap() < 1e-6);
        assert_eq!(t.p_value(0, 1, &[2]).unwrap(), 1.0);
    }
}
