//! Unsupervised discretization and the multinomial BIC score.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Dag, VariableSet};
use crate::scalar::Real;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationMethod {
    EqualInterval,
    EqualFrequency,
    Kmeans,
    Hartemink,
}

impl DiscretizationMethod {
    /// One-letter code used in method labels (`hc-D-F` etc).
    pub fn code(self) -> char {
        match self {
            DiscretizationMethod::EqualInterval => 'I',
            DiscretizationMethod::EqualFrequency => 'F',
            DiscretizationMethod::Kmeans => 'K',
            DiscretizationMethod::Hartemink => 'H',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(DiscretizationMethod::EqualInterval),
            'F' => Some(DiscretizationMethod::EqualFrequency),
            'K' => Some(DiscretizationMethod::Kmeans),
            'H' => Some(DiscretizationMethod::Hartemink),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub method: DiscretizationMethod,
    pub bins: usize,
    pub hartemink_initial_bins: usize,
}

impl DiscretizationSpec {
    pub fn new(method: DiscretizationMethod) -> Self {
        DiscretizationSpec {
            method,
            bins: 3,
            hartemink_initial_bins: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::config("bins", "must be at least 2"));
        }
        if self.hartemink_initial_bins < self.bins {
            return Err(Error::config(
                "hartemink_initial_bins",
                "must be at least bins",
            ));
        }
        Ok(())
    }
}

/// Level-coded data. Levels of variable `j` are `0..levels[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDataset {
    vars: Arc<VariableSet>,
    columns: Vec<Vec<u32>>,
    levels: Vec<u32>,
    /// Cut points per variable; a value `x` gets the level
    /// `#{c in cuts : x >= c}`. Empty for data built directly from levels.
    cuts: Vec<Vec<f64>>,
    n: usize,
}

impl DiscreteDataset {
    pub fn new(vars: Arc<VariableSet>, columns: Vec<Vec<u32>>, levels: Vec<u32>) -> Result<Self> {
        if columns.len() != vars.len() || levels.len() != vars.len() {
            return Err(Error::config("columns", "one column and level count per variable"));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::config(format!("columns[{j}]"), "ragged column"));
            }
            if let Some(i) = c.iter().position(|&l| l >= levels[j]) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("level out of range for {}", vars.name(j)),
                });
            }
        }
        let cuts = vec![Vec::new(); vars.len()];
        Ok(DiscreteDataset {
            vars,
            columns,
            levels,
            cuts,
            n,
        })
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.columns[j]
    }

    pub fn levels(&self, j: usize) -> u32 {
        self.levels[j]
    }

    pub fn cuts(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    pub fn take_rows(&self, rows: &[usize]) -> DiscreteDataset {
        DiscreteDataset {
            vars: Arc::clone(&self.vars),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            levels: self.levels.clone(),
            cuts: self.cuts.clone(),
            n: rows.len(),
        }
    }

    /// Integer levels as CSV with a header of variable names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.vars.names())?;
        for i in 0..self.n {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar describing the bin edges: `{"variables": {name: {levels, cuts}}}`.
    pub fn bin_edges_json(&self) -> String {
        #[derive(Serialize)]
        struct Var<'a> {
            name: &'a str,
            levels: u32,
            cuts: &'a [f64],
        }
        let vars: Vec<Var> = (0..self.n_vars())
            .map(|j| Var {
                name: self.vars.name(j),
                levels: self.levels[j],
                cuts: &self.cuts[j],
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "variables": vars }))
            .expect("plain data serializes")
    }
}

fn level_of(x: f64, cuts: &[f64]) -> u32 {
    cuts.partition_point(|&c| c <= x) as u32
}

/// Discretize every column of `data` independently (Hartemink jointly).
pub fn discretize<T: Real>(data: &Dataset<T>, spec: &DiscretizationSpec) -> Result<DiscreteDataset> {
    spec.validate()?;
    let n = data.n_rows();
    if n < spec.bins {
        return Err(Error::InsufficientData(format!(
            "{} rows for {} bins",
            n, spec.bins
        )));
    }
    let cols: Vec<Vec<f64>> = data
        .columns()
        .iter()
        .map(|c| c.iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    for (j, c) in cols.iter().enumerate() {
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Err(Error::DegenerateColumn(data.variables().name(j).to_string()));
        }
    }
    let cuts: Vec<Vec<f64>> = match spec.method {
        DiscretizationMethod::EqualInterval => cols.iter().map(|c| interval_cuts(c, spec.bins)).collect(),
        DiscretizationMethod::EqualFrequency => cols.iter().map(|c| quantile_cuts(c, spec.bins)).collect(),
        DiscretizationMethod::Kmeans => cols.iter().map(|c| kmeans_cuts(c, spec.bins)).collect(),
        DiscretizationMethod::Hartemink => hartemink(&cols, spec.bins, spec.hartemink_initial_bins).0,
    };
    let columns = cols
        .iter()
        .zip(&cuts)
        .map(|(c, k)| c.iter().map(|&x| level_of(x, k)).collect())
        .collect();
    let levels = match spec.method {
        // cuts may coincide under ties; keep the declared level count
        DiscretizationMethod::Hartemink => cuts.iter().map(|k| k.len() as u32 + 1).collect(),
        _ => vec![spec.bins as u32; cuts.len()],
    };
    Ok(DiscreteDataset {
        vars: Arc::clone(data.variables()),
        columns,
        levels,
        cuts,
        n,
    })
}

fn interval_cuts(x: &[f64], bins: usize) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = (hi - lo) / bins as f64;
    (1..bins).map(|k| lo + k as f64 * w).collect()
}

fn quantile_cuts(x: &[f64], bins: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    (1..bins)
        .map(|k| quantile_sorted(&s, k as f64 / bins as f64))
        .collect()
}

/// Lloyd's algorithm in one dimension with centers seeded at the
/// `(k + 1/2) / bins` quantiles; boundaries are midpoints between centers.
fn kmeans_cuts(x: &[f64], bins: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..bins)
        .map(|k| quantile_sorted(&s, (k as f64 + 0.5) / bins as f64))
        .collect();
    for _ in 0..100 {
        let cuts = midpoints(&centers);
        let mut sum = vec![0.0; bins];
        let mut cnt = vec![0usize; bins];
        for &v in &s {
            let l = level_of(v, &cuts) as usize;
            sum[l] += v;
            cnt[l] += 1;
        }
        let mut next = centers.clone();
        for k in 0..bins {
            if cnt[k] > 0 {
                next[k] = sum[k] / cnt[k] as f64;
            }
        }
        next.sort_by(f64::total_cmp);
        if next == centers {
            break;
        }
        centers = next;
    }
    midpoints(&centers)
}

fn midpoints(c: &[f64]) -> Vec<f64> {
    c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn entropy_term(count: f64, n: f64) -> f64 {
    if count > 0.0 {
        count / n * (count / n).ln()
    } else {
        0.0
    }
}

/// Plug-in mutual information of a joint count table.
fn table_mi(table: &[Vec<f64>], n: f64) -> f64 {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let ncol = table.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..ncol).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0.0 {
                mi += c / n * (c * n / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

fn joint_table(a: &[u32], la: usize, b: &[u32], lb: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; lb]; la];
    for (&x, &y) in a.iter().zip(b) {
        t[x as usize][y as usize] += 1.0;
    }
    t
}

/// Hartemink's merge procedure. Returns the surviving cuts per variable and
/// the total pairwise MI recorded after initialization and after every merge.
pub(crate) fn hartemink(cols: &[Vec<f64>], bins: usize, initial: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = cols.len();
    let n = cols[0].len() as f64;
    let mut cuts: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mut k = quantile_cuts(c, initial);
            k.dedup();
            // drop cuts that leave an empty bin
            let mut s = c.clone();
            s.sort_by(f64::total_cmp);
            let lo = s[0];
            k.retain(|&cut| cut > lo);
            k
        })
        .collect();
    let mut levels: Vec<Vec<u32>> = cols
        .iter()
        .zip(&cuts)
        .map(|(c, k)| c.iter().map(|&x| level_of(x, k)).collect())
        .collect();
    let total_mi = |levels: &[Vec<u32>], cuts: &[Vec<f64>]| {
        let mut s = 0.0;
        for a in 0..p {
            for b in (a + 1)..p {
                s += table_mi(
                    &joint_table(&levels[a], cuts[a].len() + 1, &levels[b], cuts[b].len() + 1),
                    n,
                );
            }
        }
        s
    };
    let mut trace = vec![total_mi(&levels, &cuts)];

    loop {
        let mut merged_any = false;
        for v in 0..p {
            if cuts[v].len() < bins {
                continue;
            }
            let lv = cuts[v].len() + 1;
            let tables: Vec<Vec<Vec<f64>>> = (0..p)
                .filter(|&u| u != v)
                .map(|u| joint_table(&levels[v], lv, &levels[u], cuts[u].len() + 1))
                .collect();
            // loss from merging rows l and l+1, summed over partners
            let mut best: Option<(usize, f64)> = None;
            for l in 0..(lv - 1) {
                let mut loss = 0.0;
                for t in &tables {
                    loss += merge_loss(t, l, n);
                }
                if best.is_none_or(|(_, b)| loss < b) {
                    best = Some((l, loss));
                }
            }
            let (l, _) = best.expect("at least two levels");
            cuts[v].remove(l);
            for x in levels[v].iter_mut() {
                if *x > l as u32 {
                    *x -= 1;
                }
            }
            trace.push(total_mi(&levels, &cuts));
            merged_any = true;
        }
        if !merged_any {
            break;
        }
    }
    (cuts, trace)
}

/// MI lost when rows `l` and `l+1` of a joint table are merged.
fn merge_loss(t: &[Vec<f64>], l: usize, n: f64) -> f64 {
    let ncol = t[0].len();
    let cols: Vec<f64> = (0..ncol).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let row_mi = |r: &[f64]| {
        let rs: f64 = r.iter().sum();
        r.iter()
            .zip(&cols)
            .filter(|(&c, _)| c > 0.0)
            .map(|(&c, &cs)| c / n * (c * n / (rs * cs)).ln())
            .sum::<f64>()
    };
    let merged: Vec<f64> = t[l].iter().zip(&t[l + 1]).map(|(a, b)| a + b).collect();
    row_mi(&t[l]) + row_mi(&t[l + 1]) - row_mi(&merged)
}

/// Plug-in mutual information (natural log) for every variable pair; the
/// diagonal holds each variable's entropy.
pub fn pairwise_mutual_information(data: &DiscreteDataset) -> Vec<Vec<f64>> {
    let p = data.n_vars();
    let n = data.n_rows() as f64;
    let mut m = vec![vec![0.0; p]; p];
    for a in 0..p {
        let la = data.levels(a) as usize;
        let mut counts = vec![0.0; la];
        for &x in data.column(a) {
            counts[x as usize] += 1.0;
        }
        m[a][a] = -counts.iter().map(|&c| entropy_term(c, n)).sum::<f64>();
        for b in (a + 1)..p {
            let t = joint_table(data.column(a), la, data.column(b), data.levels(b) as usize);
            let mi = table_mi(&t, n);
            m[a][b] = mi;
            m[b][a] = mi;
        }
    }
    m
}

/// Multinomial BIC contribution of one node given its parents. Parent
/// configurations that never occur contribute nothing.
pub fn family_score_discrete(data: &DiscreteDataset, node: usize, parents: &[usize]) -> f64 {
    let n = data.n_rows();
    let r = data.levels(node) as usize;
    let y = data.column(node);
    let q: f64 = parents.iter().map(|&p| data.levels(p) as f64).product();
    let k = (r as f64 - 1.0) * q;

    let strides: Option<Vec<usize>> = {
        let mut acc = 1usize;
        let mut s = Vec::with_capacity(parents.len());
        let mut ok = true;
        for &p in parents {
            s.push(acc);
            match acc.checked_mul(data.levels(p) as usize) {
                Some(a) if a <= 1 << 22 => acc = a,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        ok.then_some(s)
    };

    let loglik = match strides {
        Some(strides) => {
            let configs: usize = parents.iter().map(|&p| data.levels(p) as usize).product();
            let mut counts = vec![0u32; configs * r];
            for i in 0..n {
                let cfg: usize = parents
                    .iter()
                    .zip(&strides)
                    .map(|(&p, &s)| data.column(p)[i] as usize * s)
                    .sum();
                counts[cfg * r + y[i] as usize] += 1;
            }
            counts.chunks(r).map(family_loglik).sum::<f64>()
        }
        None => {
            let mut map: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
            for i in 0..n {
                let key: Vec<u32> = parents.iter().map(|&p| data.column(p)[i]).collect();
                map.entry(key).or_insert_with(|| vec![0; r])[y[i] as usize] += 1;
            }
            map.values().map(|c| family_loglik(c)).sum::<f64>()
        }
    };
    loglik - 0.5 * k * (n as f64).ln()
}

fn family_loglik(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / t).ln())
        .sum()
}

/// Network multinomial BIC; decomposes over families.
pub fn bic_discrete(dag: &Dag, data: &DiscreteDataset) -> Result<f64> {
    if dag.variables().names() != data.variables().names() {
        return Err(Error::VariableMismatch);
    }
    Ok((0..dag.n_nodes())
        .map(|v| family_score_discrete(data, v, &dag.parents(v)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_col(x: Vec<f64>) -> Dataset {
        Dataset::from_named_columns(vec![("x", x)]).unwrap()
    }

    fn spec(m: DiscretizationMethod, bins: usize) -> DiscretizationSpec {
        DiscretizationSpec {
            bins,
            ..DiscretizationSpec::new(m)
        }
    }

    #[test]
    fn equal_frequency_median_split() {
        let d = discretize(
            &one_col(vec![1.0, 2.0, 3.0, 4.0]),
            &spec(DiscretizationMethod::EqualFrequency, 2),
        )
        .unwrap();
        assert_eq!(d.column(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn equal_interval_midpoint() {
        let d = discretize(
            &one_col(vec![0.0, 0.1, 0.2, 10.0]),
            &spec(DiscretizationMethod::EqualInterval, 2),
        )
        .unwrap();
        assert_eq!(d.column(0), &[0, 0, 0, 1]);
        assert_eq!(d.cuts(0), &[5.0]);
    }

    #[test]
    fn kmeans_matches_brute_force_two_means() {
        let x = vec![0.0, 0.1, 9.9, 10.0];
        // brute force: best split point over sorted data
        let mut best = (f64::INFINITY, 0);
        for s in 1..x.len() {
            let sse = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
            };
            let c = sse(&x[..s]) + sse(&x[s..]);
            if c < best.0 {
                best = (c, s);
            }
        }
        let expected: Vec<u32> = (0..x.len()).map(|i| (i >= best.1) as u32).collect();
        let d = discretize(&one_col(x), &spec(DiscretizationMethod::Kmeans, 2)).unwrap();
        assert_eq!(d.column(0), expected.as_slice());
        assert_eq!(d.column(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn constant_column_rejected() {
        for m in [
            DiscretizationMethod::EqualInterval,
            DiscretizationMethod::EqualFrequency,
            DiscretizationMethod::Kmeans,
            DiscretizationMethod::Hartemink,
        ] {
            assert!(matches!(
                discretize(&one_col(vec![2.0; 5]), &spec(m, 2)),
                Err(Error::DegenerateColumn(_))
            ));
        }
    }

    #[test]
    fn spec_validation() {
        assert!(spec(DiscretizationMethod::Kmeans, 1).validate().is_err());
        let s = DiscretizationSpec {
            hartemink_initial_bins: 2,
            ..spec(DiscretizationMethod::Hartemink, 3)
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_binary_variable_closed_form() {
        let vars = Arc::new(VariableSet::new(["a"]).unwrap());
        let d = DiscreteDataset::new(vars.clone(), vec![vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]], vec![2])
            .unwrap();
        let g = Dag::empty(vars).unwrap();
        let expected = 10.0 * 0.5f64.ln() - 0.5 * 10f64.ln();
        assert_relative_eq!(bic_discrete(&g, &d).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn independent_counts_prefer_empty_graph() {
        // 2x2 table with equal counts in every cell
        let a = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let b = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let vars = Arc::new(VariableSet::new(["a", "b"]).unwrap());
        let d = DiscreteDataset::new(vars.clone(), vec![a, b], vec![2, 2]).unwrap();
        let empty = Dag::empty(vars.clone()).unwrap();
        let edge = Dag::from_edges(vars, &[(0, 1)]).unwrap();
        let s0 = bic_discrete(&empty, &d).unwrap();
        let s1 = bic_discrete(&edge, &d).unwrap();
        // identical likelihood (16 ln 0.5 total), one extra parameter
        assert_relative_eq!(s0, 16.0 * 0.5f64.ln() - 8f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(s0 - s1, 0.5 * 8f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn mi_identical_and_xor() {
        let vars = Arc::new(VariableSet::new(["x", "y", "z"]).unwrap());
        let x = vec![0, 0, 1, 1];
        let y = vec![0, 1, 0, 1];
        let z: Vec<u32> = x.iter().zip(&y).map(|(a, b)| a ^ b).collect();
        let d = DiscreteDataset::new(vars, vec![x.clone(), y, z], vec![2, 2, 2]).unwrap();
        let m = pairwise_mutual_information(&d);
        let ln2 = 2f64.ln();
        assert_relative_eq!(m[0][0], ln2, epsilon = 1e-12);
        assert_relative_eq!(m[0][1], 0.0, epsilon = 1e-12);
        // XOR: each pair is independent
        assert_relative_eq!(m[0][2], 0.0, epsilon = 1e-12);
        assert_relative_eq!(m[1][2], 0.0, epsilon = 1e-12);

        let vars = Arc::new(VariableSet::new(["a", "b"]).unwrap());
        let d = DiscreteDataset::new(vars, vec![vec![0, 1, 2, 2], vec![0, 1, 2, 2]], vec![3, 3]).unwrap();
        let m = pairwise_mutual_information(&d);
        assert_relative_eq!(m[0][1], m[0][0], epsilon = 1e-12);
    }

    #[test]
    fn hartemink_levels_and_monotone_trace() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(4);
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3 * rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let (cuts, trace) = hartemink(&[a.clone(), b.clone(), c.clone()], 3, 20);
        assert!(cuts.iter().all(|k| k.len() == 2));
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));

        let d = Dataset::from_named_columns(vec![("a", a), ("b", b), ("c", c)]).unwrap();
        let dd = discretize(&d, &DiscretizationSpec::new(DiscretizationMethod::Hartemink)).unwrap();
        for j in 0..3 {
            assert_eq!(dd.levels(j), 3);
        }
    }
}
