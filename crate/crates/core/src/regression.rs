//! Regression forests with out-of-bag importance, repeated k-fold tuning,
//! predictor ablation, and log-log power-law fits.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_path, rng_at, SimRng};
use crate::scalar::Real;
use crate::stats::{ols, LogPolicy, OlsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub ntree: usize,
    /// Candidate predictors per split; `None` means `max(1, p / 3)`.
    pub mtry: Option<usize>,
    /// Minimum rows in a leaf.
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            ntree: 500,
            mtry: None,
            min_leaf: 5,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_predictors: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::config("ntree", "must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf", "must be at least 1"));
        }
        if n_predictors == 0 {
            return Err(Error::config("predictors", "need at least one predictor"));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_predictors {
                return Err(Error::config(
                    "mtry",
                    format!("must be in 1..={n_predictors}, got {m}"),
                ));
            }
        }
        Ok(())
    }

    pub fn resolved_mtry(&self, n_predictors: usize) -> usize {
        self.mtry.unwrap_or((n_predictors / 3).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node<T> {
    Leaf(T),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree<T> {
    nodes: Vec<Node<T>>,
    bag: Vec<usize>,
    oob: Vec<usize>,
}

impl<T: Real> Tree<T> {
    fn predict_with(&self, value: impl Fn(usize) -> T) -> T {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if value(feature) <= threshold { left } else { right },
            }
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    left_len: usize,
    gain: f64,
}

/// Best variance-reduction split of `rows` over `features`. Rows are
/// centered by their mean, so the SSE reduction of a split with left sum
/// `s` is `s^2 n / (n_left n_right)`.
fn best_split<T: Real>(
    x: &[&[T]],
    y: &[T],
    rows: &mut [usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mean = rows.iter().map(|&i| y[i].to_f64_lossy()).sum::<f64>() / n as f64;
    let sse: f64 = rows
        .iter()
        .map(|&i| (y[i].to_f64_lossy() - mean).powi(2))
        .sum();
    if sse <= 0.0 {
        return None;
    }
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let col = x[f];
        rows.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut s = 0.0;
        for k in 1..n {
            s += y[rows[k - 1]].to_f64_lossy() - mean;
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (a, b) = (col[rows[k - 1]], col[rows[k]]);
            if a >= b {
                continue;
            }
            let gain = s * s * n as f64 / (k * (n - k)) as f64;
            if gain > 1e-12 * sse && best.as_ref().is_none_or(|c| gain > c.gain) {
                let mid = a + (b - a) / T::of(2.0);
                let thr = if mid < b { mid } else { a };
                best = Some(SplitChoice {
                    feature: f,
                    threshold: thr.to_f64_lossy(),
                    left_len: k,
                    gain,
                });
            }
        }
    }
    best
}

fn grow<T: Real>(
    x: &[&[T]],
    y: &[T],
    mut rows: Vec<usize>,
    mtry: usize,
    min_leaf: usize,
    rng: &mut SimRng,
    impurity: &mut [f64],
) -> Vec<Node<T>> {
    let p = x.len();
    let mut nodes = vec![Node::Leaf(T::zero())];
    let mut stack = vec![(0usize, 0usize, rows.len())];
    while let Some((id, lo, hi)) = stack.pop() {
        let part = &mut rows[lo..hi];
        let features = sample(rng, p, mtry).into_vec();
        match best_split(x, y, part, &features, min_leaf) {
            None => {
                let m = part.iter().map(|&i| y[i].to_f64_lossy()).sum::<f64>() / part.len() as f64;
                nodes[id] = Node::Leaf(T::of(m));
            }
            Some(c) => {
                let col = x[c.feature];
                part.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap_or(std::cmp::Ordering::Equal));
                impurity[c.feature] += c.gain;
                let l = nodes.len();
                nodes.push(Node::Leaf(T::zero()));
                nodes.push(Node::Leaf(T::zero()));
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: T::of(c.threshold),
                    left: l,
                    right: l + 1,
                };
                stack.push((l + 1, lo + c.left_len, hi));
                stack.push((l, lo, lo + c.left_len));
            }
        }
    }
    nodes
}

/// Bagged CART regression trees with retained out-of-bag predictions.
#[derive(Debug, Clone)]
pub struct Forest<T = f64> {
    response: String,
    predictors: Vec<String>,
    cfg: ForestConfig,
    mtry: usize,
    trees: Vec<Tree<T>>,
    oob_prediction: Vec<Option<f64>>,
    y: Vec<f64>,
    impurity: Vec<f64>,
}

/// Forest on `response` using every other column as a predictor.
pub fn fit_forest<T: Real>(data: &Dataset<T>, response: &str, cfg: &ForestConfig) -> Result<Forest<T>> {
    let r = data.variables().require(response)?;
    let predictors: Vec<usize> = (0..data.n_vars()).filter(|&j| j != r).collect();
    fit_with(data, r, &predictors, cfg)
}

/// Forest on `response` using the named predictors.
pub fn fit_forest_on<T: Real>(
    data: &Dataset<T>,
    response: &str,
    predictors: &[&str],
    cfg: &ForestConfig,
) -> Result<Forest<T>> {
    let r = data.variables().require(response)?;
    let idx = predictors
        .iter()
        .map(|p| data.variables().require(p))
        .collect::<Result<Vec<_>>>()?;
    if idx.contains(&r) {
        return Err(Error::config("predictors", "response cannot be a predictor"));
    }
    fit_with(data, r, &idx, cfg)
}

fn fit_with<T: Real>(data: &Dataset<T>, response: usize, predictors: &[usize], cfg: &ForestConfig) -> Result<Forest<T>> {
    cfg.validate(predictors.len())?;
    let n = data.n_rows();
    let vars = data.variables();
    if n < 2 * cfg.min_leaf {
        return Err(Error::InsufficientRows {
            node: vars.name(response).to_string(),
            needed: 2 * cfg.min_leaf,
            got: n,
        });
    }
    let x: Vec<&[T]> = predictors.iter().map(|&j| data.column(j)).collect();
    let y = data.column(response);
    let p = predictors.len();
    let mtry = cfg.resolved_mtry(p);

    let grown: Vec<(Tree<T>, Vec<f64>)> = (0..cfg.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_at(cfg.seed, &[t as u64]);
            let mut count = vec![0u32; n];
            let bag: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    count[i] += 1;
                    i
                })
                .collect();
            let oob: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
            let mut impurity = vec![0.0; p];
            let nodes = grow(&x, y, bag.clone(), mtry, cfg.min_leaf, &mut rng, &mut impurity);
            (Tree { nodes, bag, oob }, impurity)
        })
        .collect();

    let mut impurity = vec![0.0; p];
    let mut sum = vec![0.0; n];
    let mut hits = vec![0usize; n];
    let mut trees = Vec::with_capacity(cfg.ntree);
    for (tree, imp) in grown {
        for (a, b) in impurity.iter_mut().zip(&imp) {
            *a += b / cfg.ntree as f64;
        }
        for &i in &tree.oob {
            sum[i] += tree.predict_with(|f| x[f][i]).to_f64_lossy();
            hits[i] += 1;
        }
        trees.push(tree);
    }
    let oob_prediction = sum
        .iter()
        .zip(&hits)
        .map(|(&s, &h)| (h > 0).then(|| s / h as f64))
        .collect();
    Ok(Forest {
        response: vars.name(response).to_string(),
        predictors: predictors.iter().map(|&j| vars.name(j).to_string()).collect(),
        cfg: *cfg,
        mtry,
        trees,
        oob_prediction,
        y: y.iter().map(|v| v.to_f64_lossy()).collect(),
        impurity,
    })
}

impl<T: Real> Forest<T> {
    pub fn response(&self) -> &str {
        &self.response
    }

    pub fn predictors(&self) -> &[String] {
        &self.predictors
    }

    pub fn config(&self) -> &ForestConfig {
        &self.cfg
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-tree predictions for one row given in predictor order.
    pub fn tree_predictions(&self, row: &[T]) -> Vec<T> {
        self.trees.iter().map(|t| t.predict_with(|f| row[f])).collect()
    }

    /// Mean of the tree predictions for one row given in predictor order.
    pub fn predict_row(&self, row: &[T]) -> T {
        let s: f64 = self
            .trees
            .iter()
            .map(|t| t.predict_with(|f| row[f]).to_f64_lossy())
            .sum();
        T::of(s / self.trees.len() as f64)
    }

    /// Predictions for every row of `data`, matching predictors by name.
    pub fn predict(&self, data: &Dataset<T>) -> Result<Vec<T>> {
        let cols = self
            .predictors
            .iter()
            .map(|p| data.column_by_name(p))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..data.n_rows())
            .map(|i| {
                let row: Vec<T> = cols.iter().map(|c| c[i]).collect();
                self.predict_row(&row)
            })
            .collect())
    }

    /// Bootstrap rows of tree `t`, with repeats.
    pub fn tree_bag(&self, t: usize) -> &[usize] {
        &self.trees[t].bag
    }

    /// Rows left out of tree `t`'s bootstrap sample.
    pub fn tree_oob(&self, t: usize) -> &[usize] {
        &self.trees[t].oob
    }

    /// Out-of-bag prediction per training row; `None` for rows that were in
    /// every bootstrap sample.
    pub fn oob_predictions(&self) -> &[Option<f64>] {
        &self.oob_prediction
    }

    /// `1 - SS_res / SS_tot` over rows with an out-of-bag prediction.
    pub fn oob_r2(&self) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self
            .oob_prediction
            .iter()
            .zip(&self.y)
            .filter_map(|(p, &y)| p.map(|p| (y, p)))
            .collect();
        if pairs.len() < 2 {
            return None;
        }
        let ybar = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        Some(r2_against(&pairs, ybar))
    }

    /// Total SSE reduction per predictor, averaged over trees.
    pub fn impurity_importance(&self) -> &[f64] {
        &self.impurity
    }
}

fn r2_against(pairs: &[(f64, f64)], baseline: f64) -> f64 {
    let ss_res: f64 = pairs.iter().map(|(y, p)| (y - p).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(y, _)| (y - baseline).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub predictor: String,
    /// Mean increase in out-of-bag squared error when the column is permuted.
    pub permutation: f64,
    pub impurity: f64,
    /// 1 for the most important predictor.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub response: String,
    /// One row per predictor, in predictor order.
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceReport {
    pub fn get(&self, predictor: &str) -> Option<&ImportanceRow> {
        self.rows.iter().find(|r| r.predictor == predictor)
    }

    /// Rows ordered by rank.
    pub fn ranked(&self) -> Vec<&ImportanceRow> {
        let mut v: Vec<&ImportanceRow> = self.rows.iter().collect();
        v.sort_by_key(|r| r.rank);
        v
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["predictor", "importance", "impurity", "rank"])?;
        for r in self.ranked() {
            w.write_record([
                r.predictor.clone(),
                format!("{:.6}", r.permutation),
                format!("{:.6}", r.impurity),
                r.rank.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Permutation importance on out-of-bag rows. For each tree and predictor
/// the predictor's values are shuffled among that tree's out-of-bag rows and
/// the increase in mean squared error is recorded; the importance is the
/// mean over trees and `repeats` shuffles. `data` must be the training data.
pub fn permutation_importance<T: Real>(
    forest: &Forest<T>,
    data: &Dataset<T>,
    repeats: usize,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::config("repeats", "must be at least 1"));
    }
    if data.n_rows() != forest.y.len() {
        return Err(Error::config(
            "data",
            format!("{} rows, forest was trained on {}", data.n_rows(), forest.y.len()),
        ));
    }
    let x = forest
        .predictors
        .iter()
        .map(|p| data.column_by_name(p))
        .collect::<Result<Vec<_>>>()?;
    let y = data.column_by_name(&forest.response)?;
    let p = x.len();
    let seed = derive_path(forest.cfg.seed, &[u64::MAX]);

    let per_tree: Vec<Option<Vec<f64>>> = forest
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let oob = &tree.oob;
            if oob.is_empty() {
                return None;
            }
            let mse = |pred: &dyn Fn(usize) -> f64| {
                oob.iter()
                    .enumerate()
                    .map(|(k, &i)| (y[i].to_f64_lossy() - pred(k)).powi(2))
                    .sum::<f64>()
                    / oob.len() as f64
            };
            let base = mse(&|k| tree.predict_with(|f| x[f][oob[k]]).to_f64_lossy());
            let mut out = vec![0.0; p];
            for (j, slot) in out.iter_mut().enumerate() {
                for r in 0..repeats {
                    let mut rng = rng_at(seed, &[t as u64, j as u64, r as u64]);
                    let mut shuffled: Vec<usize> = oob.clone();
                    for a in (1..shuffled.len()).rev() {
                        let b = rng.random_range(0..=a);
                        shuffled.swap(a, b);
                    }
                    let permuted = mse(&|k| {
                        tree.predict_with(|f| if f == j { x[f][shuffled[k]] } else { x[f][oob[k]] })
                            .to_f64_lossy()
                    });
                    *slot += (permuted - base) / repeats as f64;
                }
            }
            Some(out)
        })
        .collect();

    let used: Vec<&Vec<f64>> = per_tree.iter().flatten().collect();
    let mut perm = vec![0.0; p];
    for v in &used {
        for (a, b) in perm.iter_mut().zip(v.iter()) {
            *a += b;
        }
    }
    if !used.is_empty() {
        for a in perm.iter_mut() {
            *a /= used.len() as f64;
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| perm[b].total_cmp(&perm[a]).then(a.cmp(&b)));
    let mut rank = vec![0; p];
    for (k, &j) in order.iter().enumerate() {
        rank[j] = k + 1;
    }
    Ok(ImportanceReport {
        response: forest.response.clone(),
        rows: (0..p)
            .map(|j| ImportanceRow {
                predictor: forest.predictors[j].clone(),
                permutation: perm[j],
                impurity: forest.impurity[j],
                rank: rank[j],
            })
            .collect(),
    })
}

/// Mean used as `SS_tot` baseline for held-out R².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R2Baseline {
    /// Mean of the held-out fold.
    #[default]
    FoldMean,
    /// Mean of the training folds.
    TrainingMean,
}

/// Repeated k-fold cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSpec {
    pub repeats: usize,
    pub folds: usize,
    pub baseline: R2Baseline,
    pub seed: u64,
}

impl Default for CvSpec {
    fn default() -> Self {
        CvSpec {
            repeats: 10,
            folds: 2,
            baseline: R2Baseline::FoldMean,
            seed: 0,
        }
    }
}

impl CvSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "must be at least 2"));
        }
        if n < 2 * self.folds {
            return Err(Error::InsufficientData(format!(
                "{n} rows for {} folds; each fold needs 2",
                self.folds
            )));
        }
        Ok(())
    }

    /// Fold index of every row for one repeat. Depends only on
    /// `(seed, n, folds, repeat)`; fold sizes differ by at most one.
    pub fn fold_assignment(&self, n: usize, repeat: usize) -> Vec<usize> {
        let mut rng = rng_at(self.seed, &[0, repeat as u64]);
        let mut perm: Vec<usize> = (0..n).collect();
        for a in (1..n).rev() {
            let b = rng.random_range(0..=a);
            perm.swap(a, b);
        }
        let mut fold = vec![0; n];
        for (pos, &i) in perm.iter().enumerate() {
            fold[i] = pos % self.folds;
        }
        fold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvSummary {
    /// Held-out R² per (repeat, fold), repeat-major.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of `values`.
    pub sd: f64,
}

impl CvSummary {
    fn from_values(values: Vec<f64>) -> CvSummary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        CvSummary { values, mean, sd }
    }
}

fn cross_validate<T: Real>(
    data: &Dataset<T>,
    response: usize,
    predictors: &[usize],
    cfg: &ForestConfig,
    cv: &CvSpec,
) -> Result<CvSummary> {
    let n = data.n_rows();
    cv.validate(n)?;
    let y = data.column(response);
    let mut values = Vec::with_capacity(cv.repeats * cv.folds);
    for r in 0..cv.repeats {
        let fold = cv.fold_assignment(n, r);
        for f in 0..cv.folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let fold_cfg = ForestConfig {
                seed: derive_path(cv.seed, &[1, r as u64, f as u64]),
                ..*cfg
            };
            let model = fit_with(&data.take_rows(&train), response, predictors, &fold_cfg)?;
            let pairs: Vec<(f64, f64)> = test
                .iter()
                .map(|&i| {
                    let row: Vec<T> = predictors.iter().map(|&j| data.column(j)[i]).collect();
                    (y[i].to_f64_lossy(), model.predict_row(&row).to_f64_lossy())
                })
                .collect();
            let baseline = match cv.baseline {
                R2Baseline::FoldMean => pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64,
                R2Baseline::TrainingMean => {
                    train.iter().map(|&i| y[i].to_f64_lossy()).sum::<f64>() / train.len() as f64
                }
            };
            values.push(r2_against(&pairs, baseline));
        }
    }
    Ok(CvSummary::from_values(values))
}

/// `ntree` in 100..=1000 by 100 crossed with `mtry` in 1..=p.
pub fn default_grid(n_predictors: usize) -> Vec<(usize, usize)> {
    (1..=10)
        .flat_map(|k| (1..=n_predictors).map(move |m| (k * 100, m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneCell {
    pub ntree: usize,
    pub mtry: usize,
    pub cv: CvSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub response: String,
    pub cells: Vec<TuneCell>,
    /// Index into `cells` of the highest mean R²; earliest cell on ties.
    pub best: usize,
}

impl TuneResult {
    pub fn best_cell(&self) -> &TuneCell {
        &self.cells[self.best]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ntree", "mtry", "mean_r2", "sd_r2", "best"])?;
        for (k, c) in self.cells.iter().enumerate() {
            w.write_record([
                c.ntree.to_string(),
                c.mtry.to_string(),
                format!("{:.6}", c.cv.mean),
                format!("{:.6}", c.cv.sd),
                (k == self.best).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Repeated k-fold cross-validated R² for each `(ntree, mtry)` cell. Every
/// cell sees the same folds and the same per-fold forest seeds.
pub fn tune_forest<T: Real>(
    data: &Dataset<T>,
    response: &str,
    grid: &[(usize, usize)],
    min_leaf: usize,
    cv: &CvSpec,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::config("grid", "must not be empty"));
    }
    let r = data.variables().require(response)?;
    let predictors: Vec<usize> = (0..data.n_vars()).filter(|&j| j != r).collect();
    let mut cells = Vec::with_capacity(grid.len());
    for (k, &(ntree, mtry)) in grid.iter().enumerate() {
        let cfg = ForestConfig {
            ntree,
            mtry: Some(mtry),
            min_leaf,
            seed: 0,
        };
        cfg.validate(predictors.len())
            .map_err(|e| prefix_field(e, &format!("grid[{k}]")))?;
        cells.push(TuneCell {
            ntree,
            mtry,
            cv: cross_validate(data, r, &predictors, &cfg, cv)?,
        });
    }
    let mut best = 0;
    for (k, c) in cells.iter().enumerate() {
        if c.cv.mean > cells[best].cv.mean {
            best = k;
        }
    }
    Ok(TuneResult {
        response: response.to_string(),
        cells,
        best,
    })
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidConfig { field, message } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub response: String,
    pub dropped: String,
    pub with: CvSummary,
    pub without: CvSummary,
}

impl AblationResult {
    /// Mean R² with the predictor minus mean R² without it.
    pub fn drop_in_r2(&self) -> f64 {
        self.with.mean - self.without.mean
    }
}

/// Cross-validated R² with and without `drop` as a predictor, on identical
/// folds and forest seeds. `mtry` is capped at the reduced predictor count.
pub fn ablate_predictor<T: Real>(
    data: &Dataset<T>,
    response: &str,
    drop: &str,
    cfg: &ForestConfig,
    cv: &CvSpec,
) -> Result<AblationResult> {
    let vars = data.variables();
    let r = vars.require(response)?;
    let d = vars.require(drop)?;
    if d == r {
        return Err(Error::config("drop", "cannot drop the response"));
    }
    let full: Vec<usize> = (0..data.n_vars()).filter(|&j| j != r).collect();
    let reduced: Vec<usize> = full.iter().copied().filter(|&j| j != d).collect();
    if reduced.is_empty() {
        return Err(Error::config("drop", "no predictors would remain"));
    }
    let with = cross_validate(data, r, &full, cfg, cv)?;
    let reduced_cfg = ForestConfig {
        mtry: Some(cfg.resolved_mtry(full.len()).min(reduced.len())),
        ..*cfg
    };
    let without = cross_validate(data, r, &reduced, &reduced_cfg, cv)?;
    Ok(AblationResult {
        response: response.to_string(),
        dropped: drop.to_string(),
        with,
        without,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub response: String,
    pub driver: String,
    pub controls: Vec<String>,
    /// Coefficient of the logged driver.
    pub exponent: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub intercept: f64,
    /// Coefficients of the controls, in the order given.
    pub control_coefficients: Vec<f64>,
    pub r2: f64,
    pub n: usize,
}

/// OLS of `log(response)` on `log(driver)` plus `controls` (entered as
/// given), with a 95% t interval for the exponent.
pub fn fit_power_law<T: Real>(
    data: &Dataset<T>,
    response: &str,
    driver: &str,
    controls: &[&str],
    policy: LogPolicy,
) -> Result<PowerLawFit> {
    let logged = |name: &str| -> Result<Vec<f64>> {
        data.column_by_name(name)?
            .iter()
            .map(|v| policy.apply(v.to_f64_lossy(), name))
            .collect()
    };
    let ly = logged(response)?;
    let lx = logged(driver)?;
    let ctrl = controls
        .iter()
        .map(|c| {
            Ok(data
                .column_by_name(c)?
                .iter()
                .map(|v| v.to_f64_lossy())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut preds: Vec<&[f64]> = vec![&lx];
    preds.extend(ctrl.iter().map(Vec::as_slice));
    let fit = ols(&ly, &preds).map_err(|e| match e {
        OlsError::TooFewRows { needed, got } => Error::InsufficientRows {
            node: response.to_string(),
            needed,
            got,
        },
        OlsError::RankDeficient => Error::RankDeficient {
            node: response.to_string(),
        },
    })?;
    let (ci_low, ci_high) = fit.confidence_interval(1, 0.95);
    Ok(PowerLawFit {
        response: response.to_string(),
        driver: driver.to_string(),
        controls: controls.iter().map(|c| c.to_string()).collect(),
        exponent: fit.coefficients[1],
        std_error: fit.std_errors[1],
        ci_low,
        ci_high,
        p_value: fit.p_values[1],
        intercept: fit.coefficients[0],
        control_coefficients: fit.coefficients[2..].to_vec(),
        r2: fit.r2,
        n: fit.n,
    })
}
