use anyhow::Context;
use relqual_core::regression::{ablate_predictor, fit_forest, permutation_importance, tune_forest};
use relqual_core::rng::derive_path;
use relqual_core::{CvSpec, Dataset, ForestConfig};

use crate::manifest::{RunContext, RunStatus};
use crate::settings::RfSettings;

pub fn run(s: &RfSettings, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
    s.validate()?;
    let path = s.data.as_ref().expect("validated");
    let response = s.response.as_deref().expect("validated");
    ctx.input(path)?;
    let full: Dataset<f64> = Dataset::from_csv_path(path).with_context(|| format!("loading {}", path.display()))?;
    let vars = full.variables().clone();
    let r = vars
        .require(response)
        .with_context(|| format!("response column {response:?} not found in {}", path.display()))?;
    let data = if s.predictors.is_empty() {
        full
    } else {
        let mut idx = vec![r];
        for p in &s.predictors {
            idx.push(
                vars.require(p)
                    .with_context(|| format!("predictor column {p:?} not found in {}", path.display()))?,
            );
        }
        full.select(&idx)
    };
    let p = data.n_vars() - 1;
    if p == 0 {
        anyhow::bail!("no predictor columns besides {response:?}");
    }

    let ntree: Vec<usize> = if s.ntree.is_empty() {
        (1..=10).map(|k| k * 100).collect()
    } else {
        s.ntree.clone()
    };
    let mtry: Vec<usize> = if s.mtry.is_empty() { (1..=p).collect() } else { s.mtry.clone() };
    let grid: Vec<(usize, usize)> = ntree
        .iter()
        .flat_map(|&t| mtry.iter().map(move |&m| (t, m)))
        .collect();
    let cv = CvSpec {
        repeats: s.repeats,
        folds: s.folds,
        baseline: s.baseline,
        seed: derive_path(s.seed, &[0]),
    };
    let tune = tune_forest(&data, response, &grid, s.min_leaf, &cv).map_err(rf_field)?;
    ctx.write("tune.csv", |w| Ok(tune.write_csv(w)?))?;

    let best = tune.best_cell();
    let cfg = ForestConfig {
        ntree: best.ntree,
        mtry: Some(best.mtry),
        min_leaf: s.min_leaf,
        seed: derive_path(s.seed, &[1]),
    };
    let forest = fit_forest(&data, response, &cfg)?;
    let importance = permutation_importance(&forest, &data, s.importance_repeats)?;
    ctx.write("importance.csv", |w| Ok(importance.write_csv(w)?))?;
    ctx.write("best.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["response", "ntree", "mtry", "mean_r2", "sd_r2", "oob_r2"])?;
        c.write_record([
            response.to_string(),
            best.ntree.to_string(),
            best.mtry.to_string(),
            format!("{:.6}", best.cv.mean),
            format!("{:.6}", best.cv.sd),
            forest.oob_r2().map(|v| format!("{v:.6}")).unwrap_or_default(),
        ])?;
        c.flush()?;
        Ok(())
    })?;

    if let Some(drop) = &s.ablate {
        let abl = ablate_predictor(&data, response, drop, &cfg, &cv).map_err(rf_field)?;
        ctx.write("ablation.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record([
                "response",
                "dropped",
                "with_mean_r2",
                "with_sd_r2",
                "without_mean_r2",
                "without_sd_r2",
                "drop_in_r2",
            ])?;
            c.write_record([
                abl.response.clone(),
                abl.dropped.clone(),
                format!("{:.6}", abl.with.mean),
                format!("{:.6}", abl.with.sd),
                format!("{:.6}", abl.without.mean),
                format!("{:.6}", abl.without.sd),
                format!("{:.6}", abl.drop_in_r2()),
            ])?;
            c.flush()?;
            Ok(())
        })?;
        ctx.write("ablation_folds.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["repeat", "fold", "with_r2", "without_r2"])?;
            for (k, (a, b)) in abl.with.values.iter().zip(&abl.without.values).enumerate() {
                c.write_record([
                    (k / s.folds).to_string(),
                    (k % s.folds).to_string(),
                    format!("{a:.6}"),
                    format!("{b:.6}"),
                ])?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(RunStatus::Ok)
}

fn rf_field(e: relqual_core::Error) -> anyhow::Error {
    match e {
        relqual_core::Error::InvalidConfig { field, message } => {
            anyhow::anyhow!("invalid configuration at rf.{field}: {message}")
        }
        e => e.into(),
    }
}
