use anyhow::Context;
use relqual_core::discrete::discretize;
use relqual_core::gaussian::edge_inference;
use relqual_core::search::{
    averaged_network_with, bootstrap_average, exact_map_edge_probabilities, ThresholdRule, MAX_EXACT_PARENTS,
};
use relqual_core::simstudy::{learner_for, SearchMethod};
use relqual_core::{ArcConfidence, Dataset, DiscretizationSpec, HcConfig, Observations};

use crate::manifest::{RunContext, RunStatus};
use crate::settings::LearnSettings;

pub fn run(s: &LearnSettings, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
    s.validate()?;
    let path = s.data.as_ref().expect("validated");
    ctx.input(path)?;
    let mut data: Dataset<f64> =
        Dataset::from_csv_path(path).with_context(|| format!("loading {}", path.display()))?;
    if !s.columns.is_empty() {
        let idx = s
            .columns
            .iter()
            .map(|c| data.variables().require(c))
            .collect::<relqual_core::Result<Vec<_>>>()?;
        data = data.select(&idx);
    }

    let obs = match s.method.discretization {
        Some(method) => {
            let spec = DiscretizationSpec {
                method,
                bins: s.bins,
                hartemink_initial_bins: s.hartemink_initial_bins,
            };
            Observations::Discrete(discretize(&data, &spec)?)
        }
        None => Observations::Continuous(data.clone()),
    };
    let hc = HcConfig {
        restarts: s.restarts,
        perturb: s.perturb,
        max_parents: s.max_parents,
        seed: s.seed,
    };
    let learner = learner_for(s.method.search, hc, s.alpha);
    let conf = if s.boot_samples > 0 {
        bootstrap_average(&obs, &learner, s.boot_samples, s.seed)?
    } else if s.method.search == SearchMethod::Map {
        obs.with_scorer(|sc| exact_map_edge_probabilities(sc, s.max_parents.min(MAX_EXACT_PARENTS)))?
    } else {
        let dag = learner.learn(&obs, s.seed)?;
        ArcConfidence::from_dags(obs.variables().clone(), &[dag])?
    };
    let rule = if s.strict { ThresholdRule::Above } else { ThresholdRule::AtLeast };
    let net = averaged_network_with(&conf, s.threshold, rule);

    ctx.write("arc_confidence.csv", |w| Ok(conf.write_csv(w)?))?;
    ctx.write_str("averaged_network.json", &(net.to_json() + "\n"))?;
    let inference = edge_inference(&net.dag, &data)?;
    ctx.write("edge_inference.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["from", "to", "coefficient", "p_value"])?;
        for e in &inference.edges {
            c.write_record([
                e.from.clone(),
                e.to.clone(),
                format!("{:.9}", e.coefficient),
                format!("{:.6e}", e.p_value),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    ctx.write("node_fit.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["node", "adj_r2"])?;
        for n in &inference.nodes {
            c.write_record([n.node.clone(), n.adj_r2.map(|r| format!("{r:.6}")).unwrap_or_default()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(RunStatus::Ok)
}
