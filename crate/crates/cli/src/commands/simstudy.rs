use anyhow::Context;
use relqual_core::simstudy::{default_truth, run_simstudy, SimStudyConfig, SimStudyReport};
use relqual_core::{Error, GaussianBn, HcConfig};

use crate::manifest::{RunContext, RunStatus};
use crate::settings::SimStudySettings;

pub fn to_config(s: &SimStudySettings) -> anyhow::Result<SimStudyConfig> {
    let truth = match &s.truth {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading truth {}", p.display()))?;
            GaussianBn::from_json(&text).with_context(|| format!("parsing truth {}", p.display()))?
        }
        None => default_truth(),
    };
    Ok(SimStudyConfig {
        truth,
        replicates: s.replicates,
        sample_size: s.sample_size,
        methods: s.methods.clone(),
        thresholds: s.thresholds.clone(),
        boot_samples: s.boot_samples,
        hc: HcConfig {
            restarts: s.restarts,
            perturb: s.perturb,
            max_parents: s.max_parents,
            seed: 0,
        },
        alpha: s.alpha,
        bins: s.bins,
        hartemink_initial_bins: s.hartemink_initial_bins,
        seed: s.seed,
    })
}

/// Validation with field paths rooted at `simstudy.`.
pub fn validate(cfg: &SimStudyConfig) -> anyhow::Result<()> {
    cfg.validate().map_err(|e| match e {
        Error::InvalidConfig { field, message } => {
            let field = match field.strip_prefix("hc.") {
                Some(rest) => rest.to_string(),
                None => field,
            };
            anyhow::anyhow!("invalid configuration at simstudy.{field}: {message}")
        }
        e => e.into(),
    })
}

pub fn run(s: &SimStudySettings, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
    if let Some(p) = &s.truth {
        ctx.input(p)?;
    }
    let cfg = to_config(s)?;
    validate(&cfg)?;
    let report = run_simstudy(&cfg)?;
    write_report(&report, ctx)?;
    if report.failures.is_empty() {
        Ok(RunStatus::Ok)
    } else {
        log::warn!("{} method runs failed; see failures.csv", report.failures.len());
        Ok(RunStatus::Partial)
    }
}

fn write_report(report: &SimStudyReport, ctx: &mut RunContext) -> anyhow::Result<()> {
    ctx.write("simstudy.csv", |w| Ok(report.write_csv(w)?))?;
    ctx.write_str("simstudy.txt", &report.to_table())?;
    ctx.write("failures.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["replicate", "method", "reason"])?;
        for f in &report.failures {
            c.write_record([f.replicate.to_string(), f.method.clone(), f.reason.clone()])?;
        }
        c.flush()?;
        Ok(())
    })
}
