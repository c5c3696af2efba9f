//! The `relqual` command line: argument and config resolution, the
//! subcommands, and run manifests.

pub mod cli;
pub mod commands;
pub mod manifest;
pub mod settings;

use std::time::Instant;

use anyhow::Context;

use crate::cli::{Cli, Command};
use crate::manifest::{RunContext, RunManifest, RunStatus};
use crate::settings::{
    ConfigFile, FetchSettings, LearnSettings, QualitySettings, RfSettings, SimStudySettings, DEFAULT_SEED,
};

/// A command with its fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Simstudy(SimStudySettings),
    Learn(LearnSettings),
    Quality(QualitySettings),
    Rf(RfSettings),
    Fetch(FetchSettings),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::Simstudy(_) => "simstudy",
            Resolved::Learn(_) => "learn",
            Resolved::Quality(_) => "quality",
            Resolved::Rf(_) => "rf",
            Resolved::Fetch(_) => "fetch",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Resolved::Simstudy(s) => s.seed,
            Resolved::Learn(s) => s.seed,
            Resolved::Quality(s) => s.seed,
            Resolved::Rf(s) => s.seed,
            Resolved::Fetch(s) => s.seed,
        }
    }

    pub fn config_json(&self) -> serde_json::Value {
        let v = match self {
            Resolved::Simstudy(s) => serde_json::to_value(s),
            Resolved::Learn(s) => serde_json::to_value(s),
            Resolved::Quality(s) => serde_json::to_value(s),
            Resolved::Rf(s) => serde_json::to_value(s),
            Resolved::Fetch(s) => serde_json::to_value(s),
        };
        v.expect("settings serialize")
    }

    /// Settings recorded in a manifest.
    pub fn from_manifest(m: &RunManifest) -> anyhow::Result<Self> {
        fn load<T: serde::de::DeserializeOwned>(m: &RunManifest) -> anyhow::Result<T> {
            serde_json::from_value(m.config.clone()).context("manifest config does not match its command")
        }
        let mut r = match m.command.as_str() {
            "simstudy" => Resolved::Simstudy(load(m)?),
            "learn" => Resolved::Learn(load(m)?),
            "quality" => Resolved::Quality(load(m)?),
            "rf" => Resolved::Rf(load(m)?),
            "fetch" => Resolved::Fetch(load(m)?),
            other => anyhow::bail!("manifest names unknown command {other:?}"),
        };
        r.set_seed(m.seed);
        Ok(r)
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            Resolved::Simstudy(s) => s.seed = seed,
            Resolved::Learn(s) => s.seed = seed,
            Resolved::Quality(s) => s.seed = seed,
            Resolved::Rf(s) => s.seed = seed,
            Resolved::Fetch(s) => s.seed = seed,
        }
    }

    pub fn run(&self, ctx: &mut RunContext) -> anyhow::Result<RunStatus> {
        match self {
            Resolved::Simstudy(s) => commands::simstudy::run(s, ctx),
            Resolved::Learn(s) => commands::learn::run(s, ctx),
            Resolved::Quality(s) => commands::quality::run(s, ctx),
            Resolved::Rf(s) => commands::rf::run(s, ctx),
            Resolved::Fetch(s) => commands::fetch::run(s, ctx),
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simstudy(_) => "simstudy",
        Command::Learn(_) => "learn",
        Command::Quality(_) => "quality",
        Command::Rf(_) => "rf",
        Command::Fetch(_) => "fetch",
        Command::Replay(_) => "replay",
    }
}

/// Settings for the parsed command line: flags over the config file over
/// defaults. Also returns the worker count, if one was set.
pub fn resolve(cli: &Cli) -> anyhow::Result<(Resolved, Option<usize>)> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let jobs = cli.jobs.or(file.jobs);
    let mut r = match &cli.command {
        Command::Simstudy(a) => {
            let mut s = file.simstudy;
            a.apply(&mut s);
            Resolved::Simstudy(s)
        }
        Command::Learn(a) => {
            let mut s = file.learn;
            a.apply(&mut s);
            Resolved::Learn(s)
        }
        Command::Quality(a) => {
            let mut s = file.quality;
            a.apply(&mut s);
            Resolved::Quality(s)
        }
        Command::Rf(a) => {
            let mut s = file.rf;
            a.apply(&mut s);
            Resolved::Rf(s)
        }
        Command::Fetch(a) => {
            let mut s = file.fetch;
            a.apply(&mut s);
            Resolved::Fetch(s)
        }
        Command::Replay(a) => {
            let m = RunManifest::load(&a.manifest)?;
            return Ok((Resolved::from_manifest(&m)?, jobs));
        }
    };
    r.set_seed(seed);
    Ok((r, jobs))
}

/// Run the command line and return the process exit code: 0 on success, 1
/// on error or total failure, 2 when some packages or inputs failed.
pub fn execute(cli: Cli) -> i32 {
    let started = Instant::now();
    let mut ctx = match RunContext::new(&cli.out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return RunStatus::Failed.exit_code();
        }
    };
    let resolved = resolve(&cli);
    let (command, seed, config) = match &resolved {
        Ok((r, _)) => (r.name(), r.seed(), r.config_json()),
        Err(_) => (command_name(&cli.command), cli.seed.unwrap_or(DEFAULT_SEED), serde_json::Value::Null),
    };
    let outcome = resolved.and_then(|(r, jobs)| {
        if let Some(j) = jobs {
            if j == 0 {
                anyhow::bail!("invalid configuration at jobs: must be at least 1");
            }
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
                log::debug!("thread pool already configured: {e}");
            }
        }
        r.run(&mut ctx)
    });
    let (status, error) = match outcome {
        Ok(RunStatus::Failed) => {
            eprintln!("error: every input failed; see failures.csv in {}", cli.out.display());
            (RunStatus::Failed, Some("every input failed".to_string()))
        }
        Ok(RunStatus::Partial) => {
            eprintln!("warning: some inputs failed; see failures.csv in {}", cli.out.display());
            (RunStatus::Partial, None)
        }
        Ok(s) => (s, None),
        Err(e) => {
            eprintln!("error: {e:#}");
            (RunStatus::Failed, Some(format!("{e:#}")))
        }
    };
    let wall = started.elapsed().as_secs_f64();
    if let Err(e) = ctx.finish(command, seed, config, wall, status, error) {
        eprintln!("error: writing manifest: {e:#}");
        return RunStatus::Failed.exit_code();
    }
    status.exit_code()
}
