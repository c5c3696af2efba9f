//! Run manifests and the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Failed => 1,
            RunStatus::Partial => 2,
        }
    }
}

/// Everything needed to rerun a command: the resolved settings include
/// every input path and the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    /// Paths relative to the output directory, sorted.
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Output directory that records every file written to it.
pub struct RunContext {
    out: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<InputDigest>,
}

impl RunContext {
    pub fn new(out: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(RunContext {
            out: out.to_path_buf(),
            outputs: Vec::new(),
            inputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Record an input file and its digest.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    /// Create `rel` under the output directory (parents included) and pass
    /// a buffered writer to `f`.
    pub fn write<F>(&mut self, rel: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> anyhow::Result<()>,
    {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
        Ok(())
    }

    pub fn write_str(&mut self, rel: &str, text: &str) -> anyhow::Result<()> {
        self.write(rel, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// Write `manifest.json` and return it.
    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        wall_time_secs: f64,
        status: RunStatus,
        error: Option<String>,
    ) -> anyhow::Result<RunManifest> {
        self.outputs.sort();
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_secs,
            status,
            error,
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.out.join(MANIFEST), json + "\n")?;
        Ok(manifest)
    }
}

/// File name for a package: path separators in scoped names become `__`.
pub fn package_file_stem(package: &str) -> String {
    package.replace(['/', '\\'], "__")
}
