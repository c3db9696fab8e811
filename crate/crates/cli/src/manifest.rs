//! Run manifests: what ran, on which inputs, producing which files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::usage;

pub const MANIFEST: &str = "manifest.txt";
pub const EFFECTIVE_CONFIG: &str = "config.effective";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

pub struct RunManifest {
    command: String,
    config_hash: String,
    seed: u64,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<String>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl RunManifest {
    /// `config` is the canonical effective config; its hash identifies the run.
    pub fn new(command: &str, config: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: sha256_hex(config.as_bytes()),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path, contents: &[u8]) {
        self.inputs.push((path.to_path_buf(), sha256_hex(contents)));
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn timing(&mut self, name: impl Into<String>, seconds: f64) {
        self.timings.push((name.into(), seconds));
    }

    /// Writes `manifest.txt` into `dir` via a temporary file and a rename.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let total = self.started.elapsed().as_secs_f64();
        self.timings.push(("total".into(), total));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).context("creating manifest")?;
        writeln!(tmp, "command={}", self.command)?;
        writeln!(tmp, "version=ha-array {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(tmp, "config_hash=sha256:{}", self.config_hash)?;
        writeln!(tmp, "config={EFFECTIVE_CONFIG}")?;
        writeln!(tmp, "seed={}", self.seed)?;
        for (i, (path, hash)) in self.inputs.iter().enumerate() {
            writeln!(tmp, "input.{}={}", i + 1, path.display())?;
            writeln!(tmp, "input.{}.sha256={hash}", i + 1)?;
        }
        for (i, name) in self.outputs.iter().enumerate() {
            writeln!(tmp, "output.{}={name}", i + 1)?;
        }
        for (name, secs) in &self.timings {
            writeln!(tmp, "seconds.{name}={secs:.3}")?;
        }
        tmp.flush()?;
        tmp.persist(dir.join(MANIFEST)).context("writing manifest")?;
        Ok(())
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
