//! `run.json`: what a subcommand read, what it wrote and with which
//! effective config, so a run can be repeated exactly.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct FileRecord {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    subcommand: &'a str,
    args: Vec<String>,
    config_sha256: String,
    config: &'a ExperimentConfig,
    inputs: &'a [FileRecord],
    outputs: &'a [FileRecord],
    threads: usize,
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    infield: &'static str,
    cli: &'static str,
}

pub struct Provenance {
    subcommand: &'static str,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Provenance {
    pub fn new(subcommand: &'static str) -> Provenance {
        Provenance {
            subcommand,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads a file and records its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.input_bytes(path, &bytes);
        Ok(bytes)
    }

    pub fn input_bytes(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn input_file(&mut self, path: &Path) -> Result<()> {
        self.read(path).map(|_| ())
    }

    /// Writes `bytes` to `path` (creating parents) and records it.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.output_bytes(path, bytes);
        Ok(())
    }

    /// Records a file some library call already wrote.
    pub fn output_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading back {}", path.display()))?;
        self.output_bytes(path, &bytes);
        Ok(())
    }

    fn output_bytes(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish(self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        let config_json = serde_json::to_vec(config)?;
        let record = RunRecord {
            subcommand: self.subcommand,
            args: std::env::args().collect(),
            config_sha256: sha256_hex(&config_json),
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            threads: rayon::current_num_threads(),
            versions: Versions {
                infield: infield::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
            },
        };
        let path = dir.join("run.json");
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, serde_json::to_string_pretty(&record)? + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
