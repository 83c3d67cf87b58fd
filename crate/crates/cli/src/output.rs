//! Atomic CSV and JSON artifacts plus the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::CliError;

const UNITS: &str = "hbar = k_B = |J| = F0 = a0 = 1; rates in units of d0|J|/hbar with d0 = 1; \
                     temperatures in |J|/k_B; S_Phi in F0^2/(d0|J|/hbar)";

/// Writes `path.partial`, syncs it, then renames it over `path`. A crash
/// leaves at most the `.partial` file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", partial.display()));
    let mut f = fs::File::create(&partial).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&partial, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// A CSV table built in memory. Floats use Rust's shortest round-trip
/// decimal form.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

#[derive(Serialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub engine: String,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub units: &'static str,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub derived: Value,
    pub notes: Vec<String>,
    pub files: Vec<FileEntry>,
    pub wall_time_s: f64,
}

/// Collects artifacts for one command and finishes with the manifest.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
    start: Instant,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        let bytes = t.to_bytes()?;
        write_atomic(&self.dir.join(name), &bytes)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            rows: t.len(),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        command: &str,
        engine: &str,
        config: &RunConfig,
        seeds: Vec<u64>,
        derived: Value,
        notes: Vec<String>,
    ) -> Result<PathBuf, CliError> {
        let m = Manifest {
            tool: "spinflux",
            version: env!("CARGO_PKG_VERSION"),
            command,
            engine: engine.to_string(),
            config_hash: config.hash(),
            config,
            units: UNITS,
            master_seed: config.ensemble.master_seed,
            seeds,
            derived,
            notes,
            files: self.files,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| CliError::Other(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}
