//! Report files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Reals in CSV: 17 significant digits, enough to round-trip a double.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    write_bytes(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)
}

/// `out` with `suffix` appended to the file name, e.g. `rate.csv` -> `rate.csv.fit.json`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

#[derive(Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub phases: Vec<(String, f64)>,
    pub outputs: Vec<OutputDigest>,
}

/// Collects phase timings and output files while a command runs.
pub struct Recorder {
    phases: Vec<(String, f64)>,
    outputs: Vec<PathBuf>,
    current: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder { phases: Vec::new(), outputs: Vec::new(), current: None }
    }

    pub fn phase(&mut self, name: &str) {
        self.close();
        self.current = Some((name.to_string(), Instant::now()));
    }

    fn close(&mut self) {
        if let Some((n, t)) = self.current.take() {
            self.phases.push((n, t.elapsed().as_secs_f64()));
        }
    }

    pub fn output(&mut self, p: PathBuf) {
        self.outputs.push(p);
    }

    pub fn finish(mut self, command: &str, config: BTreeMap<String, String>) -> io::Result<RunManifest> {
        self.close();
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let bytes = fs::read(p)?;
            outputs.push(OutputDigest {
                path: p.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        let mut versions = BTreeMap::new();
        versions.insert("lieforge".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("net_cache".to_string(), lieforge::net::cache::CACHE_VERSION.to_string());
        Ok(RunManifest { command: command.to_string(), config, versions, phases: self.phases, outputs })
    }
}
