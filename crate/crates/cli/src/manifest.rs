use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Run metadata written next to every output file as `<out>.manifest.json`.
/// Re-running `argv` reproduces the outputs exactly; `wall_clock_seconds`
/// and `threads` are the only fields that vary between such runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
