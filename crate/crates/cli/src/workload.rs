//! Benchmark workloads: a TOML file listing named queries to run in order.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Workload {
    #[serde(default)]
    pub query: Vec<WorkloadQuery>,
}

#[derive(Debug, Deserialize)]
pub struct WorkloadQuery {
    pub name: String,
    pub sql: String,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
}

fn default_repeat() -> usize {
    1
}

pub fn load(path: &Path) -> Result<Workload> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading workload {}", path.display()))?;
    let workload: Workload =
        toml::from_str(&text).with_context(|| format!("parsing workload {}", path.display()))?;
    Ok(workload)
}
