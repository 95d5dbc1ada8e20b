use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Record written next to every output set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub verb: String,
    pub created_unix: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

/// Writes `<verb>.manifest.json` into `dir`, so that several verbs can share a directory.
pub fn write_manifest(
    dir: &Path,
    verb: &str,
    config: &impl Serialize,
    outputs: &[PathBuf],
    summary: serde_json::Value,
) -> Result<PathBuf> {
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let m = Manifest {
        tool: "pps".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        verb: verb.into(),
        created_unix,
        threads: rayon::current_num_threads(),
        config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
        outputs: outputs.iter().map(|p| p.file_name().map(PathBuf::from).unwrap_or_else(|| p.clone())).collect(),
        summary,
    };
    let path = dir.join(format!("{verb}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?)?;
    Ok(path)
}
