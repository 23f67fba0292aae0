//! Run manifests: one JSON document per run, written alongside the outputs,
//! recording the exact configuration, input hashes, and output hashes so
//! reruns can be diffed file-by-file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub version: String,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn hash_all(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for p in paths {
        map.insert(p.display().to_string(), sha256_hex(p)?);
    }
    Ok(map)
}

/// Write the manifest next to the primary output: `<dir>/manifest.json` for
/// directory outputs, `<file>.manifest.json` otherwise.
pub fn write_manifest(
    command: &str,
    config: serde_json::Value,
    input_paths: &[PathBuf],
    output_paths: &[PathBuf],
    primary_output: &Path,
) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        inputs: hash_all(input_paths)?,
        outputs: hash_all(output_paths)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let path = if primary_output.is_dir() {
        primary_output.join("manifest.json")
    } else {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string());
        name.push_str(".manifest.json");
        primary_output.with_file_name(name)
    };
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
