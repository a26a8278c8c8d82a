use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// What a run produced and how to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config_hash: String,
    pub code_version: String,
    /// Base seed of each random stream.
    pub seeds: BTreeMap<String, u64>,
    /// Paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
    pub rounds: u64,
    pub env_steps: u64,
    pub frozen_models: usize,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Checks that every listed artifact exists and every file under `dir` is listed.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let listed: BTreeSet<&str> = self.artifacts.iter().map(String::as_str).collect();
        for a in &listed {
            if !dir.join(a).is_file() {
                return Err(Error::DataIntegrity(format!("manifest lists missing artifact {a}")));
            }
        }
        for f in list_files(dir)? {
            if !listed.contains(f.as_str()) {
                return Err(Error::DataIntegrity(format!("artifact {f} is not in the manifest")));
            }
        }
        Ok(())
    }
}

/// Every regular file under `dir`, relative and `/`-separated, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path.is_file() {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
