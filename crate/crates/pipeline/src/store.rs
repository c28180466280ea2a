//! File output helpers: content addressing, hashing and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use forge_clients::ClientEndpoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, json_err, PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames, so concurrent writers of
/// identical content never expose a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{name}.{}.{}.tmp", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Hashes every regular file under `root` except the manifest itself,
/// keyed by `/`-separated relative path.
pub fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err(dir))?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            out.insert(key, sha256_hex(&bytes));
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Record of one command run. Contains nothing that varies between
/// identical runs (no timestamps, no absolute output paths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Hashes of the input files, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub endpoints: Vec<ClientEndpoint>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, endpoints: Vec<ClientEndpoint>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            endpoints,
            status: RunStatus::Ok,
            failed_stage: None,
            error: None,
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        self.inputs.insert(path.to_string_lossy().into_owned(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn mark_failed(&mut self, stage: &str, err: &PipelineError) {
        self.status = RunStatus::Failed;
        self.failed_stage = Some(stage.to_string());
        self.error = Some(err.to_string());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(json_err(path))
    }

    /// Writes the manifest at `path`. If one already exists for the same
    /// command, config and seed, output hashes must match it.
    pub fn write_checked(&self, path: &Path) -> Result<()> {
        let previous = if path.exists() { Manifest::read(path).ok() } else { None };
        write_atomic(path, &self.to_bytes())?;
        if let Some(prev) = previous {
            if prev.command == self.command
                && prev.config == self.config
                && prev.seed == self.seed
                && prev.inputs == self.inputs
            {
                let diffs = diff_hashes(&prev.outputs, &self.outputs);
                if !diffs.is_empty() {
                    return Err(PipelineError::HashMismatch(diffs));
                }
            }
        }
        Ok(())
    }
}

/// Paths whose hashes differ, or that exist on only one side.
pub fn diff_hashes(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> Vec<String> {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}

/// Recomputes the hashes of the files a manifest lists and returns the
/// paths that are missing or differ.
pub fn verify_outputs(dir: &Path, manifest: &Manifest) -> Vec<String> {
    manifest
        .outputs
        .iter()
        .filter(|(rel, hash)| fs::read(dir.join(rel.as_str())).map(|b| sha256_hex(&b) != **hash).unwrap_or(true))
        .map(|(rel, _)| rel.clone())
        .collect()
}
