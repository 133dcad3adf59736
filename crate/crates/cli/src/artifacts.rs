//! Run directory layout and the hash manifest that guards it.
//!
//! Every stage writes its outputs through [`RunDir::write`], which records the
//! SHA-256 of the bytes in `manifest.json`. Reads go through
//! [`RunDir::read`], which refuses files that are missing or whose bytes no
//! longer match the recorded hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const CONFIG: &str = "config.toml";
pub const MODEL: &str = "model.naf";
pub const RECORD: &str = "record.wmr";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const CODEBOOK: &str = "codebook.cbk";
pub const CENTROIDS: &str = "centroids.cen";
pub const ENCODE_SUMMARY: &str = "encode.json";
pub const REPORT: &str = "report.json";

pub fn triggers_file(mode: naf_core::TriggerMode) -> String {
    format!("triggers_{mode}.trig")
}

pub fn attack_dir(label: &str) -> String {
    format!("attacks/{label}")
}

pub fn attack_model(label: &str, trial: usize) -> String {
    format!("attacks/{label}/trial_{trial:03}.naf")
}

pub fn attack_truth(label: &str) -> String {
    format!("attacks/{label}/truth.json")
}

pub fn trials_file(label: &str) -> String {
    format!("trials_{label}.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(RunDir { root })
    }

    /// An existing run directory; fails if it has no manifest.
    pub fn open(root: impl Into<PathBuf>) -> CliResult<Self> {
        let dir = RunDir { root: root.into() };
        if !dir.path(MANIFEST).exists() {
            return Err(CliError::Integrity(format!(
                "{} is not a run directory (no {MANIFEST}); run `naf train` first",
                dir.root.display()
            )));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self) -> CliResult<BTreeMap<String, String>> {
        let path = self.path(MANIFEST);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Forgets every recorded artifact; the first stage calls this so a
    /// retrained run cannot mix with outputs of an earlier configuration.
    pub fn reset(&self) -> CliResult<()> {
        let timings = self.path(TIMINGS);
        if timings.exists() {
            std::fs::remove_file(&timings).map_err(|e| CliError::io(&timings, e))?;
        }
        self.save_manifest(&BTreeMap::new())
    }

    fn save_manifest(&self, manifest: &BTreeMap<String, String>) -> CliResult<()> {
        self.write_plain(MANIFEST, format!("{}\n", serde_json::to_string_pretty(manifest)?).as_bytes())
    }

    fn write_plain(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    /// Writes a file without recording it; only for outputs no stage reads.
    pub fn write_unrecorded(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        self.write_plain(name, bytes)
    }

    /// Writes an artifact and records its hash.
    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<String> {
        self.write_many(&[(name.to_string(), bytes.to_vec())]).map(|mut h| h.remove(0))
    }

    /// Writes several artifacts with a single manifest update.
    pub fn write_many(&self, items: &[(String, Vec<u8>)]) -> CliResult<Vec<String>> {
        let mut manifest = self.manifest()?;
        let mut hashes = Vec::with_capacity(items.len());
        for (name, bytes) in items {
            self.write_plain(name, bytes)?;
            let h = sha256_hex(bytes);
            manifest.insert(name.clone(), h.clone());
            hashes.push(h);
        }
        self.save_manifest(&manifest)?;
        Ok(hashes)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<String> {
        self.write(name, json_bytes(value)?.as_slice())
    }

    /// Reads an artifact, checking it against the manifest.
    pub fn read(&self, name: &str) -> CliResult<Vec<u8>> {
        let manifest = self.manifest()?;
        let expected = manifest.get(name).ok_or_else(|| {
            CliError::Integrity(format!("artifact `{name}` is not recorded in the manifest; run the stage that produces it"))
        })?;
        let path = self.path(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Integrity(format!("artifact `{name}` is missing ({e}); rerun the stage that produces it")))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(CliError::Integrity(format!(
                "artifact `{name}` has hash {actual}, manifest records {expected}"
            )));
        }
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> CliResult<T> {
        Ok(serde_json::from_slice(&self.read(name)?)?)
    }

    pub fn has(&self, name: &str) -> CliResult<bool> {
        Ok(self.manifest()?.contains_key(name))
    }

    /// Wall-clock seconds per stage; kept outside the manifest because it is
    /// the one intentionally non-deterministic output.
    pub fn record_timing(&self, stage: &str, seconds: f64) -> CliResult<()> {
        let mut timings = self.timings()?;
        timings.insert(stage.to_string(), seconds);
        self.write_plain(TIMINGS, &json_bytes(&timings)?)
    }

    pub fn timings(&self) -> CliResult<BTreeMap<String, f64>> {
        let path = self.path(TIMINGS);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_artifact_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        run.write("a.bin", b"hello").unwrap();
        assert_eq!(run.read("a.bin").unwrap(), b"hello");
        std::fs::write(run.path("a.bin"), b"hellp").unwrap();
        let err = run.read("a.bin").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("manifest records"));
    }

    #[test]
    fn missing_artifact_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        run.write("a.bin", b"x").unwrap();
        std::fs::remove_file(run.path("a.bin")).unwrap();
        assert_eq!(run.read("a.bin").unwrap_err().exit_code(), 2);
        assert_eq!(run.read("never.bin").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn nested_names_create_directories() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        run.write(&attack_model("np", 3), b"m").unwrap();
        assert!(run.path("attacks/np/trial_003.naf").exists());
        assert!(run.has("attacks/np/trial_003.naf").unwrap());
    }
}
