//! The run manifest (`<workdir>/manifest.json`) and the workdir lock.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest of the stage's configuration slice and input fingerprints.
    pub key: String,
    pub inputs: BTreeMap<String, String>,
    /// Output name → fingerprint (file digest, or store/encoder fingerprint).
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub version: String,
    pub config_digest: String,
    /// Effective configuration of the most recent stage run.
    pub config: Option<RunConfig>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(workdir: &Path) -> CliResult<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?)
    }

    /// Atomic replace: write a temporary file, then rename over the manifest.
    pub fn save(&self, workdir: &Path) -> CliResult<()> {
        let path = workdir.join(MANIFEST_FILE);
        let tmp = workdir.join(".manifest.json.tmp");
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, json).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Exclusive ownership of a workdir for the lifetime of the value.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(workdir).with_context(|| format!("creating {}", workdir.display()))?;
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkdirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let owner = std::fs::read_to_string(&path).unwrap_or_default();
                Err(CliError::Data(anyhow::anyhow!(
                    "{} is in use by another run (pid {}); delete {} if that run is gone",
                    workdir.display(),
                    owner.trim(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::Data(
                anyhow::Error::new(e).context(format!("creating {}", path.display())),
            )),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_fails_until_first_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let first = WorkdirLock::acquire(dir.path()).unwrap();
        assert!(matches!(WorkdirLock::acquire(dir.path()), Err(CliError::Data(_))));
        drop(first);
        WorkdirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), RunManifest::default());
        let mut m = RunManifest::default();
        m.stages.insert(
            "segment".into(),
            StageRecord {
                key: "k".into(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::from([("train".into(), "abc".into())]),
                seconds: 0.5,
                finished_unix: 1,
            },
        );
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }
}
