//! Run manifest: which config produced which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// One emitted file, path relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Seeds the stage derived from the run seed, by label.
    pub seeds: BTreeMap<String, u64>,
    /// Hash of an external input file read by the stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock seconds. Not part of the manifest hash.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    /// Hash of everything above except timings.
    pub manifest_hash: String,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            stages: Vec::new(),
            manifest_hash: String::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.stages.iter().flat_map(|s| s.artifacts.iter())
    }

    pub fn compute_hash(&self) -> String {
        let mut m = self.clone();
        m.manifest_hash.clear();
        for s in &mut m.stages {
            s.seconds = 0.0;
        }
        sha256_hex(&serde_json::to_vec(&m).expect("manifest serializes"))
    }

    pub fn seal(&mut self) {
        self.manifest_hash = self.compute_hash();
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.as_ref().join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let m: Self = serde_json::from_slice(&fs::read(&path)?)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::format(format!(
                "{}: manifest version {} (expected {MANIFEST_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a file under `root` into an [`Artifact`].
pub fn artifact_of(root: &Path, rel: &str) -> Result<Artifact> {
    let bytes = fs::read(root.join(rel))?;
    Ok(Artifact {
        path: rel.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// True when every artifact exists under `root` with the recorded hash.
pub fn artifacts_intact(root: &Path, artifacts: &[Artifact]) -> bool {
    artifacts.iter().all(|a| match fs::read(root.join(&a.path)) {
        Ok(bytes) => bytes.len() as u64 == a.bytes && sha256_hex(&bytes) == a.sha256,
        Err(_) => false,
    })
}
