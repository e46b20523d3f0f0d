//! Run identity and provenance written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Input path → sha256 of its bytes (directories hash their sorted file
    /// listing and contents).
    pub inputs: BTreeMap<String, String>,
    pub started_at: String,
    pub backends: BTreeMap<String, String>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_path(path: &Path) -> anyhow::Result<String> {
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        let mut h = Sha256::new();
        for e in entries {
            h.update(e.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update([0]);
            h.update(hash_path(&e)?.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(hash_bytes(&bytes))
    }
}

/// Timestamp for provenance. Deterministic runs use `SOURCE_DATE_EPOCH`
/// (or the epoch) so their outputs are byte-identical.
pub fn timestamp(deterministic: bool) -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok());
    let at = match (deterministic, secs) {
        (_, Some(s)) => chrono::DateTime::from_timestamp(s, 0).unwrap_or_default(),
        (true, None) => chrono::DateTime::UNIX_EPOCH,
        (false, None) => chrono::Utc::now(),
    };
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    /// The run id is a digest of the command, config, seed and input
    /// hashes, so identical invocations share it.
    pub fn new(
        command: &str,
        config: serde_json::Value,
        inputs: &[&Path],
        seed: u64,
        deterministic: bool,
    ) -> anyhow::Result<Self> {
        let mut hashes = BTreeMap::new();
        let mut ordered = Vec::with_capacity(inputs.len());
        for p in inputs {
            let h = hash_path(p)?;
            hashes.insert(p.display().to_string(), h.clone());
            ordered.push(h);
        }
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(config.to_string().as_bytes());
        h.update([0]);
        h.update(seed.to_le_bytes());
        // Paths are left out so identical inputs in different places agree.
        for v in &ordered {
            h.update(v.as_bytes());
        }
        let run_id = format!("{command}-{}", &hex::encode(h.finalize())[..16]);
        Ok(Self {
            run_id,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: hashes,
            started_at: timestamp(deterministic),
            backends: BTreeMap::new(),
        })
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join(format!("{}_manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
