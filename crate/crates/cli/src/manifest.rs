//! Per-directory record of what produced the artifacts inside it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that wrote the directory.
    pub command: String,
    /// Full argument list of the invocation.
    pub arguments: Vec<String>,
    /// Canonical training config, when one applies.
    pub config: Option<String>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: Option<String>,
    /// Paths relative to the directory.
    pub artifacts: Vec<String>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl RunManifest {
    pub fn start(command: &str, arguments: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            arguments,
            config: None,
            config_hash: None,
            seed: None,
            started: now(),
            finished: None,
            artifacts: Vec::new(),
        }
    }

    pub fn with_config(mut self, text: String, seed: u64) -> Self {
        self.config_hash = Some(content_hash(&text));
        self.config = Some(text);
        self.seed = Some(seed);
        self
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(CliError::io(path.display().to_string()))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if let (Some(cfg), Some(hash)) = (&m.config, &m.config_hash) {
            if &content_hash(cfg) != hash {
                return Err(CliError::Input(format!("{}: config hash does not match the stored config", path.display())));
            }
        }
        Ok(m)
    }

    /// Records every file under `dir` (except the manifest) and writes the manifest.
    pub fn finish(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished = Some(now());
        self.artifacts = list_files(dir, dir)?;
        self.artifacts.retain(|a| a != MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n").map_err(CliError::io(dir.display().to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n").map_err(CliError::io(dir.display().to_string()))
    }
}

fn list_files(root: &Path, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(CliError::io(dir.display().to_string()))?
        .collect::<Result<_, _>>()
        .map_err(CliError::io(dir.display().to_string()))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            out.extend(list_files(root, &p)?);
        } else if let Ok(rel) = p.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("metrics.csv"), "a\n").unwrap();
        fs::create_dir(dir.path().join("checkpoints")).unwrap();
        fs::write(dir.path().join("checkpoints/latest.ckpt"), "x").unwrap();
        RunManifest::start("train", vec!["train".into()]).with_config("mode = dve\n".into(), 4).finish(dir.path()).unwrap();
        let m = RunManifest::load(dir.path()).unwrap();
        assert_eq!(m.artifacts, vec!["checkpoints/latest.ckpt".to_string(), "metrics.csv".to_string()]);
        assert_eq!(m.seed, Some(4));

        let mut tampered = m.clone();
        tampered.config = Some("mode = rl2\n".into());
        tampered.write(dir.path()).unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
    }
}
