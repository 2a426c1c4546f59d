use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const DETERMINISM_NOTE: &str =
    "fixed step sizes and quadrature panels; no randomness except the explicit --seed of the polynomial suite";

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub determinism: String,
    pub tool_version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// Digest over the config bytes and the effective options.
    pub fn new(command: &str, config: &[u8], options: &[(&str, String)]) -> Self {
        let mut h = Sha256::new();
        h.update(config);
        for (k, v) in options {
            h.update([0u8]);
            h.update(k.as_bytes());
            h.update([b'=']);
            h.update(v.as_bytes());
        }
        Self {
            command: command.to_string(),
            config_digest: hex::encode(h.finalize()),
            determinism: DETERMINISM_NOTE.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if !self.outputs.contains(&name) {
            self.outputs.push(name);
        }
    }

    /// Writes `<stem>.manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> std::io::Result<PathBuf> {
        let path = dir.join(format!("{stem}.manifest.toml"));
        let text = toml::to_string(self).expect("manifest serializes");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
