//! Run manifests: every command writes one next to its outputs so a run can
//! be identified and reproduced. No timestamps — equal configurations must
//! produce byte-equal manifests.

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the raw config file text ("-" when no config was given).
    pub config_hash: String,
    pub seed: u64,
    pub inputs: serde_json::Value,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config_text: Option<&str>, seed: u64) -> Self {
        let config_hash = match config_text {
            Some(text) => {
                let mut hasher = Sha256::new();
                hasher.update(text.as_bytes());
                format!("{:x}", hasher.finalize())
            }
            None => "-".to_string(),
        };
        Self {
            artifact: "dpltm",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash,
            seed,
            inputs: serde_json::Value::Null,
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
