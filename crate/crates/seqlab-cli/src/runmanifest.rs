//! The run manifest written next to every trained model: the fully
//! resolved configuration, seed, and input digests, enough to reproduce
//! the run byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use seqlab::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub arch: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, arch: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            arch: arch.to_string(),
            seed,
            config,
            input_digests: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.input_digests
            .insert(name.to_string(), sha256_hex(path)?);
        Ok(())
    }

    /// Writes `<model_path>.run.json`.
    pub fn write_alongside(&self, model_path: &Path) -> Result<()> {
        let mut os = model_path.as_os_str().to_os_string();
        os.push(".run.json");
        let mut json = serde_json::to_string_pretty(self).expect("manifest serialize");
        json.push('\n');
        fs::write(PathBuf::from(os), json)?;
        Ok(())
    }
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
