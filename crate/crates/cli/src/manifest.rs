use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Record of one stage invocation: the resolved configuration and the
/// SHA-256 of every input it read. Contains no timestamps, so identical
/// runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub stage: &'a str,
    pub version: &'a str,
    pub inputs: BTreeMap<String, String>,
    pub config: &'a RunConfig,
}

impl<'a> Manifest<'a> {
    pub fn new(stage: &'a str, config: &'a RunConfig) -> Self {
        Self {
            stage,
            version: env!("CARGO_PKG_VERSION"),
            inputs: BTreeMap::new(),
            config,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("manifest-{}.toml", self.stage));
        let text = toml::to_string(self).context("cannot serialize manifest")?;
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
