//! Output directory handling and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use geohedonic::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a BTreeMap<String, serde_json::Value>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

/// Collects a run's artifacts. With an output directory every artifact is
/// written there and a manifest records its hash; without one, only the
/// primary artifact is printed to stdout.
pub struct Run {
    command: String,
    dir: Option<PathBuf>,
    config: BTreeMap<String, serde_json::Value>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn new(command: &str, dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            command: command.to_string(),
            dir,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("config values serialize");
        self.config.insert(key.to_string(), v);
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// The artifact printed when there is no output directory.
    pub fn primary(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        match &self.dir {
            Some(_) => self.secondary(name, bytes),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
                Ok(())
            }
        }
    }

    /// An artifact that is only kept when writing to a directory.
    pub fn secondary(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(d) = &self.dir {
            fs::write(d.join(name), bytes)?;
            self.outputs.insert(name.to_string(), sha256_hex(bytes));
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let Some(d) = &self.dir else {
            return Ok(());
        };
        let m = Manifest {
            tool: "geohedonic",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        // Round-trip through Value so every object's keys come out sorted.
        let v = serde_json::to_value(&m)?;
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        fs::write(d.join("manifest.json"), text)?;
        Ok(())
    }
}
