use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use hoopstat::artifact::{json_bytes, sha256_file, write_file};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, written next to its outputs. Replaying
/// `args` reproduces every file in `outputs` byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Arguments after the program name, with the seed made explicit.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub flags: BTreeMap<String, serde_json::Value>,
    /// Input path to content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the output directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_seconds: f64,
}

pub struct ManifestBuilder {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub flags: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            args,
            seed,
            flags: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.flags.insert(name.to_string(), serde_json::to_value(value).expect("flag values serialise"));
        self
    }

    pub fn input_file(&mut self, path: &Path) -> Result<&mut Self> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    pub fn input_digest(&mut self, path: &Path, digest: String) -> &mut Self {
        self.inputs.insert(path.display().to_string(), digest);
        self
    }

    /// Hashes `outputs` and writes `out/manifest.json`.
    pub fn write(self, out: &Path, outputs: &[PathBuf], elapsed: Duration) -> Result<RunManifest> {
        let mut hashes = BTreeMap::new();
        for path in outputs {
            let rel = path.strip_prefix(out).unwrap_or(path).to_string_lossy().replace('\\', "/");
            hashes.insert(rel, sha256_file(path)?);
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            args: self.args,
            seed: self.seed,
            flags: self.flags,
            inputs: self.inputs,
            outputs: hashes,
            wall_seconds: elapsed.as_secs_f64(),
        };
        write_file(&out.join(MANIFEST_FILE), &json_bytes(&manifest)).context("writing run manifest")?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
