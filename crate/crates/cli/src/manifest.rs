use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lens_core::LensError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub tool_version: String,
    pub checkpoint_version: u32,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_secs: u64,
    pub wall_seconds: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<FileDigest> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Collects a manifest while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &ExperimentConfig) -> Self {
        let mut snapshot = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        if let serde_json::Value::Object(map) = &mut snapshot {
            map.insert(
                "flags".to_string(),
                serde_json::to_value(config.flags).unwrap_or(serde_json::Value::Null),
            );
        }
        ManifestBuilder {
            command: command.to_string(),
            config: snapshot,
            seeds: BTreeMap::from([("seed".to_string(), config.seed)]),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Hashes every recorded file and writes `manifest-<command>.json` into
    /// `dir`.
    pub fn write(self, dir: &Path) -> CliResult<PathBuf> {
        let digest = |paths: &[PathBuf]| {
            paths
                .iter()
                .map(|p| sha256_file(p))
                .collect::<CliResult<Vec<_>>>()
        };
        let manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_version: lens_core::model::CHECKPOINT_VERSION,
            config: self.config,
            seeds: self.seeds,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            started_unix_secs: self
                .started
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
        };
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).map_err(LensError::from)?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_content() {
        // sha256("abc") from FIPS 180-2, appendix B.1
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        fs::write(&p, b"abc").unwrap();
        let d = sha256_file(&p).unwrap();
        assert_eq!(d.bytes, 3);
        assert_eq!(d.sha256, sha256_hex(b"abc"));
    }
}
