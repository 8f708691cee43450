//! Run manifest: SHA-256 digests of every input consumed and artifact
//! produced, plus the resolved seeds and timing. The digest tables use
//! sorted maps so the serialized form is deterministic; wall time is the
//! only field expected to differ between identical reruns.

use czmuq::{DataError, Error};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub crate_version: String,
    pub wall_time_s: f64,
    /// Resolved per-stage seeds after global overrides.
    pub seeds: BTreeMap<String, u64>,
    /// Relative file name or input path, hex SHA-256 of the bytes.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        Manifest {
            subcommand: subcommand.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), Error> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Keyed by file name only; artifacts all live in one output directory.
    pub fn add_artifact(&mut self, path: &Path) -> Result<(), Error> {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.artifacts.insert(name, sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| DataError::Invalid(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_match_known_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, b"abc").unwrap();
        // SHA-256("abc"), a fixed reference value.
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_as_toml() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("a.csv");
        std::fs::write(&artifact, "x,y\n1,2\n").unwrap();

        let mut manifest = Manifest::new("calibrate");
        manifest.seeds.insert("sampler".into(), 7);
        manifest.add_artifact(&artifact).unwrap();
        manifest.wall_time_s = 0.25;

        let out = dir.path().join("manifest.toml");
        manifest.write(&out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let value: toml::Value = toml::from_str(&text).unwrap();
        assert_eq!(value["subcommand"].as_str(), Some("calibrate"));
        assert_eq!(value["seeds"]["sampler"].as_integer(), Some(7));
        assert_eq!(
            value["artifacts"]["a.csv"].as_str().map(str::len),
            Some(64)
        );
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let err = sha256_file(Path::new("/nonexistent/file")).unwrap_err();
        assert!(matches!(err, Error::Data(DataError::Io { .. })));
    }
}
