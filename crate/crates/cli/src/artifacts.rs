//! Buffered run outputs. Nothing touches the output directory until the
//! run has succeeded; then every artifact is written to a temporary file
//! beside its destination and renamed into place, the manifest last.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::SCHEMA_VERSION;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path as given for inputs, relative to the output directory for
    /// artifacts.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    fn new(path: &Path, data: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    /// Effective parameters of the subcommand.
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub artifacts: Vec<FileRecord>,
}

#[derive(Debug, Default)]
pub struct Outputs {
    inputs: Vec<FileRecord>,
    artifacts: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    /// Read an input file and record its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileRecord::new(path, &data));
        Ok(data)
    }

    pub fn add(&mut self, name: &Path, data: Vec<u8>) -> Result<(), CliError> {
        if name.as_os_str().is_empty() || name.is_absolute() || name.file_name().is_none() {
            return Err(CliError::Config(format!(
                "artifact path {} must be a relative file name",
                name.display()
            )));
        }
        if name == Path::new(MANIFEST) || self.artifacts.iter().any(|(p, _)| p == name) {
            return Err(CliError::Config(format!(
                "artifact name {} is reserved or already used",
                name.display()
            )));
        }
        self.artifacts.push((name.to_path_buf(), data));
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &Path, value: &T) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(value).expect("serializable value");
        data.push(b'\n');
        self.add(name, data)
    }

    pub fn manifest(&self, command: &str, seed: u64, config: serde_json::Value) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config,
            inputs: self.inputs.clone(),
            artifacts: self
                .artifacts
                .iter()
                .map(|(p, d)| FileRecord::new(p, d))
                .collect(),
        }
    }

    /// Write all artifacts and the manifest under `dir`.
    pub fn commit(self, dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
        let mut body = serde_json::to_vec_pretty(manifest).expect("serializable manifest");
        body.push(b'\n');
        let mut staged = Vec::with_capacity(self.artifacts.len() + 1);
        for (name, data) in self
            .artifacts
            .iter()
            .map(|(p, d)| (p.as_path(), d.as_slice()))
            .chain([(Path::new(MANIFEST), body.as_slice())])
        {
            let dest = dir.join(name);
            let parent = dest.parent().expect("joined path has a parent");
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            let mut tmp = NamedTempFile::new_in(parent).map_err(|e| CliError::io(parent, e))?;
            tmp.write_all(data)
                .map_err(|e| CliError::io(tmp.path(), e))?;
            tmp.as_file()
                .sync_all()
                .map_err(|e| CliError::io(tmp.path(), e))?;
            staged.push((tmp, dest));
        }
        let mut placed: Vec<PathBuf> = Vec::with_capacity(staged.len());
        for (tmp, dest) in staged {
            if let Err(e) = tmp.persist(&dest) {
                for p in &placed {
                    let _ = std::fs::remove_file(p);
                }
                return Err(CliError::io(&dest, e.error));
            }
            placed.push(dest);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_sha256_of_each_artifact() {
        let mut out = Outputs::default();
        out.add(Path::new("a.txt"), b"abc".to_vec()).unwrap();
        let m = out.manifest("plan", 3, serde_json::json!({}));
        assert_eq!(
            m.artifacts[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(m.artifacts[0].bytes, 3);
    }

    #[test]
    fn bad_artifact_names_are_config_errors() {
        let mut out = Outputs::default();
        assert!(out.add(Path::new("/abs"), vec![]).is_err());
        assert!(out.add(Path::new(""), vec![]).is_err());
        assert!(out.add(Path::new(MANIFEST), vec![]).is_err());
        out.add(Path::new("x"), vec![]).unwrap();
        assert!(out.add(Path::new("x"), vec![]).is_err());
    }

    #[test]
    fn commit_places_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add(Path::new("sub/b.bin"), vec![1, 2, 3]).unwrap();
        let m = out.manifest("x", 0, serde_json::Value::Null);
        out.commit(dir.path(), &m).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("sub/b.bin")).unwrap(),
            vec![1, 2, 3]
        );
        let back: Manifest =
            serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(back, m);
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(names.len(), 2);
    }
}
