use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub inputs: Vec<InputEntry>,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    metadata: &'a RunMetadata,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output files of one command, written together with a hash manifest.
/// Contains no timestamps, so identical runs give identical bundles.
pub struct ReportBundle {
    dir: PathBuf,
    metadata: RunMetadata,
    files: Vec<(String, Vec<u8>)>,
}

impl ReportBundle {
    pub fn new(dir: &Path, command: &str, seed: Option<u64>, config_text: &str) -> Self {
        ReportBundle {
            dir: dir.to_path_buf(),
            metadata: RunMetadata {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config_sha256: sha256_hex(config_text.as_bytes()),
                inputs: Vec::new(),
            },
            files: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.metadata.inputs.push(InputEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.add(name, text);
    }

    pub fn file_names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(mut self) -> Result<Vec<FileEntry>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, content) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
            entries.push(FileEntry {
                path: name.clone(),
                sha256: sha256_hex(content),
                bytes: content.len() as u64,
            });
        }
        let manifest = Manifest {
            metadata: &self.metadata,
            files: entries.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_file_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ReportBundle::new(dir.path(), "test", Some(1), "{}");
        b.add("b.txt", "two");
        b.add("a.txt", "one");
        let entries = b.write().unwrap();
        assert_eq!(entries[0].path, "a.txt");
        assert_eq!(entries[0].sha256, sha256_hex(b"one"));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
        assert_eq!(manifest["metadata"]["seed"], 1);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
