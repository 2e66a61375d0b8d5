//! Result directory with a SHA-256 manifest.
//!
//! Everything written through [`OutputDir::write`] is deterministic for a
//! given seed and listed in `manifest.json`. Wall-clock measurements go
//! through [`OutputDir::write_unhashed`] and are kept out of the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Manifest {
    /// File name to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
    /// Files that vary between runs (wall-clock data).
    pub unhashed: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            manifest: Manifest {
                files: BTreeMap::new(),
                unhashed: Vec::new(),
            },
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.manifest
            .files
            .insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write_unhashed<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        fs::write(self.root.join(name), bytes)?;
        if !self.manifest.unhashed.iter().any(|n| n == name) {
            self.manifest.unhashed.push(name.to_owned());
        }
        Ok(())
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish(self) -> Result<Manifest> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        fs::write(self.root.join(MANIFEST), bytes)?;
        Ok(self.manifest)
    }
}

/// Recomputes the digests of the files listed in a manifest on disk.
pub fn verify(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    let m: Manifest = serde_json::from_slice(&fs::read(root.join(MANIFEST))?)?;
    for (name, want) in &m.files {
        let got = sha256_hex(&fs::read(root.join(name))?);
        if &got != want {
            return Err(crate::error::ExperimentError::Format(format!(
                "{name}: digest {got}, manifest says {want}"
            )));
        }
    }
    Ok(m)
}
