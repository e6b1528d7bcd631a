// SPDX-License-Identifier: Apache-2.0

//! Durable backends for the service.
//!
//! A data directory holds `state.json` (the interchange document),
//! `users.json` and `assets/<sha256>`. Every file is replaced by write to a
//! temporary sibling, fsync and rename, so a crash never leaves a torn file.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::persistence::CatalogueDocument;
use crate::service::UserDirectory;

pub trait Storage: Send + Sync {
    fn load_state(&self) -> Result<Option<CatalogueDocument>>;
    fn save_state(&self, doc: &CatalogueDocument) -> Result<()>;
    fn load_users(&self) -> Result<Option<UserDirectory>>;
    fn save_users(&self, users: &UserDirectory) -> Result<()>;
    /// Stores bytes under their hash. Storing existing bytes is a no-op.
    fn put_asset(&self, hash: &str, bytes: &[u8]) -> Result<()>;
    fn get_asset(&self, hash: &str) -> Result<Option<Vec<u8>>>;
}

#[derive(Default)]
struct MemoryInner {
    state: Option<CatalogueDocument>,
    users: Option<UserDirectory>,
    assets: HashMap<String, Vec<u8>>,
}

/// Process-local storage. Clones share the same contents.
#[derive(Clone, Default)]
pub struct MemoryStorage {
    inner: Arc<Mutex<MemoryInner>>,
}

impl MemoryStorage {
    pub fn asset_count(&self) -> usize {
        self.inner.lock().assets.len()
    }
}

impl Storage for MemoryStorage {
    fn load_state(&self) -> Result<Option<CatalogueDocument>> {
        Ok(self.inner.lock().state.clone())
    }

    fn save_state(&self, doc: &CatalogueDocument) -> Result<()> {
        self.inner.lock().state = Some(doc.clone());
        Ok(())
    }

    fn load_users(&self) -> Result<Option<UserDirectory>> {
        Ok(self.inner.lock().users.clone())
    }

    fn save_users(&self, users: &UserDirectory) -> Result<()> {
        self.inner.lock().users = Some(users.clone());
        Ok(())
    }

    fn put_asset(&self, hash: &str, bytes: &[u8]) -> Result<()> {
        self.inner
            .lock()
            .assets
            .entry(hash.to_owned())
            .or_insert_with(|| bytes.to_vec());
        Ok(())
    }

    fn get_asset(&self, hash: &str) -> Result<Option<Vec<u8>>> {
        Ok(self.inner.lock().assets.get(hash).cloned())
    }
}

#[derive(Debug, Clone)]
pub struct DirStorage {
    root: PathBuf,
}

impl DirStorage {
    /// Creates the directory layout if needed and checks it is writable.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let assets = root.join("assets");
        fs::create_dir_all(&assets).map_err(|e| {
            Error::Storage(format!("cannot create data dir {}: {e}", root.display()))
        })?;
        let probe = root.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| Error::Storage(format!("data dir {} is not writable: {e}", root.display())))?;
        Ok(DirStorage { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn asset_path(&self, hash: &str) -> Result<PathBuf> {
        if hash.is_empty() || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::validation("content_hash", "not a hex digest"));
        }
        Ok(self.root.join("assets").join(hash))
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        let path = self.root.join(name);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Storage(format!("corrupt {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Replaces `path` with `bytes` via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Storage for DirStorage {
    fn load_state(&self) -> Result<Option<CatalogueDocument>> {
        self.read_json("state.json")
    }

    fn save_state(&self, doc: &CatalogueDocument) -> Result<()> {
        write_atomic(&self.root.join("state.json"), &doc.to_json_bytes())
    }

    fn load_users(&self) -> Result<Option<UserDirectory>> {
        self.read_json("users.json")
    }

    fn save_users(&self, users: &UserDirectory) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(users).map_err(|e| Error::Storage(e.to_string()))?;
        write_atomic(&self.root.join("users.json"), &bytes)
    }

    fn put_asset(&self, hash: &str, bytes: &[u8]) -> Result<()> {
        let path = self.asset_path(hash)?;
        if path.exists() {
            return Ok(());
        }
        write_atomic(&path, bytes)
    }

    fn get_asset(&self, hash: &str) -> Result<Option<Vec<u8>>> {
        let path = self.asset_path(hash)?;
        match fs::read(path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_storage_round_trips_assets() {
        let dir = tempfile::tempdir().unwrap();
        let storage = DirStorage::open(dir.path()).unwrap();
        let hash = crate::model::content_hash(b"pdf bytes");
        storage.put_asset(&hash, b"pdf bytes").unwrap();
        storage.put_asset(&hash, b"pdf bytes").unwrap();
        assert_eq!(storage.get_asset(&hash).unwrap().unwrap(), b"pdf bytes");
        assert!(storage.get_asset(&"0".repeat(64)).unwrap().is_none());
        assert!(storage.get_asset("../state.json").is_err());
    }

    #[test]
    fn missing_files_read_as_none() {
        let dir = tempfile::tempdir().unwrap();
        let storage = DirStorage::open(dir.path().join("nested")).unwrap();
        assert!(storage.load_state().unwrap().is_none());
        assert!(storage.load_users().unwrap().is_none());
    }
}
