use std::path::{Path, PathBuf};

use super::{ProfileKey, ProfileRecord};
use crate::error::{Error, Result};
use crate::fsutil::{path_component, write_atomic};

/// On-disk profile cache laid out as
/// `<root>/<model>/<strategy>/<n>/<username>.json`. Each file records the
/// corpus hash it was generated from; a mismatch is treated as a miss.
#[derive(Debug, Clone)]
pub struct ProfileCache {
    root: PathBuf,
}

impl ProfileCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, key: &ProfileKey) -> PathBuf {
        self.root
            .join(path_component(&key.model))
            .join(path_component(&key.strategy))
            .join(path_component(&key.n_posts.to_string()))
            .join(format!("{}.json", path_component(&key.username)))
    }

    pub fn get(&self, key: &ProfileKey) -> Result<Option<ProfileRecord>> {
        let path = self.path(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(path, e)),
        };
        let record: ProfileRecord =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Ok((record.key == *key).then_some(record))
    }

    pub fn put(&self, record: &ProfileRecord) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(record)?;
        bytes.push(b'\n');
        write_atomic(&self.path(&record.key), &bytes)
    }
}
