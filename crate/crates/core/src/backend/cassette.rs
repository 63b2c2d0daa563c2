//! Record/replay of completions.
//!
//! A cassette is a directory of `<hash>.json` files, one per distinct request,
//! where `hash` is the hex SHA-256 of
//! `model_name || 0x00 || json(temperature) || 0x00 || prompt`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendFactory, CompletionExchange, ModelSpec};

pub fn prompt_hash(spec: &ModelSpec, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(spec.model_name.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_string(&spec.temperature).expect("f64 serializes").as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub hash: String,
    pub model_name: String,
    pub temperature: f64,
    pub prompt: String,
    pub response: String,
}

#[derive(Clone)]
pub enum CassetteMode {
    Record(Arc<dyn Backend>),
    Replay,
}

pub struct CassetteBackend {
    spec: ModelSpec,
    dir: PathBuf,
    mode: CassetteMode,
}

impl CassetteBackend {
    pub fn record(dir: impl Into<PathBuf>, inner: Arc<dyn Backend>) -> Self {
        Self { spec: inner.spec().clone(), dir: dir.into(), mode: CassetteMode::Record(inner) }
    }

    /// Serves stored responses only; it holds no inner backend, so it cannot
    /// reach the network.
    pub fn replay(dir: impl Into<PathBuf>, spec: ModelSpec) -> Self {
        Self { spec, dir: dir.into(), mode: CassetteMode::Replay }
    }

    pub fn entry_path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn load(dir: &Path, hash: &str) -> Result<Option<CassetteEntry>, BackendError> {
        let path = dir.join(format!("{hash}.json"));
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| BackendError::Cassette(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::Cassette(format!("{}: {e}", path.display()))),
        }
    }
}

impl Backend for CassetteBackend {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn complete(&self, prompt: &str) -> Result<CompletionExchange, BackendError> {
        let hash = prompt_hash(&self.spec, prompt);
        match &self.mode {
            CassetteMode::Replay => {
                let started = Instant::now();
                let entry = Self::load(&self.dir, &hash)?.ok_or(BackendError::CassetteMiss { hash })?;
                Ok(CompletionExchange {
                    prompt: prompt.to_string(),
                    response: entry.response,
                    latency: started.elapsed(),
                    attempt_count: 1,
                    model: self.spec.clone(),
                })
            }
            CassetteMode::Record(inner) => {
                let exchange = inner.complete(prompt)?;
                let entry = CassetteEntry {
                    hash: hash.clone(),
                    model_name: self.spec.model_name.clone(),
                    temperature: self.spec.temperature,
                    prompt: prompt.to_string(),
                    response: exchange.response.clone(),
                };
                let bytes = serde_json::to_vec_pretty(&entry).expect("entry serializes");
                crate::fsutil::write_atomic(&self.entry_path(&hash), &bytes)
                    .map_err(|e| BackendError::Cassette(e.to_string()))?;
                Ok(exchange)
            }
        }
    }
}

pub enum CassetteFactory {
    Record { dir: PathBuf, inner: Box<dyn BackendFactory> },
    Replay { dir: PathBuf },
}

impl CassetteFactory {
    pub fn replay(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(BackendError::Config(format!("cassette directory {} does not exist", dir.display())));
        }
        Ok(CassetteFactory::Replay { dir })
    }

    pub fn record(dir: impl Into<PathBuf>, inner: Box<dyn BackendFactory>) -> Self {
        CassetteFactory::Record { dir: dir.into(), inner }
    }
}

impl BackendFactory for CassetteFactory {
    fn create(&self, spec: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError> {
        spec.validate()?;
        Ok(match self {
            CassetteFactory::Record { dir, inner } => Arc::new(CassetteBackend::record(dir, inner.create(spec)?)),
            CassetteFactory::Replay { dir } => Arc::new(CassetteBackend::replay(dir, spec.clone())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    #[test]
    fn hash_covers_model_temperature_and_prompt() {
        let a = ModelSpec::new("x", "m");
        let h = prompt_hash(&a, "p");
        assert_eq!(h.len(), 64);
        assert_ne!(h, prompt_hash(&a, "q"));
        assert_ne!(h, prompt_hash(&ModelSpec::new("x", "n"), "p"));
        let hotter = ModelSpec { temperature: 0.7, ..a.clone() };
        assert_ne!(h, prompt_hash(&hotter, "p"));
        // provider and label are not part of the key
        assert_eq!(h, prompt_hash(&ModelSpec::new("y", "m").with_label("other"), "p"));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::new("mock", "m");
        let inner = Arc::new(MockBackend::scripted(spec.clone(), |p| format!("<{p}>")));
        let rec = CassetteBackend::record(dir.path(), inner.clone());
        assert_eq!(rec.complete("one").unwrap().response, "<one>");
        assert_eq!(inner.calls(), 1);

        let replay = CassetteBackend::replay(dir.path(), spec);
        assert_eq!(replay.complete("one").unwrap().response, "<one>");
        assert_eq!(inner.calls(), 1);
        match replay.complete("two").unwrap_err() {
            BackendError::CassetteMiss { hash } => assert_eq!(hash, prompt_hash(replay.spec(), "two")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn replay_factory_requires_directory() {
        assert!(CassetteFactory::replay("/does/not/exist").is_err());
    }
}
