use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::classify::{ClassificationResult, Mode};
use crate::error::{Error, Result};
use crate::profiling::{ProfileKey, ProfileRecord};
use crate::selection::{PostBudget, StrategyKind};

/// Identifies one experimental condition. Enrichment baselines carry only a
/// classifier; context conditions also name the generator and the selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionKey {
    pub mode: Mode,
    pub classifier: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_posts: Option<PostBudget>,
}

impl ConditionKey {
    pub fn baseline(classifier: &str) -> Self {
        Self { mode: Mode::Baseline, classifier: classifier.into(), generator: None, strategy: None, n_posts: None }
    }

    pub fn context(classifier: &str, generator: &str, strategy: StrategyKind, n_posts: PostBudget) -> Self {
        Self {
            mode: Mode::Context,
            classifier: classifier.into(),
            generator: Some(generator.into()),
            strategy: Some(strategy),
            n_posts: Some(n_posts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalHeader {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub config_hash: String,
    pub corpus_hash: String,
    /// Fingerprint of the post-selection settings (lexicon, scoring,
    /// keywords), which live outside the config file.
    #[serde(default)]
    pub selection_hash: String,
    pub config: ExperimentConfig,
}

impl JournalHeader {
    pub fn new(config: &ExperimentConfig, corpus_hash: &str) -> Self {
        Self {
            experiment: config.experiment,
            seed: config.seed,
            config_hash: config.config_hash(),
            corpus_hash: corpus_hash.to_string(),
            selection_hash: String::new(),
            config: config.clone(),
        }
    }

    pub fn with_selection_hash(mut self, hash: impl Into<String>) -> Self {
        self.selection_hash = hash.into();
        self
    }
}

/// One journal line. Nothing timing- or transport-dependent is recorded, so
/// a replayed run writes the same bytes as the run that recorded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JournalEntry {
    Header(JournalHeader),
    Profile { record: ProfileRecord },
    ProfileFailure { key: ProfileKey, error: String },
    Result { condition: ConditionKey, result: ClassificationResult },
}

impl JournalEntry {
    fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("journal entry serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedJournal {
    pub header: JournalHeader,
    pub entries: Vec<JournalEntry>,
}

impl LoadedJournal {
    /// Result entries de-duplicated on `(condition, post_id)`, first wins.
    pub fn results(&self) -> impl Iterator<Item = (&ConditionKey, &ClassificationResult)> + '_ {
        let mut seen = HashSet::new();
        self.entries.iter().filter_map(move |e| match e {
            JournalEntry::Result { condition, result } if seen.insert((condition, result.post_id.as_str())) => {
                Some((condition, result))
            }
            _ => None,
        })
    }
}

/// Parses journal bytes. A final line without a terminating newline is the
/// remnant of an interrupted write and is ignored; any other malformed line
/// is an error. Returns the entries and the length of the valid prefix.
fn parse(bytes: &[u8], path: &Path) -> Result<(Vec<JournalEntry>, usize)> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (i, line) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        if !line.ends_with(b"\n") {
            break;
        }
        let entry: JournalEntry = serde_json::from_slice(line)
            .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?;
        entries.push(entry);
        offset += line.len();
    }
    Ok((entries, offset))
}

fn split_header(mut entries: Vec<JournalEntry>, path: &Path) -> Result<LoadedJournal> {
    if entries.is_empty() {
        return Err(Error::Schema(format!("{}: journal is empty", path.display())));
    }
    match entries.remove(0) {
        JournalEntry::Header(header) => Ok(LoadedJournal { header, entries }),
        _ => Err(Error::Schema(format!("{}: first journal line is not a header", path.display()))),
    }
}

pub fn load_journal(path: &Path) -> Result<LoadedJournal> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (entries, _) = parse(&bytes, path)?;
    split_header(entries, path)
}

/// Append-only writer; every [`Journal::append`] batch is flushed and synced.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Starts a fresh journal, replacing any existing file.
    pub fn create(path: &Path, header: &JournalHeader) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut journal = Self { path: path.to_path_buf(), file };
        journal.append(&[JournalEntry::Header(header.clone())])?;
        Ok(journal)
    }

    /// Reopens an existing journal for appending, discarding a torn final
    /// line. The stored header must match `header`. A missing journal is
    /// created fresh.
    pub fn resume(path: &Path, header: &JournalHeader) -> Result<(Self, Vec<JournalEntry>)> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Self::create(path, header)?, Vec::new())),
            Err(e) => return Err(Error::io(path, e)),
        };
        let (entries, valid) = parse(&bytes, path)?;
        if entries.is_empty() {
            return Ok((Self::create(path, header)?, Vec::new()));
        }
        let loaded = split_header(entries, path)?;
        if loaded.header.config_hash != header.config_hash || loaded.header.corpus_hash != header.corpus_hash {
            return Err(Error::Config(format!(
                "{}: journal was written for config {} / corpus {}, cannot resume with config {} / corpus {}",
                path.display(),
                loaded.header.config_hash,
                loaded.header.corpus_hash,
                header.config_hash,
                header.corpus_hash
            )));
        }
        if loaded.header.selection_hash != header.selection_hash {
            return Err(Error::Config(format!(
                "{}: journal was written with different selection settings (lexicon, subforums, quotes, noise \
                 or keywords); cannot resume",
                path.display()
            )));
        }
        let file = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        file.set_len(valid as u64).map_err(|e| Error::io(path, e))?;
        let mut file = file;
        std::io::Seek::seek(&mut file, std::io::SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        Ok((Self { path: path.to_path_buf(), file }, loaded.entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entries: &[JournalEntry]) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let buf: String = entries.iter().map(JournalEntry::to_line).collect();
        self.file.write_all(buf.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}
