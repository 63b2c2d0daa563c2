//! Self-declared affiliation labels → coarse leaning.
//!
//! The table is data (`data/affiliations.json`): labels listed under `left`
//! or `right` map to that side, everything else is [`PoliticalLeaning::Unknown`].

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::PoliticalLeaning;
use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/affiliations.json");

#[derive(Debug, Deserialize)]
struct TableFile {
    #[serde(default)]
    left: Vec<String>,
    #[serde(default)]
    right: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AffiliationTable {
    labels: HashMap<String, PoliticalLeaning>,
}

fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}

impl AffiliationTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("affiliation table: {e}")))?;
        let mut labels = HashMap::new();
        for (side, list) in [(PoliticalLeaning::Left, &file.left), (PoliticalLeaning::Right, &file.right)] {
            for label in list {
                if let Some(prev) = labels.insert(normalize(label), side) {
                    if prev != side {
                        return Err(Error::Config(format!(
                            "affiliation label {label:?} listed as both left and right"
                        )));
                    }
                }
            }
        }
        Ok(Self { labels })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn map(&self, label: &str) -> PoliticalLeaning {
        self.labels.get(&normalize(label)).copied().unwrap_or(PoliticalLeaning::Unknown)
    }
}

impl Default for AffiliationTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled affiliation table is valid")
    }
}

/// Map a label with the bundled table. Total: unrecognized labels are `Unknown`.
pub fn map_affiliation(label: &str) -> PoliticalLeaning {
    thread_local! {
        static TABLE: AffiliationTable = AffiliationTable::default();
    }
    TABLE.with(|t| t.map(label))
}
