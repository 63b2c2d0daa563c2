use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{default_models, ModelSpec};
use crate::error::{Error, Result};
use crate::selection::{PostBudget, StrategyKind};

pub const GRID_POST_COUNTS: [usize; 8] = [1, 2, 3, 5, 10, 20, 30, 50];
pub const DEFAULT_TEST_SET_SIZE: usize = 200;
pub const DEFAULT_USER_LIMIT: usize = 50;
pub const DEFAULT_TEST_POST_LIMIT: usize = 5;
pub const DEFAULT_SEED: u64 = 42;
/// Generator used for the enrichment experiment's profiles by default.
pub const DEFAULT_ENRICHMENT_PROFILE_MODEL: &str = "gemini-2.0-flash";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Enrichment,
    Grid,
    CrossModel,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Enrichment => "enrichment",
            ExperimentKind::Grid => "grid",
            ExperimentKind::CrossModel => "cross_model",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully resolved experiment configuration. Serialised into the journal
/// header; its hash stamps every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub models: Vec<ModelSpec>,
    /// Enrichment only: id of the model that generates every profile. When
    /// absent, each classifier generates its own.
    pub profile_model: Option<String>,
    pub strategies: Vec<StrategyKind>,
    pub post_counts: Vec<PostBudget>,
    /// Grid only: test posts sampled per user.
    pub test_post_limit: usize,
    /// Grid only: users sampled.
    pub user_limit: usize,
    /// Enrichment and cross-model: size of the balanced test set.
    pub test_set_size: usize,
    pub seed: u64,
}

/// The on-disk TOML shape: every key optional, missing keys take the
/// experiment's defaults. Counts are signed so negatives produce a config
/// error rather than a parse error.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<ExperimentKind>,
    #[serde(default)]
    models: Option<Vec<ModelSpec>>,
    profile_model: Option<String>,
    strategies: Option<Vec<String>>,
    post_counts: Option<Vec<toml::Value>>,
    test_post_limit: Option<i64>,
    user_limit: Option<i64>,
    test_set_size: Option<i64>,
    seed: Option<i64>,
}

fn non_negative(name: &str, v: i64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Config(format!("{name} must be non-negative, got {v}")))
}

fn budget_from_toml(v: &toml::Value) -> Result<PostBudget> {
    match v {
        toml::Value::Integer(n) => PostBudget::from_signed(*n),
        toml::Value::String(s) if s.eq_ignore_ascii_case("all") => Ok(PostBudget::All),
        other => Err(Error::Config(format!("post_counts entries must be integers or \"all\", got {other}"))),
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let all_models = default_models();
        let grid_model: Vec<ModelSpec> =
            all_models.iter().filter(|m| m.id() == DEFAULT_ENRICHMENT_PROFILE_MODEL).cloned().collect();
        match experiment {
            ExperimentKind::Enrichment => Self {
                experiment,
                models: all_models,
                profile_model: Some(DEFAULT_ENRICHMENT_PROFILE_MODEL.into()),
                strategies: vec![StrategyKind::PoliticalSignal],
                post_counts: vec![PostBudget::All],
                test_post_limit: 0,
                user_limit: 0,
                test_set_size: DEFAULT_TEST_SET_SIZE,
                seed: DEFAULT_SEED,
            },
            ExperimentKind::Grid => Self {
                experiment,
                models: grid_model,
                profile_model: None,
                strategies: StrategyKind::ALL.to_vec(),
                post_counts: GRID_POST_COUNTS.iter().map(|&n| PostBudget::Count(n)).collect(),
                test_post_limit: DEFAULT_TEST_POST_LIMIT,
                user_limit: DEFAULT_USER_LIMIT,
                test_set_size: 0,
                seed: DEFAULT_SEED,
            },
            ExperimentKind::CrossModel => Self {
                experiment,
                models: all_models,
                profile_model: None,
                strategies: vec![StrategyKind::PoliticalSignal],
                post_counts: vec![PostBudget::Count(50)],
                test_post_limit: 0,
                user_limit: 0,
                test_set_size: DEFAULT_TEST_SET_SIZE,
                seed: DEFAULT_SEED,
            },
        }
    }

    /// Parses a TOML config, filling unspecified keys from the defaults of
    /// `expected` (or of the file's own `experiment` key).
    pub fn from_toml(text: &str, expected: Option<ExperimentKind>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let experiment = match (file.experiment, expected) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for experiment {a}, not {b}")));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("config must name its experiment".into())),
        };
        let mut cfg = Self::defaults(experiment);
        if let Some(models) = file.models {
            cfg.models = models;
            if file.profile_model.is_none() && experiment == ExperimentKind::Enrichment {
                cfg.profile_model = None;
            }
        }
        if let Some(p) = file.profile_model {
            cfg.profile_model = (!p.is_empty()).then_some(p);
        }
        if let Some(s) = file.strategies {
            cfg.strategies = s.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(c) = file.post_counts {
            cfg.post_counts = c.iter().map(budget_from_toml).collect::<Result<_>>()?;
        }
        if let Some(v) = file.test_post_limit {
            cfg.test_post_limit = non_negative("test_post_limit", v)?;
        }
        if let Some(v) = file.user_limit {
            cfg.user_limit = non_negative("user_limit", v)?;
        }
        if let Some(v) = file.test_set_size {
            cfg.test_set_size = non_negative("test_set_size", v)?;
        }
        if let Some(v) = file.seed {
            cfg.seed = u64::try_from(v).map_err(|_| Error::Config(format!("seed must be non-negative, got {v}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, expected: Option<ExperimentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, expected)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
            if !ids.insert(m.id()) {
                return Err(Error::Config(format!("duplicate model id {:?}", m.id())));
            }
        }
        if let Some(p) = &self.profile_model {
            if !ids.contains(p.as_str()) {
                return Err(Error::Config(format!("profile_model {p:?} is not among the configured models")));
            }
        }
        if self.strategies.is_empty() || self.post_counts.is_empty() {
            return Err(Error::Config("strategies and post_counts must be non-empty".into()));
        }
        if self.post_counts.contains(&PostBudget::Count(0)) {
            return Err(Error::Config("post_counts entries must be at least 1".into()));
        }
        match self.experiment {
            ExperimentKind::Grid if self.user_limit == 0 || self.test_post_limit == 0 => {
                Err(Error::Config("grid user_limit and test_post_limit must be at least 1".into()))
            }
            ExperimentKind::Enrichment | ExperimentKind::CrossModel if self.test_set_size == 0 => {
                Err(Error::Config("test_set_size must be at least 1".into()))
            }
            ExperimentKind::CrossModel if self.strategies.len() != 1 || self.post_counts.len() != 1 => {
                Err(Error::Config("cross_model takes exactly one strategy and one post count".into()))
            }
            _ => Ok(()),
        }
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn model(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id() == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_defaults() {
        let c = ExperimentConfig::defaults(ExperimentKind::Grid);
        assert_eq!(c.post_counts.len() * c.strategies.len(), 40);
        assert_eq!((c.user_limit, c.test_post_limit), (50, 5));
        assert_eq!(c.models.len(), 1);
        c.validate().unwrap();
    }

    #[test]
    fn cross_model_defaults() {
        let c = ExperimentConfig::defaults(ExperimentKind::CrossModel);
        assert_eq!(c.models.len(), 7);
        assert_eq!(c.post_counts, vec![PostBudget::Count(50)]);
        assert_eq!(c.strategies, vec![StrategyKind::PoliticalSignal]);
        assert_eq!(c.test_set_size, 200);
        c.validate().unwrap();
        ExperimentConfig::defaults(ExperimentKind::Enrichment).validate().unwrap();
    }

    #[test]
    fn toml_overrides() {
        let c = ExperimentConfig::from_toml(
            r#"
            experiment = "grid"
            strategies = ["random", "long_form"]
            post_counts = [2, "all"]
            user_limit = 3
            [[models]]
            provider = "mock"
            model_name = "m1"
            "#,
            None,
        )
        .unwrap();
        assert_eq!(c.strategies, vec![StrategyKind::Random, StrategyKind::LongForm]);
        assert_eq!(c.post_counts, vec![PostBudget::Count(2), PostBudget::All]);
        assert_eq!(c.user_limit, 3);
        assert_eq!(c.test_post_limit, 5);
        assert_eq!(c.models[0].temperature, 0.1);
    }

    #[test]
    fn invalid_configs() {
        for text in [
            "experiment = \"grid\"\npost_counts = [-1]",
            "experiment = \"grid\"\nuser_limit = -5",
            "experiment = \"grid\"\nstrategies = [\"nope\"]",
            "experiment = \"grid\"\nbogus = 1",
            "post_counts = [1]",
            "experiment = \"enrichment\"\nprofile_model = \"missing\"",
        ] {
            assert_eq!(ExperimentConfig::from_toml(text, None).unwrap_err().category(), "config", "{text}");
        }
        assert!(ExperimentConfig::from_toml("experiment = \"grid\"", Some(ExperimentKind::CrossModel)).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::defaults(ExperimentKind::Grid);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 7;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
