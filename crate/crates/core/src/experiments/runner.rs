use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::journal::{load_journal, ConditionKey, Journal, JournalEntry, JournalHeader};
use super::report::{build_report, emit_reports};
use crate::backend::{Backend, BackendFactory};
use crate::classify::{classify_post, ClassificationResult, Mode, ProfileContext, ResultStatus};
use crate::corpus::{Corpus, PoliticalLeaning, RawPost, SplitManifest};
use crate::error::{Error, Result};
use crate::profiling::{ProfileCache, ProfileError, ProfileGenerator, ProfileKey, ProfileRecord, ProfileStatus};
use crate::rng::SplitMix64;
use crate::selection::{PostBudget, SelectionStrategy, StrategyKind, StrategyParams};

pub const DEFAULT_WORKERS: usize = 4;
/// Classifications issued between journal syncs.
const BATCH: usize = 32;

/// Where a run writes and how far it goes.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub outdir: PathBuf,
    /// Continue from an existing journal instead of starting over.
    pub resume: bool,
    /// Stop after journaling this many classification results, as if the
    /// process had been killed. Reports are not written for a stopped run.
    pub stop_after: Option<usize>,
    pub workers: usize,
}

impl RunOptions {
    pub fn new(outdir: impl Into<PathBuf>) -> Self {
        Self { outdir: outdir.into(), resume: false, stop_after: None, workers: DEFAULT_WORKERS }
    }

    pub fn journal_path(&self) -> PathBuf {
        journal_path(&self.outdir)
    }

    pub fn reports_dir(&self) -> PathBuf {
        reports_dir(&self.outdir)
    }

    pub fn profile_dir(&self) -> PathBuf {
        self.outdir.join("profiles")
    }
}

pub fn journal_path(outdir: &Path) -> PathBuf {
    outdir.join("results").join("journal.jsonl")
}

pub fn reports_dir(outdir: &Path) -> PathBuf {
    outdir.join("results").join("reports")
}

/// Read-only inputs shared across experiments.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentInputs<'a> {
    pub corpus: &'a Corpus,
    pub manifest: &'a SplitManifest,
    pub params: &'a StrategyParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub journal: PathBuf,
    /// False when `stop_after` cut the run short.
    pub completed: bool,
    pub new_results: usize,
    /// Results already present in the journal on resume.
    pub reused_results: usize,
    pub reports: Vec<PathBuf>,
}

/// One test post with its author's gold label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestItem {
    pub username: String,
    pub gold: PoliticalLeaning,
    pub post: RawPost,
}

fn posts_by_id<'a>(corpus: &'a Corpus, username: &str, ids: &[String]) -> Result<Vec<&'a RawPost>> {
    let user = corpus
        .user(username)
        .ok_or_else(|| Error::Config(format!("manifest user {username:?} is not in the corpus")))?;
    ids.iter()
        .map(|id| {
            user.posts
                .iter()
                .find(|p| &p.post_id == id)
                .ok_or_else(|| Error::Config(format!("manifest post {id:?} is not in the corpus")))
        })
        .collect()
}

/// Labelled users that have both profile and test posts, in manifest order.
fn eligible_users<'a>(
    corpus: &'a Corpus,
    manifest: &'a SplitManifest,
) -> Vec<(&'a crate::corpus::SplitAssignment, PoliticalLeaning)> {
    manifest
        .users
        .iter()
        .filter(|a| !a.profile_posts.is_empty() && !a.test_posts.is_empty())
        .filter_map(|a| {
            let leaning = corpus.user(&a.username)?.leaning;
            leaning.is_known().then_some((a, leaning))
        })
        .collect()
}

fn sort_items(items: &mut [TestItem]) {
    items.sort_by(|a, b| (a.username.as_str(), a.post.seq).cmp(&(b.username.as_str(), b.post.seq)));
}

/// A test set of `size` posts, half LEFT and half RIGHT (LEFT takes the odd
/// one), drawn with a seeded shuffle from the manifest's test sets. A short
/// class is topped up from the other. Sorted by author, then `seq`.
pub fn balanced_test_set(corpus: &Corpus, manifest: &SplitManifest, size: usize, seed: u64) -> Result<Vec<TestItem>> {
    let mut pools: BTreeMap<PoliticalLeaning, Vec<TestItem>> = BTreeMap::new();
    for (a, gold) in eligible_users(corpus, manifest) {
        for post in posts_by_id(corpus, &a.username, &a.test_posts)? {
            pools.entry(gold).or_default().push(TestItem { username: a.username.clone(), gold, post: post.clone() });
        }
    }
    let mut left = pools.remove(&PoliticalLeaning::Left).unwrap_or_default();
    let mut right = pools.remove(&PoliticalLeaning::Right).unwrap_or_default();
    SplitMix64::keyed(seed, "test-set:LEFT").shuffle(&mut left);
    SplitMix64::keyed(seed, "test-set:RIGHT").shuffle(&mut right);
    let want_left = size - size / 2;
    let take_left = want_left.min(left.len());
    let take_right = (size - take_left).min(right.len());
    let take_left = (size - take_right).min(left.len());
    let mut items: Vec<TestItem> = left.into_iter().take(take_left).chain(right.into_iter().take(take_right)).collect();
    sort_items(&mut items);
    Ok(items)
}

/// Up to `user_limit` seeded-sampled users with up to `per_user` seeded
/// test posts each.
pub fn grid_test_set(
    corpus: &Corpus,
    manifest: &SplitManifest,
    user_limit: usize,
    per_user: usize,
    seed: u64,
) -> Result<Vec<TestItem>> {
    let mut users = eligible_users(corpus, manifest);
    SplitMix64::keyed(seed, "grid-users").shuffle(&mut users);
    users.truncate(user_limit);
    let mut items = Vec::new();
    for (a, gold) in users {
        let mut ids = a.test_posts.clone();
        SplitMix64::keyed(seed, &format!("grid-posts:{}", a.username)).shuffle(&mut ids);
        ids.truncate(per_user);
        for post in posts_by_id(corpus, &a.username, &ids)? {
            items.push(TestItem { username: a.username.clone(), gold, post: post.clone() });
        }
    }
    sort_items(&mut items);
    Ok(items)
}

/// The test set an experiment evaluates on.
pub fn test_set(config: &ExperimentConfig, corpus: &Corpus, manifest: &SplitManifest) -> Result<Vec<TestItem>> {
    match config.experiment {
        ExperimentKind::Grid => grid_test_set(corpus, manifest, config.user_limit, config.test_post_limit, config.seed),
        _ => balanced_test_set(corpus, manifest, config.test_set_size, config.seed),
    }
}

/// Generator used for classifier `model`'s context condition.
fn enrichment_generator<'a>(config: &'a ExperimentConfig, model: &'a str) -> &'a str {
    config.profile_model.as_deref().unwrap_or(model)
}

/// Every condition an experiment produces, in report order.
pub fn planned_conditions(config: &ExperimentConfig) -> Vec<ConditionKey> {
    let ids: Vec<&str> = config.models.iter().map(|m| m.id()).collect();
    let (s0, n0) = (config.strategies[0], config.post_counts[0]);
    match config.experiment {
        ExperimentKind::Enrichment => ids
            .iter()
            .flat_map(|m| {
                [ConditionKey::baseline(m), ConditionKey::context(m, enrichment_generator(config, m), s0, n0)]
            })
            .collect(),
        ExperimentKind::Grid => ids
            .iter()
            .flat_map(|m| {
                config
                    .strategies
                    .iter()
                    .flat_map(move |&s| config.post_counts.iter().map(move |&n| ConditionKey::context(m, m, s, n)))
            })
            .collect(),
        ExperimentKind::CrossModel => {
            ids.iter().flat_map(|g| ids.iter().map(move |c| ConditionKey::context(c, g, s0, n0))).collect()
        }
    }
}

#[derive(Debug, Clone)]
enum ProfileOutcome {
    Ready(Box<ProfileRecord>),
    Failed(String),
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    inputs: ExperimentInputs<'a>,
    backends: HashMap<String, Arc<dyn Backend>>,
    strategies: HashMap<StrategyKind, SelectionStrategy>,
    journal: Journal,
    cache: ProfileCache,
    corpus_hash: String,
    done: HashSet<(ConditionKey, String)>,
    profiles: HashMap<ProfileKey, ProfileOutcome>,
    pool: rayon::ThreadPool,
    remaining: Option<usize>,
    stopped: bool,
    new_results: usize,
}

impl Run<'_> {
    fn backend(&self, id: &str) -> &dyn Backend {
        self.backends[id].as_ref()
    }

    fn profile_key(&self, generator: &str, username: &str, strategy: StrategyKind, budget: PostBudget) -> ProfileKey {
        ProfileKey {
            model: generator.to_string(),
            username: username.to_string(),
            strategy: strategy.to_string(),
            n_posts: budget,
            corpus_hash: self.corpus_hash.clone(),
        }
    }

    /// Generates (or reuses) profiles for `users`, journaling new outcomes
    /// in user order.
    fn ensure_profiles(
        &mut self,
        generator: &str,
        kind: StrategyKind,
        budget: PostBudget,
        users: &[&str],
    ) -> Result<()> {
        if self.stopped {
            return Ok(());
        }
        let pending: Vec<&str> = users
            .iter()
            .copied()
            .filter(|u| !self.profiles.contains_key(&self.profile_key(generator, u, kind, budget)))
            .collect();
        if pending.is_empty() {
            return Ok(());
        }
        let strategy = &self.strategies[&kind];
        let gen = ProfileGenerator::new(self.backend(generator), Some(&self.cache), self.corpus_hash.clone());
        let corpus = self.inputs.corpus;
        let manifest = self.inputs.manifest;
        let outcomes: Vec<Result<(ProfileKey, ProfileOutcome)>> = self.pool.install(|| {
            pending
                .par_iter()
                .map(|&username| {
                    let key = gen.key(username, strategy, budget);
                    let ids = manifest.assignment(username).map(|a| a.profile_posts.as_slice()).unwrap_or(&[]);
                    let posts: Vec<RawPost> = posts_by_id(corpus, username, ids)?.into_iter().cloned().collect();
                    match gen.generate(username, &posts, strategy, budget) {
                        Ok(record) => Ok((key, ProfileOutcome::Ready(Box::new(record)))),
                        Err(ProfileError::Cache(e)) => Err(e),
                        Err(e) => Ok((key, ProfileOutcome::Failed(e.to_string()))),
                    }
                })
                .collect()
        });
        let mut entries = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let (key, outcome) = outcome?;
            entries.push(match &outcome {
                ProfileOutcome::Ready(record) => JournalEntry::Profile { record: (**record).clone() },
                ProfileOutcome::Failed(error) => {
                    JournalEntry::ProfileFailure { key: key.clone(), error: error.clone() }
                }
            });
            self.profiles.insert(key, outcome);
        }
        self.journal.append(&entries)
    }

    fn classify_one(&self, condition: &ConditionKey, item: &TestItem) -> Result<ClassificationResult> {
        let backend = self.backend(&condition.classifier);
        let (Some(generator), Some(kind), Some(budget)) = (&condition.generator, condition.strategy, condition.n_posts)
        else {
            return classify_post(&item.post, item.gold, ProfileContext::None, backend);
        };
        let key = self.profile_key(generator, &item.username, kind, budget);
        let context = match self.profiles.get(&key) {
            Some(ProfileOutcome::Ready(record)) => match &**record {
                ProfileRecord { status: ProfileStatus::Ok, profile: Some(profile), .. } => {
                    ProfileContext::Profile { profile, model: generator }
                }
                _ => ProfileContext::Unavailable { model: generator },
            },
            Some(ProfileOutcome::Failed(error)) => {
                return Ok(ClassificationResult {
                    post_id: item.post.post_id.clone(),
                    gold: item.gold,
                    predicted: None,
                    explanation: String::new(),
                    mode: Mode::Context,
                    classifier_model: condition.classifier.clone(),
                    profile_model: Some(generator.clone()),
                    status: ResultStatus::BackendFailure,
                    profile_fallback: false,
                    raw_response: String::new(),
                    error: Some(format!("profile generation failed: {error}")),
                });
            }
            None => return Err(Error::Report(format!("profile {key:?} was never generated"))),
        };
        classify_post(&item.post, item.gold, context, backend)
    }

    fn classify_stage(&mut self, condition: &ConditionKey, items: &[TestItem]) -> Result<()> {
        if self.stopped {
            return Ok(());
        }
        let pending: Vec<&TestItem> =
            items.iter().filter(|i| !self.done.contains(&(condition.clone(), i.post.post_id.clone()))).collect();
        for chunk in pending.chunks(BATCH) {
            let take = match self.remaining {
                Some(0) => {
                    self.stopped = true;
                    return Ok(());
                }
                Some(r) => r.min(chunk.len()),
                None => chunk.len(),
            };
            let chunk = &chunk[..take];
            let this = &*self;
            let results: Vec<Result<ClassificationResult>> =
                this.pool.install(|| chunk.par_iter().map(|item| this.classify_one(condition, item)).collect());
            let mut entries = Vec::with_capacity(results.len());
            for r in results {
                entries.push(JournalEntry::Result { condition: condition.clone(), result: r? });
            }
            self.journal.append(&entries)?;
            for item in chunk {
                self.done.insert((condition.clone(), item.post.post_id.clone()));
            }
            self.new_results += chunk.len();
            if let Some(r) = self.remaining.as_mut() {
                *r -= chunk.len();
            }
        }
        Ok(())
    }

    fn execute(&mut self, items: &[TestItem]) -> Result<()> {
        let config = self.config;
        let mut users: Vec<&str> = items.iter().map(|i| i.username.as_str()).collect();
        users.dedup();
        for condition in planned_conditions(config) {
            if let (Some(g), Some(s), Some(n)) = (&condition.generator, condition.strategy, condition.n_posts) {
                self.ensure_profiles(g, s, n, &users)?;
            }
            self.classify_stage(&condition, items)?;
        }
        Ok(())
    }
}

/// Runs any experiment: journals every profile and classification under
/// `<outdir>/results/journal.jsonl`, then derives reports from the journal.
pub fn run_experiment(
    config: &ExperimentConfig,
    inputs: ExperimentInputs<'_>,
    factory: &dyn BackendFactory,
    opts: &RunOptions,
) -> Result<RunSummary> {
    config.validate()?;
    inputs.manifest.validate_against(inputs.corpus)?;
    let mut backends = HashMap::new();
    for spec in &config.models {
        backends.insert(spec.id().to_string(), factory.create(spec)?);
    }
    let mut strategies = HashMap::new();
    for &kind in &config.strategies {
        strategies.insert(kind, SelectionStrategy::build(kind, inputs.params)?);
    }
    let items = test_set(config, inputs.corpus, inputs.manifest)?;
    if items.is_empty() {
        return Err(Error::Config("the split manifest yields no labelled test posts".into()));
    }
    let corpus_hash = inputs.manifest.corpus_hash.clone();
    let header = JournalHeader::new(config, &corpus_hash).with_selection_hash(inputs.params.fingerprint()?);
    let path = opts.journal_path();
    let (journal, existing) =
        if opts.resume { Journal::resume(&path, &header)? } else { (Journal::create(&path, &header)?, Vec::new()) };
    let mut done = HashSet::new();
    let mut profiles = HashMap::new();
    for entry in existing {
        match entry {
            JournalEntry::Result { condition, result } => {
                done.insert((condition, result.post_id));
            }
            JournalEntry::Profile { record } => {
                profiles.entry(record.key.clone()).or_insert(ProfileOutcome::Ready(Box::new(record)));
            }
            JournalEntry::ProfileFailure { key, error } => {
                profiles.entry(key).or_insert(ProfileOutcome::Failed(error));
            }
            JournalEntry::Header(_) => {}
        }
    }
    let reused_results = done.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut run = Run {
        config,
        inputs,
        backends,
        strategies,
        journal,
        cache: ProfileCache::new(opts.profile_dir()),
        corpus_hash,
        done,
        profiles,
        pool,
        remaining: opts.stop_after,
        stopped: false,
        new_results: 0,
    };
    run.execute(&items)?;
    let completed = !run.stopped;
    let new_results = run.new_results;
    drop(run);
    let reports = if completed {
        let journal = load_journal(&path)?;
        emit_reports(&build_report(&journal)?, &opts.reports_dir())?
    } else {
        Vec::new()
    };
    tracing::info!(experiment = %config.experiment, new_results, reused_results, completed, "run finished");
    Ok(RunSummary { journal: path, completed, new_results, reused_results, reports })
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment == kind {
        Ok(())
    } else {
        Err(Error::Config(format!("expected a {kind} config, got {}", config.experiment)))
    }
}

/// Baseline versus context accuracy per model on a balanced test set.
pub fn run_enrichment(
    config: &ExperimentConfig,
    inputs: ExperimentInputs<'_>,
    factory: &dyn BackendFactory,
    opts: &RunOptions,
) -> Result<RunSummary> {
    expect_kind(config, ExperimentKind::Enrichment)?;
    run_experiment(config, inputs, factory, opts)
}

/// Strategy × post-count conditions.
pub fn run_grid(
    config: &ExperimentConfig,
    inputs: ExperimentInputs<'_>,
    factory: &dyn BackendFactory,
    opts: &RunOptions,
) -> Result<RunSummary> {
    expect_kind(config, ExperimentKind::Grid)?;
    run_experiment(config, inputs, factory, opts)
}

/// Every generator's profiles consumed by every classifier.
pub fn run_cross_model(
    config: &ExperimentConfig,
    inputs: ExperimentInputs<'_>,
    factory: &dyn BackendFactory,
    opts: &RunOptions,
) -> Result<RunSummary> {
    expect_kind(config, ExperimentKind::CrossModel)?;
    run_experiment(config, inputs, factory, opts)
}
