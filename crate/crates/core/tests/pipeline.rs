//! Experiment pipelines driven by scripted models, checked against
//! hand-computed report values.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use stance_core::backend::{MockFactory, ModelSpec, TransportError};
use stance_core::classify::{render_classification, StanceLabel, CONTEXT_ANCHOR, POST_HEADER};
use stance_core::corpus::{Corpus, PoliticalLeaning, SplitManifest};
use stance_core::experiments::{
    balanced_test_set, run_experiment, test_set, ExperimentConfig, ExperimentInputs, ExperimentKind, RunOptions,
    RunSummary,
};
use stance_core::profiling::PROFILE_TEMPLATE_ANCHOR;
use stance_core::selection::{default_lexicon, PostBudget, ScoreOptions, StrategyKind, StrategyParams};

struct Fixture {
    corpus: Corpus,
    manifest: SplitManifest,
    params: StrategyParams,
}

impl Fixture {
    fn new(users: usize, posts: usize) -> Self {
        let corpus = common::synthetic_corpus(users, posts, 17);
        let manifest = common::manifest(&corpus);
        let params =
            StrategyParams { lexicon: default_lexicon(), score: ScoreOptions::default(), controversial_keywords: None };
        Self { corpus, manifest, params }
    }

    fn run(&self, config: &ExperimentConfig, factory: &MockFactory, outdir: &Path) -> RunSummary {
        config.validate().unwrap();
        let inputs = ExperimentInputs { corpus: &self.corpus, manifest: &self.manifest, params: &self.params };
        run_experiment(config, inputs, factory, &RunOptions::new(outdir)).unwrap()
    }

    fn gold(&self, config: &ExperimentConfig) -> BTreeMap<String, PoliticalLeaning> {
        test_set(config, &self.corpus, &self.manifest).unwrap().into_iter().map(|i| (i.post.post_id, i.gold)).collect()
    }
}

fn mock(provider_model: &str) -> ModelSpec {
    ModelSpec::new("mock", provider_model)
}

fn is_profile_prompt(prompt: &str) -> bool {
    prompt.contains(PROFILE_TEMPLATE_ANCHOR)
}

fn profile_json(prompt: &str, note: &str) -> String {
    let username = prompt.lines().find_map(|l| l.strip_prefix("Username: ")).unwrap_or("?").trim().to_string();
    serde_json::json!({
        "username": username, "political_leaning": "unknown", "confidence": "low",
        "key_indicators": [], "recurring_topics": [], "language_style": "plain",
        "sentiment_patterns": "none", "context_notes": note
    })
    .to_string()
}

fn post_id(prompt: &str) -> String {
    let section = prompt.rsplit(POST_HEADER).next().unwrap();
    let start = section.find('[').unwrap() + 1;
    let end = start + section[start..].find(']').unwrap();
    section[start..end].to_string()
}

/// The correct or incorrect label for the post in `prompt`.
fn answer(gold: &BTreeMap<String, PoliticalLeaning>, prompt: &str, correct: bool) -> String {
    let truth = match gold[&post_id(prompt)] {
        PoliticalLeaning::Left => StanceLabel::Left,
        _ => StanceLabel::Right,
    };
    let label = match (correct, truth) {
        (true, t) => t,
        (false, StanceLabel::Left) => StanceLabel::Right,
        (false, _) => StanceLabel::Left,
    };
    render_classification(label, "scripted")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn report(dir: &Path, name: &str) -> Vec<Vec<String>> {
    rows(&dir.join("results").join("reports").join(name))
}

fn enrichment_config(size: usize) -> ExperimentConfig {
    let mut config = ExperimentConfig::defaults(ExperimentKind::Enrichment);
    config.models = vec![mock("clf")];
    config.profile_model = None;
    config.test_set_size = size;
    config
}

/// Scripts a model that is right on the first `baseline` test items without
/// context and the last `context` items with it.
fn scripted_enrichment(fx: &Fixture, config: &ExperimentConfig, baseline: usize, context: usize) -> MockFactory {
    let items = balanced_test_set(&fx.corpus, &fx.manifest, config.test_set_size, config.seed).unwrap();
    let n = items.len();
    let base_right: HashSet<String> = items.iter().take(baseline).map(|i| i.post.post_id.clone()).collect();
    let ctx_right: HashSet<String> = items.iter().skip(n - context).map(|i| i.post.post_id.clone()).collect();
    let gold = fx.gold(config);
    MockFactory::new(move |_, prompt| {
        if is_profile_prompt(prompt) {
            return profile_json(prompt, "");
        }
        let id = post_id(prompt);
        let right = if prompt.contains(CONTEXT_ANCHOR) { &ctx_right } else { &base_right };
        answer(&gold, prompt, right.contains(&id))
    })
}

#[test]
fn enrichment_reports_accuracy_and_improvement_in_points() {
    let fx = Fixture::new(10, 20);
    let config = enrichment_config(20);
    let dir = tempfile::tempdir().unwrap();
    fx.run(&config, &scripted_enrichment(&fx, &config, 7, 15), dir.path());
    let table = report(dir.path(), "enrichment.csv");
    assert_eq!(table.len(), 1);
    assert_eq!(&table[0][..5], ["clf", "clf", "35.0", "75.0", "+40.0"]);
    assert_eq!(&table[0][5..8], ["20", "20", "0"]);
}

#[test]
fn identical_answers_give_zero_improvement() {
    let fx = Fixture::new(10, 20);
    let config = enrichment_config(20);
    let dir = tempfile::tempdir().unwrap();
    let gold = fx.gold(&config);
    let factory = MockFactory::new(move |_, prompt| {
        if is_profile_prompt(prompt) {
            return profile_json(prompt, "");
        }
        let id = post_id(prompt);
        answer(&gold, prompt, id.ends_with('0') || id.ends_with('3'))
    });
    fx.run(&config, &factory, dir.path());
    let table = report(dir.path(), "enrichment.csv");
    assert_eq!(table[0][2], table[0][3]);
    assert_eq!(table[0][4], "0.0");
}

#[test]
fn all_correct_answers_score_one_hundred_everywhere() {
    let fx = Fixture::new(12, 20);
    let mut config = ExperimentConfig::defaults(ExperimentKind::Grid);
    config.models = vec![mock("clf")];
    config.strategies = vec![StrategyKind::Random, StrategyKind::LongForm];
    config.post_counts = vec![PostBudget::Count(3), PostBudget::All];
    config.user_limit = 6;
    config.test_post_limit = 3;
    let gold = fx.gold(&config);
    let factory = MockFactory::new(move |_, prompt| {
        if is_profile_prompt(prompt) {
            profile_json(prompt, "")
        } else {
            answer(&gold, prompt, true)
        }
    });
    let dir = tempfile::tempdir().unwrap();
    fx.run(&config, &factory, dir.path());
    let conditions = report(dir.path(), "conditions.csv");
    assert_eq!(conditions.len(), 4, "2 strategies × 2 counts");
    let keys: HashSet<(String, String)> = conditions.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(keys.len(), 4);
    for row in &conditions {
        assert_eq!(row[5], "18", "{row:?}");
        assert_eq!(row[11], "100.0", "{row:?}");
    }
    let grid = report(dir.path(), "strategy_grid.csv");
    assert_eq!(grid.len(), 2);
    assert!(grid.iter().all(|r| r[2..] == ["100.0", "100.0"]), "{grid:?}");
}

/// Two generators × two classifiers. Classifiers are right exactly when
/// the profile came from `gen-good`.
#[test]
fn cross_model_matrix_cells_and_marginals() {
    let fx = Fixture::new(10, 20);
    let mut config = ExperimentConfig::defaults(ExperimentKind::CrossModel);
    config.models = vec![mock("gen-good"), mock("gen-bad")];
    config.post_counts = vec![PostBudget::Count(5)];
    config.test_set_size = 20;
    let gold = fx.gold(&config);
    let profile_calls: Arc<Mutex<BTreeMap<String, usize>>> = Arc::default();
    let calls = profile_calls.clone();
    let factory = MockFactory::new(move |spec, prompt| {
        if is_profile_prompt(prompt) {
            *calls.lock().unwrap().entry(spec.id().to_string()).or_default() += 1;
            return profile_json(prompt, &format!("written by {}", spec.id()));
        }
        answer(&gold, prompt, prompt.contains("written by gen-good"))
    });
    let dir = tempfile::tempdir().unwrap();
    fx.run(&config, &factory, dir.path());

    let users: HashSet<String> =
        test_set(&config, &fx.corpus, &fx.manifest).unwrap().into_iter().map(|i| i.username).collect();
    let calls = profile_calls.lock().unwrap().clone();
    assert_eq!(calls.len(), 2);
    assert!(calls.values().all(|&c| c == users.len()), "{calls:?} for {} users", users.len());

    let matrix = report(dir.path(), "cross_model.csv");
    assert_eq!(matrix, [["gen-good", "100.0", "100.0"], ["gen-bad", "0.0", "0.0"]]);
    let marginals = report(dir.path(), "cross_model_marginals.csv");
    let lookup: BTreeMap<(String, String), String> =
        marginals.into_iter().map(|r| ((r[0].clone(), r[1].clone()), r[2].clone())).collect();
    assert_eq!(lookup[&("generator".into(), "gen-good".into())], "100.0");
    assert_eq!(lookup[&("generator".into(), "gen-bad".into())], "0.0");
    assert_eq!(lookup[&("classifier".into(), "gen-good".into())], "50.0");
    assert_eq!(lookup[&("classifier".into(), "gen-bad".into())], "50.0");
}

#[test]
fn failed_generator_leaves_its_cells_empty() {
    let fx = Fixture::new(10, 20);
    let mut config = ExperimentConfig::defaults(ExperimentKind::CrossModel);
    config.models = vec![mock("gen-ok"), mock("gen-down")];
    config.post_counts = vec![PostBudget::Count(5)];
    config.test_set_size = 20;
    let gold = fx.gold(&config);
    let factory = MockFactory::fallible(move |spec, prompt| {
        if is_profile_prompt(prompt) {
            if spec.id() == "gen-down" {
                return Err(TransportError::fatal("401 unauthorized"));
            }
            return Ok(profile_json(prompt, ""));
        }
        Ok(answer(&gold, prompt, true))
    });
    let dir = tempfile::tempdir().unwrap();
    let summary = fx.run(&config, &factory, dir.path());
    assert!(summary.completed);
    let matrix = report(dir.path(), "cross_model.csv");
    assert_eq!(matrix, [["gen-ok", "100.0", "100.0"], ["gen-down", "", ""]]);
    let conditions = report(dir.path(), "conditions.csv");
    for row in conditions.iter().filter(|r| r[2] == "gen-down") {
        assert_eq!(row[9], row[5], "every instance is a backend failure: {row:?}");
        assert_eq!(row[11], "", "{row:?}");
    }
}

#[test]
fn unavailable_profiles_fall_back_to_baseline_prompts() {
    let fx = Fixture::new(10, 20);
    let config = enrichment_config(20);
    let gold = fx.gold(&config);
    let context_prompts = Arc::new(Mutex::new(0usize));
    let seen = context_prompts.clone();
    let factory = MockFactory::new(move |_, prompt| {
        if is_profile_prompt(prompt) {
            return "I would rather not say.".to_string();
        }
        if prompt.contains(CONTEXT_ANCHOR) {
            *seen.lock().unwrap() += 1;
        }
        answer(&gold, prompt, true)
    });
    let dir = tempfile::tempdir().unwrap();
    fx.run(&config, &factory, dir.path());
    assert_eq!(*context_prompts.lock().unwrap(), 0);
    let conditions = report(dir.path(), "conditions.csv");
    let context = conditions.iter().find(|r| r[4] == "context").unwrap();
    assert_eq!(context[10], context[5], "every context instance fell back: {context:?}");
    let enrichment = report(dir.path(), "enrichment.csv");
    assert_eq!(&enrichment[0][2..5], ["100.0", "100.0", "0.0"]);
    assert_eq!(enrichment[0][7], "20");
}
