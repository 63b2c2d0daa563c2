//! The `stance` command line.
//!
//! Every subcommand reads and writes relative to `--outdir`. Failures print
//! one line, `error[<category>]: <message>`, to stderr and exit with 2
//! (usage or input parse), 3 (configuration), 4 (backend) or 1 (anything
//! else).

use std::ffi::OsString;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::{
    default_models, BackendFactory, CassetteFactory, LiveFactory, MockFactory, ModelSpec, RetryPolicy, ThrottleConfig,
};
use crate::classify::{classify_post, ProfileContext};
use crate::corpus::{filter_known, parse_corpus_with, AffiliationTable, Corpus, SplitManifest, DEFAULT_SPLIT_RATIO};
use crate::error::{Error, Result};
use crate::experiments::{
    build_report, emit_reports, journal_path, load_journal, reports_dir, run_experiment, ExperimentConfig,
    ExperimentInputs, ExperimentKind, RunOptions, DEFAULT_ENRICHMENT_PROFILE_MODEL, DEFAULT_WORKERS,
};
use crate::profiling::{ProfileCache, ProfileGenerator, UserProfile};
use crate::selection::{
    default_lexicon, PostBudget, ScoreOptions, SelectionStrategy, StrategyKind, StrategyParams, WeightedLexicon,
    DEFAULT_NOISE_RANGE,
};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const MANIFEST_FILE: &str = "split_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Political stance classification with LLM user-profile context")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Directory all inputs and outputs are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub outdir: PathBuf,
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendMode {
    /// Call provider APIs; needs each provider's API key variable.
    Live,
    /// Deterministic offline stand-in model.
    Mock,
    /// Call the inner backend and store every exchange as a cassette.
    Record,
    /// Answer only from cassettes; never touches the network.
    Replay,
}

#[derive(Debug, Args, Clone)]
pub struct BackendArgs {
    /// Where completions come from.
    #[arg(long, value_enum, default_value_t = BackendMode::Live)]
    pub backend: BackendMode,
    /// Cassette directory for record/replay [default: <outdir>/cassettes].
    #[arg(long)]
    pub cassettes: Option<PathBuf>,
    /// Backend that `--backend record` wraps.
    #[arg(long, value_enum, default_value_t = InnerBackend::Live)]
    pub record_from: InnerBackend,
    /// Concurrent requests allowed per provider.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Request rate cap per provider (0 = unlimited).
    #[arg(long, default_value_t = 0)]
    pub requests_per_minute: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InnerBackend {
    Live,
    Mock,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Ingested corpus [default: <outdir>/corpus.jsonl].
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Split manifest [default: <outdir>/split_manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SelectionArgs {
    /// Weighted lexicon JSON replacing the bundled one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Keyword list (JSON array or one per line) for controversial_topic.
    #[arg(long)]
    pub controversial_keywords: Option<PathBuf>,
    /// Subforum that earns the political-signal boost; repeatable.
    #[arg(long = "political-subforum")]
    pub political_subforums: Vec<String>,
    /// Count lexicon terms inside quoted spans as well.
    #[arg(long)]
    pub include_quotes: bool,
    /// Upper bound of the political-signal tie-break noise; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_NOISE_RANGE, value_parser = parse_noise_range)]
    pub noise_range: f64,
}

#[derive(Debug, Args, Clone)]
pub struct ExperimentArgs {
    /// Experiment config (TOML); defaults apply for omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from <outdir>/results/journal.jsonl.
    #[arg(long)]
    pub resume: bool,
    /// Stop after journaling this many classifications (simulates a kill).
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Worker threads issuing requests.
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    pub workers: usize,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw corpus and write <outdir>/corpus.jsonl.
    Ingest {
        /// Raw posts, JSONL or CSV.
        input: PathBuf,
        /// Input format [default: from the file extension].
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
        /// Affiliation mapping JSON replacing the bundled table.
        #[arg(long)]
        affiliations: Option<PathBuf>,
        /// Keep users whose affiliation maps to UNKNOWN.
        #[arg(long)]
        keep_unknown: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Split every user's posts into profile and test sets.
    Split {
        /// Ingested corpus [default: <outdir>/corpus.jsonl].
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Shuffle seed.
        #[arg(long, default_value_t = crate::corpus::DEFAULT_SPLIT_SEED)]
        seed: u64,
        /// Share of each user's posts in the profile set.
        #[arg(long, default_value_t = DEFAULT_SPLIT_RATIO)]
        ratio: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate one user's profile from their profile-set posts.
    Profile {
        /// Username to profile.
        #[arg(long)]
        user: String,
        /// Post-selection strategy.
        #[arg(long, default_value = "political_signal")]
        strategy: StrategyKind,
        /// Posts to select: a count or "all".
        #[arg(long, default_value = "50", value_parser = parse_budget)]
        n: PostBudget,
        /// Model id (label) from the config or the bundled model list.
        #[arg(long, default_value = DEFAULT_ENRICHMENT_PROFILE_MODEL)]
        model: String,
        /// Config whose model list is searched for --model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for noise and random selection.
        #[arg(long, default_value_t = crate::experiments::DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify one post, optionally with a profile as context.
    Classify {
        /// Post to classify.
        #[arg(long)]
        post_id: String,
        /// Profile JSON to include as context (omit for baseline mode).
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Model id (label) from the config or the bundled model list.
        #[arg(long, default_value = DEFAULT_ENRICHMENT_PROFILE_MODEL)]
        model: String,
        /// Config whose model list is searched for --model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ingested corpus [default: <outdir>/corpus.jsonl].
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Experiment 1: baseline versus context accuracy per model.
    Exp1 {
        #[command(flatten)]
        args: ExperimentArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Experiment 2: selection strategy × post count grid.
    Exp2 {
        #[command(flatten)]
        args: ExperimentArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Experiment 3: profile generator × classifier matrix.
    Exp3 {
        #[command(flatten)]
        args: ExperimentArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rebuild reports from an existing journal.
    Report {
        /// Journal to aggregate [default: <outdir>/results/journal.jsonl].
        #[arg(long)]
        journal: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_noise_range(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a noise range in [0, 1], got {s:?}")),
    }
}

fn parse_budget(s: &str) -> std::result::Result<PostBudget, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(PostBudget::All);
    }
    let n: i64 = s.parse().map_err(|_| format!("expected a post count or \"all\", got {s:?}"))?;
    PostBudget::from_signed(n).map_err(|e| e.to_string())
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Ingest { common, .. }
            | Command::Split { common, .. }
            | Command::Profile { common, .. }
            | Command::Classify { common, .. }
            | Command::Exp1 { common, .. }
            | Command::Exp2 { common, .. }
            | Command::Exp3 { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Process exit code for an error category.
pub fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "usage" | "parse" | "ingestion" => 2,
        "config" => 3,
        "backend" => 4,
        _ => 1,
    }
}

fn resolve(outdir: &Path, given: Option<&PathBuf>, default: &str) -> PathBuf {
    match given {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => outdir.join(p),
        None => outdir.join(default),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_with(BufReader::new(file), &AffiliationTable::default())
}

fn strategy_params(outdir: &Path, sel: &SelectionArgs, seed: u64) -> Result<StrategyParams> {
    let lexicon = match &sel.lexicon {
        Some(p) => WeightedLexicon::from_path(&resolve(outdir, Some(p), ""))?,
        None => default_lexicon(),
    };
    Ok(StrategyParams {
        lexicon: lexicon.with_political_subforums(sel.political_subforums.iter()),
        score: ScoreOptions { seed, noise_range: sel.noise_range, include_quotes: sel.include_quotes },
        controversial_keywords: sel.controversial_keywords.as_ref().map(|p| resolve(outdir, Some(p), "")),
    })
}

fn live_factory(models: &[ModelSpec], b: &BackendArgs) -> Result<Box<dyn BackendFactory>> {
    let throttle = if b.requests_per_minute > 0 {
        ThrottleConfig::per_minute(b.max_in_flight, b.requests_per_minute)
    } else {
        ThrottleConfig { max_in_flight: b.max_in_flight, ..ThrottleConfig::default() }
    };
    let factory =
        LiveFactory::new(models, throttle, RetryPolicy::default()).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Box::new(factory))
}

/// Builds the factory for `--backend`. Live credentials are checked here,
/// before any request; mock and replay never need them.
pub fn backend_factory(outdir: &Path, models: &[ModelSpec], b: &BackendArgs) -> Result<Box<dyn BackendFactory>> {
    let cassettes = resolve(outdir, b.cassettes.as_ref(), "cassettes");
    Ok(match b.backend {
        BackendMode::Live => live_factory(models, b)?,
        BackendMode::Mock => Box::new(MockFactory::simulated()),
        BackendMode::Replay => Box::new(CassetteFactory::replay(cassettes).map_err(|e| Error::Config(e.to_string()))?),
        BackendMode::Record => {
            let inner = match b.record_from {
                InnerBackend::Live => live_factory(models, b)?,
                InnerBackend::Mock => Box::new(MockFactory::simulated()),
            };
            Box::new(CassetteFactory::record(cassettes, inner))
        }
    })
}

fn pick_model(outdir: &Path, config: Option<&PathBuf>, id: &str) -> Result<ModelSpec> {
    let models = match config {
        Some(p) => ExperimentConfig::load(&resolve(outdir, Some(p), ""), None)?.models,
        None => default_models(),
    };
    models
        .into_iter()
        .find(|m| m.id() == id || m.model_name == id)
        .ok_or_else(|| Error::Config(format!("no model with id {id:?}")))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn run_exp(kind: ExperimentKind, args: &ExperimentArgs, outdir: &Path) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(&resolve(outdir, Some(p), ""), Some(kind))?,
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let corpus = load_corpus(&resolve(outdir, args.inputs.corpus.as_ref(), CORPUS_FILE))?;
    let manifest = SplitManifest::load(&resolve(outdir, args.inputs.manifest.as_ref(), MANIFEST_FILE))?;
    let params = strategy_params(outdir, &args.selection, config.seed)?;
    let factory = backend_factory(outdir, &config.models, &args.backend)?;
    let opts = RunOptions {
        outdir: outdir.to_path_buf(),
        resume: args.resume,
        stop_after: args.stop_after,
        workers: args.workers,
    };
    let inputs = ExperimentInputs { corpus: &corpus, manifest: &manifest, params: &params };
    let summary = run_experiment(&config, inputs, factory.as_ref(), &opts)?;
    println!(
        "{}: {} new results, {} reused; journal {}",
        if summary.completed { "completed" } else { "stopped" },
        summary.new_results,
        summary.reused_results,
        summary.journal.display()
    );
    for path in &summary.reports {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    let outdir = cli.command.common().outdir.clone();
    match &cli.command {
        Command::Ingest { input, format, affiliations, keep_unknown, .. } => {
            let table = match affiliations {
                Some(p) => AffiliationTable::from_path(p)?,
                None => AffiliationTable::default(),
            };
            let format = format.unwrap_or_else(|| {
                if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                    InputFormat::Csv
                } else {
                    InputFormat::Jsonl
                }
            });
            let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
            let corpus = match format {
                InputFormat::Jsonl => parse_corpus_with(BufReader::new(file), &table)?,
                InputFormat::Csv => Corpus::from_csv(file, &table)?,
            };
            let corpus = if *keep_unknown { corpus } else { filter_known(&corpus) };
            let mut bytes = Vec::new();
            corpus.write_jsonl(&mut bytes).map_err(|e| Error::io("<buffer>", e))?;
            let path = outdir.join(CORPUS_FILE);
            crate::fsutil::write_atomic(&path, &bytes)?;
            println!(
                "wrote {} ({} users, {} posts, hash {})",
                path.display(),
                corpus.users().len(),
                corpus.post_count(),
                corpus.content_hash()
            );
        }
        Command::Split { corpus, seed, ratio, .. } => {
            let corpus = load_corpus(&resolve(&outdir, corpus.as_ref(), CORPUS_FILE))?;
            let manifest = SplitManifest::build(&corpus, *ratio, *seed)?;
            let path = outdir.join(MANIFEST_FILE);
            manifest.write(&path)?;
            println!("wrote {} ({} users, seed {seed})", path.display(), manifest.users.len());
        }
        Command::Profile { user, strategy, n, model, config, seed, inputs, selection, backend, .. } => {
            let spec = pick_model(&outdir, config.as_ref(), model)?;
            let corpus = load_corpus(&resolve(&outdir, inputs.corpus.as_ref(), CORPUS_FILE))?;
            let manifest = SplitManifest::load(&resolve(&outdir, inputs.manifest.as_ref(), MANIFEST_FILE))?;
            manifest.validate_against(&corpus)?;
            let assignment = manifest
                .assignment(user)
                .ok_or_else(|| Error::Usage(format!("user {user:?} is not in the manifest")))?;
            let record = corpus.user(user).expect("validated manifest user");
            let posts: Vec<_> =
                record.posts.iter().filter(|p| assignment.profile_posts.contains(&p.post_id)).cloned().collect();
            let strategy = SelectionStrategy::build(*strategy, &strategy_params(&outdir, selection, *seed)?)?;
            let factory = backend_factory(&outdir, std::slice::from_ref(&spec), backend)?;
            let backend = factory.create(&spec)?;
            let cache = ProfileCache::new(outdir.join("profiles"));
            let gen = ProfileGenerator::new(backend.as_ref(), Some(&cache), manifest.corpus_hash.clone());
            let record = gen.generate(user, &posts, &strategy, *n).map_err(|e| match e {
                crate::profiling::ProfileError::Backend(b) => Error::Backend(b),
                crate::profiling::ProfileError::Cache(c) => c,
                other => Error::Usage(other.to_string()),
            })?;
            print_json(&record)?;
        }
        Command::Classify { post_id, profile, model, config, corpus, backend, .. } => {
            let spec = pick_model(&outdir, config.as_ref(), model)?;
            let corpus = load_corpus(&resolve(&outdir, corpus.as_ref(), CORPUS_FILE))?;
            let (user, post) = corpus
                .users()
                .iter()
                .find_map(|u| u.posts.iter().find(|p| &p.post_id == post_id).map(|p| (u, p)))
                .ok_or_else(|| Error::Usage(format!("post {post_id:?} is not in the corpus")))?;
            let profile: Option<UserProfile> = match profile {
                Some(p) => {
                    let path = resolve(&outdir, Some(p), "");
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    Some(
                        crate::profiling::parse_profile_response(&text)
                            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?,
                    )
                }
                None => None,
            };
            let context = match &profile {
                Some(profile) => ProfileContext::Profile { profile, model: "file" },
                None => ProfileContext::None,
            };
            let factory = backend_factory(&outdir, std::slice::from_ref(&spec), backend)?;
            let backend = factory.create(&spec)?;
            let result = classify_post(post, user.leaning, context, backend.as_ref())?;
            print_json(&result)?;
        }
        Command::Exp1 { args, .. } => run_exp(ExperimentKind::Enrichment, args, &outdir)?,
        Command::Exp2 { args, .. } => run_exp(ExperimentKind::Grid, args, &outdir)?,
        Command::Exp3 { args, .. } => run_exp(ExperimentKind::CrossModel, args, &outdir)?,
        Command::Report { journal, .. } => {
            let path = match journal {
                Some(p) => resolve(&outdir, Some(p), ""),
                None => journal_path(&outdir),
            };
            let journal = load_journal(&path)?;
            for written in emit_reports(&build_report(&journal)?, &reports_dir(&outdir))? {
                println!("wrote {}", written.display());
            }
        }
    }
    Ok(())
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Entry point: parses `args`, runs, and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    init_logging(cli.command.common().verbose);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn budget_parser() {
        assert_eq!(parse_budget("all"), Ok(PostBudget::All));
        assert_eq!(parse_budget("7"), Ok(PostBudget::Count(7)));
        assert!(parse_budget("-1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse { line: 1, message: "x".into() }), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::Backend(crate::backend::BackendError::Config("x".into()))), 4);
        assert_eq!(exit_code(&Error::Report("x".into())), 1);
    }
}
