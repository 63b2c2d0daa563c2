//! The three experiments — enrichment impact, the strategy × post-count
//! grid, and the cross-model matrix — with a resumable journal and the
//! reports derived from it.

mod config;
mod journal;
mod metrics;
mod report;
mod runner;

pub use config::{
    ExperimentConfig, ExperimentKind, DEFAULT_ENRICHMENT_PROFILE_MODEL, DEFAULT_SEED, DEFAULT_TEST_POST_LIMIT,
    DEFAULT_TEST_SET_SIZE, DEFAULT_USER_LIMIT, GRID_POST_COUNTS,
};
pub use journal::{load_journal, ConditionKey, Journal, JournalEntry, JournalHeader, LoadedJournal};
pub use metrics::{accuracy, format_signed_tenths, format_tenths, improvement, Counts, Fraction};
pub use report::{
    build_report, emit_reports, ConditionResult, EnrichmentRow, GridCell, Marginal, ProfileTally, Report,
};
pub use runner::{
    balanced_test_set, grid_test_set, journal_path, planned_conditions, reports_dir, run_cross_model, run_enrichment,
    run_experiment, run_grid, test_set, ExperimentInputs, RunOptions, RunSummary, TestItem, DEFAULT_WORKERS,
};
