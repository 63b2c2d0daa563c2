use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentKind;
use super::journal::{ConditionKey, JournalEntry, JournalHeader, LoadedJournal};
use super::metrics::{format_signed_tenths, format_tenths, improvement, Counts, Fraction};
use super::runner::planned_conditions;
use crate::classify::Mode;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::profiling::ProfileStatus;

/// Tallies for one planned condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionResult {
    pub key: ConditionKey,
    pub counts: Counts,
}

impl ConditionResult {
    pub fn accuracy(&self) -> Option<Fraction> {
        self.counts.accuracy()
    }
}

/// Profile outcomes for one generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProfileTally {
    pub ok: u64,
    pub unavailable: u64,
    pub failed: u64,
}

/// One cross-model matrix entry; `accuracy` is `None` for an absent cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCell {
    pub profile_model: String,
    pub classifier_model: String,
    pub accuracy: Option<Fraction>,
}

/// A model id with its mean accuracy, if any cell was scored.
pub type Marginal = (String, Option<Fraction>);

/// Everything the report files are rendered from; a pure fold over the journal.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: JournalHeader,
    pub conditions: Vec<ConditionResult>,
    pub profiles: BTreeMap<String, ProfileTally>,
}

pub fn build_report(journal: &LoadedJournal) -> Result<Report> {
    let header = journal.header.clone();
    let planned = planned_conditions(&header.config);
    let mut tallies: HashMap<&ConditionKey, Counts> = planned.iter().map(|k| (k, Counts::default())).collect();
    for (condition, result) in journal.results() {
        if let Some(c) = tallies.get_mut(condition) {
            c.add(result);
        }
    }
    let mut profiles: BTreeMap<String, ProfileTally> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for entry in &journal.entries {
        let (key, slot): (_, fn(&mut ProfileTally)) = match entry {
            JournalEntry::Profile { record } if record.status == ProfileStatus::Ok => (&record.key, |t| t.ok += 1),
            JournalEntry::Profile { record } => (&record.key, |t| t.unavailable += 1),
            JournalEntry::ProfileFailure { key, .. } => (key, |t| t.failed += 1),
            _ => continue,
        };
        if seen.insert(key) {
            slot(profiles.entry(key.model.clone()).or_default());
        }
    }
    let conditions = planned.iter().map(|k| ConditionResult { key: k.clone(), counts: tallies[k] }).collect::<Vec<_>>();
    if conditions.iter().all(|c| c.counts.instances() == 0) {
        return Err(Error::Report("journal holds no classification results".into()));
    }
    Ok(Report { header, conditions, profiles })
}

fn pct(f: Option<Fraction>) -> String {
    f.map(|f| format_tenths(f.percent_tenths())).unwrap_or_default()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl Report {
    fn stamp(&self) -> String {
        format!(
            "experiment={} seed={} config_hash={} corpus_hash={}",
            self.header.experiment, self.header.seed, self.header.config_hash, self.header.corpus_hash
        )
    }

    fn model_ids(&self) -> Vec<&str> {
        self.header.config.models.iter().map(|m| m.id()).collect()
    }

    fn find(&self, pred: impl Fn(&ConditionKey) -> bool) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| pred(&c.key))
    }

    /// Per classifier: baseline, context and improvement (enrichment only).
    pub fn enrichment_rows(&self) -> Vec<EnrichmentRow> {
        self.model_ids()
            .into_iter()
            .map(|m| {
                let base = self.find(|k| k.mode == Mode::Baseline && k.classifier == m);
                let ctx = self.find(|k| k.mode == Mode::Context && k.classifier == m);
                let (b, c) = (base.and_then(ConditionResult::accuracy), ctx.and_then(ConditionResult::accuracy));
                EnrichmentRow {
                    classifier: m.to_string(),
                    profile_model: ctx.and_then(|c| c.key.generator.clone()).unwrap_or_default(),
                    baseline: b,
                    context: c,
                    improvement_tenths: b.zip(c).map(|(b, c)| improvement(c, b)),
                    baseline_counts: base.map(|c| c.counts).unwrap_or_default(),
                    context_counts: ctx.map(|c| c.counts).unwrap_or_default(),
                }
            })
            .collect()
    }

    /// The generator × classifier matrix in model order (cross-model only).
    pub fn grid_cells(&self) -> Vec<GridCell> {
        self.conditions
            .iter()
            .filter(|c| c.key.mode == Mode::Context)
            .map(|c| GridCell {
                profile_model: c.key.generator.clone().unwrap_or_default(),
                classifier_model: c.key.classifier.clone(),
                accuracy: c.accuracy(),
            })
            .collect()
    }

    /// Exact mean over present cells of each generator's row and each
    /// classifier's column.
    pub fn marginal_means(&self) -> (Vec<Marginal>, Vec<Marginal>) {
        let cells = self.grid_cells();
        let mean = |pred: &dyn Fn(&GridCell) -> bool| {
            let present: Vec<Fraction> = cells.iter().filter(|c| pred(c)).filter_map(|c| c.accuracy).collect();
            Fraction::mean(&present)
        };
        let ids = self.model_ids();
        let rows = ids.iter().map(|g| (g.to_string(), mean(&|c| c.profile_model == *g))).collect();
        let cols = ids.iter().map(|m| (m.to_string(), mean(&|c| c.classifier_model == *m))).collect();
        (rows, cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichmentRow {
    pub classifier: String,
    pub profile_model: String,
    pub baseline: Option<Fraction>,
    pub context: Option<Fraction>,
    pub improvement_tenths: Option<i64>,
    pub baseline_counts: Counts,
    pub context_counts: Counts,
}

fn render_csv(stamp: &str, header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = format!("# {stamp}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        let err = |e: csv::Error| Error::Report(e.to_string());
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Report(e.to_string()))?;
    }
    Ok(out)
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn conditions_csv(r: &Report) -> Result<Vec<u8>> {
    let header = strings([
        "strategy",
        "n_posts",
        "generator",
        "classifier",
        "mode",
        "instances",
        "correct",
        "incorrect",
        "parse_failures",
        "backend_failures",
        "profile_fallbacks",
        "accuracy",
    ]);
    let rows: Vec<Vec<String>> = r
        .conditions
        .iter()
        .map(|c| {
            let k = &c.key;
            let n = &c.counts;
            vec![
                opt(&k.strategy),
                opt(&k.n_posts),
                opt(&k.generator),
                k.classifier.clone(),
                k.mode.to_string(),
                n.instances().to_string(),
                n.correct.to_string(),
                n.incorrect.to_string(),
                n.parse_failures.to_string(),
                n.backend_failures.to_string(),
                n.profile_fallbacks.to_string(),
                pct(c.accuracy()),
            ]
        })
        .collect();
    render_csv(&r.stamp(), &header, &rows)
}

fn enrichment_csv(r: &Report) -> Result<Vec<u8>> {
    let header = strings([
        "classifier",
        "profile_model",
        "baseline_accuracy",
        "context_accuracy",
        "improvement",
        "baseline_scored",
        "context_scored",
        "context_fallbacks",
    ]);
    let rows: Vec<Vec<String>> = r
        .enrichment_rows()
        .into_iter()
        .map(|e| {
            let scored = |c: &Counts| (c.correct + c.incorrect + c.parse_failures).to_string();
            vec![
                e.classifier,
                e.profile_model,
                pct(e.baseline),
                pct(e.context),
                e.improvement_tenths.map(format_signed_tenths).unwrap_or_default(),
                scored(&e.baseline_counts),
                scored(&e.context_counts),
                e.context_counts.profile_fallbacks.to_string(),
            ]
        })
        .collect();
    render_csv(&r.stamp(), &header, &rows)
}

fn strategy_grid_csv(r: &Report) -> Result<Vec<u8>> {
    let cfg = &r.header.config;
    let mut header = strings(["classifier", "strategy"]);
    header.extend(cfg.post_counts.iter().map(|n| n.to_string()));
    let mut rows = Vec::new();
    for m in r.model_ids() {
        for &s in &cfg.strategies {
            let mut row = vec![m.to_string(), s.to_string()];
            for &n in &cfg.post_counts {
                let cell = r.find(|k| k.classifier == m && k.strategy == Some(s) && k.n_posts == Some(n));
                row.push(pct(cell.and_then(ConditionResult::accuracy)));
            }
            rows.push(row);
        }
    }
    render_csv(&r.stamp(), &header, &rows)
}

fn cross_model_csv(r: &Report) -> Result<Vec<u8>> {
    let ids = r.model_ids();
    let cells = r.grid_cells();
    let mut header = strings(["generator"]);
    header.extend(ids.iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = ids
        .iter()
        .map(|g| {
            let mut row = vec![g.to_string()];
            for c in &ids {
                let cell = cells.iter().find(|x| x.profile_model == *g && x.classifier_model == *c);
                row.push(pct(cell.and_then(|x| x.accuracy)));
            }
            row
        })
        .collect();
    render_csv(&r.stamp(), &header, &rows)
}

fn marginals_csv(r: &Report) -> Result<Vec<u8>> {
    let (gens, clfs) = r.marginal_means();
    let rows: Vec<Vec<String>> = gens
        .into_iter()
        .map(|(m, f)| vec!["generator".to_string(), m, pct(f)])
        .chain(clfs.into_iter().map(|(m, f)| vec!["classifier".to_string(), m, pct(f)]))
        .collect();
    render_csv(&r.stamp(), &strings(["role", "model", "mean_accuracy"]), &rows)
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let cell = |s: &str| if s.is_empty() { "—".to_string() } else { s.replace('|', "\\|") };
    let _ = writeln!(out, "| {} |", header.iter().map(|h| cell(h)).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | "));
    }
    out.push('\n');
}

fn summary_md(r: &Report) -> String {
    let cfg = &r.header.config;
    let mut out = format!("<!-- {} -->\n# {} experiment\n\n", r.stamp(), r.header.experiment);
    let _ = writeln!(
        out,
        "Seed {}, config hash `{}`, corpus hash `{}`.\n",
        r.header.seed, r.header.config_hash, r.header.corpus_hash
    );
    let total: u64 = r.conditions.iter().map(|c| c.counts.instances()).sum();
    let _ = writeln!(out, "{} conditions, {} classification instances.\n", r.conditions.len(), total);
    match cfg.experiment {
        ExperimentKind::Enrichment => {
            out.push_str("## Baseline versus context\n\n");
            let rows: Vec<Vec<String>> = r
                .enrichment_rows()
                .into_iter()
                .map(|e| {
                    vec![
                        e.classifier,
                        e.profile_model,
                        pct(e.baseline),
                        pct(e.context),
                        e.improvement_tenths.map(format_signed_tenths).unwrap_or_default(),
                    ]
                })
                .collect();
            md_table(&mut out, &strings(["Classifier", "Profiles from", "Baseline %", "Context %", "Δ points"]), &rows);
        }
        ExperimentKind::Grid => {
            out.push_str("## Accuracy % by strategy and post count\n\n");
            let mut header = strings(["Classifier", "Strategy"]);
            header.extend(cfg.post_counts.iter().map(|n| n.to_string()));
            let mut rows = Vec::new();
            for m in r.model_ids() {
                for &s in &cfg.strategies {
                    let mut row = vec![m.to_string(), s.to_string()];
                    for &n in &cfg.post_counts {
                        let c = r.find(|k| k.classifier == m && k.strategy == Some(s) && k.n_posts == Some(n));
                        row.push(pct(c.and_then(ConditionResult::accuracy)));
                    }
                    rows.push(row);
                }
            }
            md_table(&mut out, &header, &rows);
        }
        ExperimentKind::CrossModel => {
            out.push_str("## Accuracy % by profile generator (rows) and classifier (columns)\n\n");
            let ids = r.model_ids();
            let cells = r.grid_cells();
            let (gens, clfs) = r.marginal_means();
            let mut header = strings(["Generator"]);
            header.extend(ids.iter().map(|s| s.to_string()));
            header.push("Mean".into());
            let mut rows: Vec<Vec<String>> = ids
                .iter()
                .zip(&gens)
                .map(|(g, (_, mean))| {
                    let mut row = vec![g.to_string()];
                    for c in &ids {
                        let cell = cells.iter().find(|x| x.profile_model == *g && x.classifier_model == *c);
                        row.push(pct(cell.and_then(|x| x.accuracy)));
                    }
                    row.push(pct(*mean));
                    row
                })
                .collect();
            let mut footer = vec!["Mean".to_string()];
            footer.extend(clfs.iter().map(|(_, m)| pct(*m)));
            footer.push(String::new());
            rows.push(footer);
            md_table(&mut out, &header, &rows);
        }
    }
    if !r.profiles.is_empty() {
        out.push_str("## Profiles\n\n");
        let rows: Vec<Vec<String>> = r
            .profiles
            .iter()
            .map(|(m, t)| vec![m.clone(), t.ok.to_string(), t.unavailable.to_string(), t.failed.to_string()])
            .collect();
        md_table(&mut out, &strings(["Generator", "Ok", "Unavailable", "Backend failure"]), &rows);
    }
    out.push_str("Accuracy counts parse failures as errors and excludes backend failures.\n");
    out
}

/// Writes the report files for `report` into `dir` and returns their paths.
/// Output depends only on the report, so re-rendering is byte-identical.
pub fn emit_reports(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(&str, Vec<u8>)> = vec![("conditions.csv", conditions_csv(report)?)];
    match report.header.experiment {
        ExperimentKind::Enrichment => files.push(("enrichment.csv", enrichment_csv(report)?)),
        ExperimentKind::Grid => files.push(("strategy_grid.csv", strategy_grid_csv(report)?)),
        ExperimentKind::CrossModel => {
            files.push(("cross_model.csv", cross_model_csv(report)?));
            files.push(("cross_model_marginals.csv", marginals_csv(report)?));
        }
    }
    files.push(("summary.md", summary_md(report).into_bytes()));
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        paths.push(path);
    }
    Ok(paths)
}
