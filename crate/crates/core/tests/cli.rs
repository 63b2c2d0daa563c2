//! End-to-end tests of the `stance` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

const PROVIDER_KEYS: &[&str] = &[
    "ANTHROPIC_API_KEY",
    "XAI_API_KEY",
    "OPENAI_API_KEY",
    "MISTRAL_API_KEY",
    "TOGETHER_API_KEY",
    "DASHSCOPE_API_KEY",
    "GEMINI_API_KEY",
    "OPENROUTER_API_KEY",
    "OPENAI_COMPATIBLE_API_KEY",
];

fn stance(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stance"));
    for key in PROVIDER_KEYS {
        cmd.env_remove(key);
    }
    cmd.env_remove("RUST_LOG").args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", out.status.code(), stdout(out), stderr(out));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ingests and splits a small synthetic corpus into `dir`.
fn prepare(dir: &Path, users: usize, posts: usize) {
    let raw = dir.join("raw.jsonl");
    common::write_jsonl(&raw, &common::synthetic_records(users, posts, 3));
    assert_ok(&stance(&["ingest", path(&raw), "--outdir", path(dir)]));
    assert_ok(&stance(&["split", "--outdir", path(dir)]));
}

#[test]
fn help_documents_every_subcommand_and_flag() {
    let top = stance(&["--help"]);
    assert_ok(&top);
    for sub in ["ingest", "split", "profile", "classify", "exp1", "exp2", "exp3", "report"] {
        assert!(stdout(&top).contains(sub), "top-level help lacks {sub}");
    }
    let expectations: &[(&str, &[&str])] = &[
        ("ingest", &["--format", "--affiliations", "--keep-unknown", "--outdir"]),
        ("split", &["--corpus", "--seed", "--ratio"]),
        ("profile", &["--user", "--strategy", "--n", "--model", "--backend", "--cassettes"]),
        ("classify", &["--post-id", "--profile", "--model", "--backend"]),
        (
            "exp2",
            &[
                "--config",
                "--seed",
                "--resume",
                "--stop-after",
                "--workers",
                "--backend",
                "--cassettes",
                "--record-from",
                "--max-in-flight",
                "--requests-per-minute",
                "--lexicon",
                "--political-subforum",
                "--include-quotes",
                "--noise-range",
            ],
        ),
        ("report", &["--journal", "--outdir"]),
    ];
    for (sub, flags) in expectations {
        let out = stance(&[sub, "--help"]);
        assert_ok(&out);
        for flag in *flags {
            assert!(stdout(&out).contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = stance(&["split", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]:"), "{}", stderr(&out));
}

#[test]
fn malformed_input_reports_the_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("bad.jsonl");
    let good = serde_json::to_string(&common::synthetic_records(1, 1, 1)[0]).unwrap();
    std::fs::write(&raw, format!("{good}\n{{\"post_id\": \"x\"\n")).unwrap();
    let out = stance(&["ingest", path(&raw), "--outdir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
    assert!(!dir.path().join("corpus.jsonl").exists());
}

#[test]
fn split_is_reproducible_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), 6, 12);
    let first = std::fs::read(dir.path().join("split_manifest.json")).unwrap();
    assert_ok(&stance(&["split", "--seed", "42", "--outdir", path(dir.path())]));
    assert_eq!(std::fs::read(dir.path().join("split_manifest.json")).unwrap(), first);
}

#[test]
fn live_backend_without_credentials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), 6, 12);
    let out = stance(&["exp1", "--outdir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("_API_KEY"), "{}", stderr(&out));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn recorded_run_replays_offline_and_report_rebuilds_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, 8, 20);
    let config = d.join("grid.toml");
    std::fs::write(
        &config,
        "experiment = \"grid\"\nstrategies = [\"political_signal\", \"random\"]\npost_counts = [2, \"all\"]\n\
         user_limit = 4\ntest_post_limit = 2\n",
    )
    .unwrap();
    let cassettes = d.join("cassettes");
    let recorded = d.join("recorded");
    let replayed = d.join("replayed");
    for dir in [&recorded, &replayed] {
        std::fs::create_dir_all(dir).unwrap();
        for f in ["corpus.jsonl", "split_manifest.json"] {
            std::fs::copy(d.join(f), dir.join(f)).unwrap();
        }
    }
    let run = |outdir: &Path, backend: &[&str]| {
        let mut args =
            vec!["exp2", "--config", path(&config), "--cassettes", path(&cassettes), "--outdir", path(outdir)];
        args.extend_from_slice(backend);
        stance(&args)
    };
    assert_ok(&run(&recorded, &["--backend", "record", "--record-from", "mock"]));
    let out = run(&replayed, &["--backend", "replay"]);
    assert_ok(&out);
    assert!(stdout(&out).starts_with("completed"), "{}", stdout(&out));

    let reports = |dir: &Path| common::snapshot(&dir.join("results").join("reports"));
    let journal = |dir: &Path| std::fs::read(dir.join("results").join("journal.jsonl")).unwrap();
    assert_eq!(journal(&recorded), journal(&replayed));
    let before = reports(&replayed);
    assert!(before.iter().any(|(name, _)| name == "strategy_grid.csv"));
    assert_eq!(reports(&recorded), before);

    std::fs::remove_dir_all(replayed.join("results").join("reports")).unwrap();
    assert_ok(&stance(&["report", "--outdir", path(&replayed)]));
    assert_eq!(reports(&replayed), before);
}

#[test]
fn replay_miss_is_recorded_as_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), 6, 12);
    let empty = dir.path().join("no-cassettes");
    std::fs::create_dir_all(&empty).unwrap();
    let out = stance(&[
        "classify",
        "--post-id",
        "user000-p000",
        "--backend",
        "replay",
        "--cassettes",
        path(&empty),
        "--outdir",
        path(dir.path()),
    ]);
    // A miss is recorded in the result rather than aborting the command.
    assert_ok(&out);
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["status"], "backend_failure");
}

#[test]
fn profile_and_classify_with_the_mock_backend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, 6, 12);
    let out = stance(&["profile", "--user", "user001", "--n", "5", "--backend", "mock", "--outdir", path(d)]);
    assert_ok(&out);
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["status"], "ok", "{record}");
    let profile = d.join("profile.json");
    std::fs::write(&profile, serde_json::to_string(&record["profile"]).unwrap()).unwrap();

    let out = stance(&[
        "classify",
        "--post-id",
        "user001-p003",
        "--profile",
        path(&profile),
        "--backend",
        "mock",
        "--outdir",
        path(d),
    ]);
    assert_ok(&out);
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["mode"], "context");
    assert_eq!(result["gold"], "RIGHT");
    assert_eq!(result["status"], "ok");
}
