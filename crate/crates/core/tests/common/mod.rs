//! Synthetic forum corpora shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use stance_core::corpus::{AffiliationTable, Corpus, PostRecord, SplitManifest};
use stance_core::rng::SplitMix64;

pub const AFFILIATIONS: [&str; 6] = ["Democrat", "Republican", "Liberal", "Conservative", "L-fringe", "R-fringe"];

const FILLER: &[&str] = &[
    "the", "we", "need", "think", "about", "really", "today", "people", "country", "this", "again", "honestly", "town",
    "news", "week", "folks", "and", "but", "never", "always",
];
const POLITICAL: &[&str] = &[
    "politics",
    "government",
    "vote",
    "election",
    "policy",
    "democracy",
    "liberal",
    "conservative",
    "gop",
    "left-wing",
    "right",
    "trump",
    "obama",
    "tea party",
    "abortion",
    "gun",
    "immigration",
    "climate",
    "tax",
    "healthcare",
    "border",
    "wall",
    "black lives matter",
    "socialism",
];
const LEFT_CUES: &[&str] = &["progressive", "unions", "democrats", "healthcare", "biden"];
const RIGHT_CUES: &[&str] = &["conservative", "taxes", "republicans", "border", "reagan"];
const SUBFORUMS: &[&str] = &["politics", "general", "sports", "elections"];

fn pick<'a>(rng: &mut SplitMix64, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len() as u64) as usize]
}

/// `users` authors with `posts_per_user` posts each. Affiliations cycle
/// through [`AFFILIATIONS`], so LEFT and RIGHT alternate. Every post text
/// carries its own id, so texts are unique.
pub fn synthetic_records(users: usize, posts_per_user: usize, seed: u64) -> Vec<PostRecord> {
    synthetic_records_with_counts(&vec![posts_per_user; users], seed)
}

/// Like [`synthetic_records`], with `counts[u]` posts for user `u`.
pub fn synthetic_records_with_counts(counts: &[usize], seed: u64) -> Vec<PostRecord> {
    let mut rng = SplitMix64::keyed(seed, "synthetic-corpus");
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (u, &posts_per_user) in counts.iter().enumerate() {
        let author = format!("user{u:03}");
        let affiliation = AFFILIATIONS[u % AFFILIATIONS.len()];
        let cues = if u % 2 == 0 { LEFT_CUES } else { RIGHT_CUES };
        for p in 0..posts_per_user {
            let post_id = format!("{author}-p{p:03}");
            let mut text = String::new();
            let mut quoted_spans = Vec::new();
            if rng.below(10) == 0 {
                let quote = format!("someone said {} and {}", pick(&mut rng, POLITICAL), pick(&mut rng, POLITICAL));
                quoted_spans.push((0, quote.len()));
                text.push_str(&quote);
                text.push(' ');
            }
            text.push_str(&format!("[{post_id}]"));
            let words = 3 + rng.below(40) as usize;
            for _ in 0..words {
                text.push(' ');
                let roll = rng.below(10);
                text.push_str(match roll {
                    0..=5 => pick(&mut rng, FILLER),
                    6..=8 => pick(&mut rng, POLITICAL),
                    _ => pick(&mut rng, cues),
                });
            }
            out.push(PostRecord {
                post_id,
                author: author.clone(),
                affiliation: affiliation.to_string(),
                subforum: pick(&mut rng, SUBFORUMS).to_string(),
                thread_id: format!("t{}", rng.below(50)),
                seq: (p as u64) * 10 + rng.below(10),
                text,
                quoted_spans,
            });
        }
    }
    out
}

pub fn corpus_from(records: Vec<PostRecord>) -> Corpus {
    Corpus::from_records(records.into_iter().enumerate().map(|(i, r)| (i + 1, r)), &AffiliationTable::default())
        .expect("synthetic corpus is valid")
}

pub fn synthetic_corpus(users: usize, posts_per_user: usize, seed: u64) -> Corpus {
    corpus_from(synthetic_records(users, posts_per_user, seed))
}

pub fn manifest(corpus: &Corpus) -> SplitManifest {
    SplitManifest::build(corpus, 0.7, 42).expect("manifest builds")
}

pub fn write_jsonl(path: &Path, records: &[PostRecord]) {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Every regular file under `dir`, as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
