//! Forum corpus ingestion, label normalisation and the per-user split.

mod affiliation;
mod split;

use std::collections::{btree_map, BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use affiliation::{map_affiliation, AffiliationTable};
pub use split::{split_user_posts, SplitAssignment, SplitManifest, DEFAULT_SPLIT_RATIO, DEFAULT_SPLIT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PoliticalLeaning {
    Left,
    Right,
    Unknown,
}

impl PoliticalLeaning {
    pub fn is_known(self) -> bool {
        !matches!(self, PoliticalLeaning::Unknown)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PoliticalLeaning::Left => "LEFT",
            PoliticalLeaning::Right => "RIGHT",
            PoliticalLeaning::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for PoliticalLeaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One forum post. `quoted_spans` are byte ranges into `text`, sorted and
/// non-overlapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    pub author: String,
    pub subforum: String,
    pub thread_id: String,
    pub seq: u64,
    pub text: String,
    pub quoted_spans: Vec<(usize, usize)>,
}

impl RawPost {
    /// Splits the text into `(segment, is_quoted)` pieces in order. Empty
    /// pieces are skipped.
    pub fn segments(&self) -> Vec<(&str, bool)> {
        let mut out = Vec::with_capacity(self.quoted_spans.len() * 2 + 1);
        let mut cursor = 0;
        for &(start, end) in &self.quoted_spans {
            if start > cursor {
                out.push((&self.text[cursor..start], false));
            }
            if end > start {
                out.push((&self.text[start..end], true));
            }
            cursor = end;
        }
        if cursor < self.text.len() {
            out.push((&self.text[cursor..], false));
        }
        out
    }

    /// Text with quoted spans removed (each replaced by a single space).
    pub fn original_text(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        for (segment, quoted) in self.segments() {
            if quoted {
                out.push(' ');
            } else {
                out.push_str(segment);
            }
        }
        out
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub declared_affiliation: String,
    pub leaning: PoliticalLeaning,
    /// Ordered by `seq`, strictly increasing.
    pub posts: Vec<RawPost>,
}

/// One line of the JSONL ingestion format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub post_id: String,
    pub author: String,
    pub affiliation: String,
    #[serde(default)]
    pub subforum: String,
    pub thread_id: String,
    pub seq: u64,
    pub text: String,
    #[serde(default)]
    pub quoted_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub users: Vec<UserRecord>,
}

fn validate_spans(record: &mut PostRecord) -> std::result::Result<(), String> {
    record.quoted_spans.sort_unstable();
    let len = record.text.len();
    let mut prev_end = 0;
    for &(start, end) in &record.quoted_spans {
        if start > end || end > len {
            return Err(format!("quoted span ({start}, {end}) outside text of {len} bytes"));
        }
        if !record.text.is_char_boundary(start) || !record.text.is_char_boundary(end) {
            return Err(format!("quoted span ({start}, {end}) splits a UTF-8 character"));
        }
        if start < prev_end {
            return Err(format!("quoted span ({start}, {end}) overlaps the previous span"));
        }
        prev_end = end;
    }
    Ok(())
}

impl Corpus {
    /// Groups validated records into users. `records` carry their 1-based
    /// source line for error reporting.
    pub fn from_records(
        records: impl IntoIterator<Item = (usize, PostRecord)>,
        table: &AffiliationTable,
    ) -> Result<Self> {
        let mut seen_ids = HashSet::new();
        let mut users: BTreeMap<String, UserRecord> = BTreeMap::new();
        for (line, mut record) in records {
            validate_spans(&mut record).map_err(|message| Error::Parse { line, message })?;
            if !seen_ids.insert(record.post_id.clone()) {
                return Err(Error::Ingestion(format!("duplicate post_id {:?} at line {line}", record.post_id)));
            }
            let user = match users.entry(record.author.clone()) {
                btree_map::Entry::Vacant(slot) => slot.insert(UserRecord {
                    username: record.author.clone(),
                    declared_affiliation: record.affiliation.clone(),
                    leaning: table.map(&record.affiliation),
                    posts: Vec::new(),
                }),
                btree_map::Entry::Occupied(slot) => slot.into_mut(),
            };
            if user.declared_affiliation != record.affiliation {
                return Err(Error::Ingestion(format!(
                    "user {:?} declares both {:?} and {:?} (line {line})",
                    user.username, user.declared_affiliation, record.affiliation
                )));
            }
            user.posts.push(RawPost {
                post_id: record.post_id,
                author: record.author,
                subforum: record.subforum,
                thread_id: record.thread_id,
                seq: record.seq,
                text: record.text,
                quoted_spans: record.quoted_spans,
            });
        }
        for user in users.values_mut() {
            user.posts.sort_by_key(|p| p.seq);
            if let Some(w) = user.posts.windows(2).find(|w| w[0].seq == w[1].seq) {
                return Err(Error::Ingestion(format!(
                    "user {:?} has two posts with seq {} ({:?}, {:?})",
                    user.username, w[0].seq, w[0].post_id, w[1].post_id
                )));
            }
        }
        Ok(Self { users: users.into_values().collect() })
    }

    pub fn from_csv(reader: impl Read, table: &AffiliationTable) -> Result<Self> {
        #[derive(Deserialize)]
        struct CsvRow {
            post_id: String,
            author: String,
            affiliation: String,
            #[serde(default)]
            subforum: String,
            thread_id: String,
            seq: u64,
            text: String,
            #[serde(default)]
            quoted_spans: String,
        }

        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for (idx, row) in rdr.deserialize::<CsvRow>().enumerate() {
            // header is line 1
            let line = idx + 2;
            let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let quoted_spans = if row.quoted_spans.trim().is_empty() {
                Vec::new()
            } else {
                serde_json::from_str(&row.quoted_spans)
                    .map_err(|e| Error::Parse { line, message: format!("quoted_spans: {e}") })?
            };
            records.push((
                line,
                PostRecord {
                    post_id: row.post_id,
                    author: row.author,
                    affiliation: row.affiliation,
                    subforum: row.subforum,
                    thread_id: row.thread_id,
                    seq: row.seq,
                    text: row.text,
                    quoted_spans,
                },
            ));
        }
        Self::from_records(records, table)
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn post_count(&self) -> usize {
        self.users.iter().map(|u| u.posts.len()).sum()
    }

    pub fn user(&self, username: &str) -> Option<&UserRecord> {
        self.users.binary_search_by(|u| u.username.as_str().cmp(username)).ok().map(|i| &self.users[i])
    }

    pub fn records(&self) -> impl Iterator<Item = PostRecord> + '_ {
        self.users.iter().flat_map(|user| {
            user.posts.iter().map(move |p| PostRecord {
                post_id: p.post_id.clone(),
                author: p.author.clone(),
                affiliation: user.declared_affiliation.clone(),
                subforum: p.subforum.clone(),
                thread_id: p.thread_id.clone(),
                seq: p.seq,
                text: p.text.clone(),
                quoted_spans: p.quoted_spans.clone(),
            })
        })
    }

    /// Canonical JSONL: users by name, posts by seq.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSONL serialisation, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for record in self.records() {
            hasher.update(serde_json::to_vec(&record).expect("records serialize"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Parses the JSONL ingestion stream. Blank lines are ignored.
pub fn parse_corpus(input: impl BufRead) -> Result<Corpus> {
    parse_corpus_with(input, &AffiliationTable::default())
}

pub fn parse_corpus_with(input: impl BufRead, table: &AffiliationTable) -> Result<Corpus> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PostRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        records.push((line_no, record));
    }
    Corpus::from_records(records, table)
}

/// Keeps only LEFT/RIGHT users. Surviving records are untouched.
pub fn filter_known(corpus: &Corpus) -> Corpus {
    Corpus { users: corpus.users.iter().filter(|u| u.leaning.is_known()).cloned().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, author: &str, aff: &str, seq: u64, text: &str) -> String {
        serde_json::json!({
            "post_id": id, "author": author, "affiliation": aff, "subforum": "",
            "thread_id": "t1", "seq": seq, "text": text, "quoted_spans": []
        })
        .to_string()
    }

    #[test]
    fn empty_stream() {
        let corpus = parse_corpus("".as_bytes()).unwrap();
        assert!(corpus.users.is_empty());
    }

    #[test]
    fn groups_and_orders_posts() {
        let input = [
            line("p2", "alice", "Democrat", 5, "later"),
            line("p3", "bob", "Republican", 1, "hi"),
            line("p1", "alice", "Democrat", 2, "earlier"),
        ]
        .join("\n");
        let corpus = parse_corpus(input.as_bytes()).unwrap();
        assert_eq!(corpus.users.len(), 2);
        let alice = corpus.user("alice").unwrap();
        assert_eq!(alice.posts.len(), 2);
        assert_eq!(alice.posts[0].post_id, "p1");
        assert_eq!(alice.leaning, PoliticalLeaning::Left);
        assert_eq!(corpus.user("bob").unwrap().posts.len(), 1);
    }

    #[test]
    fn missing_field_names_the_field_and_line() {
        let input = format!(
            "{}\n{}",
            line("p1", "a", "Green", 1, "x"),
            r#"{"post_id":"p2","author":"a","affiliation":"Green","thread_id":"t","seq":2}"#
        );
        match parse_corpus(input.as_bytes()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("`text`"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_post_id_rejected() {
        let input = [line("p1", "a", "Green", 1, "x"), line("p1", "b", "Green", 1, "y")].join("\n");
        assert_eq!(parse_corpus(input.as_bytes()).unwrap_err().category(), "ingestion");
    }

    #[test]
    fn duplicate_seq_rejected() {
        let input = [line("p1", "a", "Green", 1, "x"), line("p2", "a", "Green", 1, "y")].join("\n");
        assert_eq!(parse_corpus(input.as_bytes()).unwrap_err().category(), "ingestion");
    }

    #[test]
    fn bad_spans_rejected() {
        let rec = r#"{"post_id":"p","author":"a","affiliation":"x","thread_id":"t","seq":1,"text":"abc","quoted_spans":[[1,9]]}"#;
        assert!(matches!(parse_corpus(rec.as_bytes()).unwrap_err(), Error::Parse { line: 1, .. }));
        let rec = r#"{"post_id":"p","author":"a","affiliation":"x","thread_id":"t","seq":1,"text":"abcdef","quoted_spans":[[0,3],[2,4]]}"#;
        assert!(parse_corpus(rec.as_bytes()).is_err());
    }

    #[test]
    fn segments_split_quotes() {
        let post = RawPost {
            post_id: "p".into(),
            author: "a".into(),
            subforum: String::new(),
            thread_id: "t".into(),
            seq: 0,
            text: "I agree. quoted bit then mine".into(),
            quoted_spans: vec![(9, 19)],
        };
        assert_eq!(post.segments(), vec![("I agree. ", false), ("quoted bit", true), (" then mine", false)]);
        assert_eq!(post.original_text(), "I agree.   then mine");
    }

    #[test]
    fn filter_known_drops_unknown() {
        let input = [line("p1", "a", "Liberal", 1, "x"), line("p2", "b", "Green", 1, "y")].join("\n");
        let corpus = parse_corpus(input.as_bytes()).unwrap();
        let known = filter_known(&corpus);
        assert_eq!(known.users.len(), 1);
        assert_eq!(known.users[0], corpus.users[0]);

        let input = line("p2", "b", "Green", 1, "y");
        assert!(filter_known(&parse_corpus(input.as_bytes()).unwrap()).users.is_empty());
    }

    #[test]
    fn csv_matches_jsonl() {
        let csv = "post_id,author,affiliation,subforum,thread_id,seq,text,quoted_spans\n\
                   p1,alice,Democrat,,t1,2,\"said, \"\"hi\"\"\",\"[[0,4]]\"\n\
                   p2,bob,Republican,Politics,t1,1,hello,\n";
        let corpus = Corpus::from_csv(csv.as_bytes(), &AffiliationTable::default()).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let again = parse_corpus(buf.as_slice()).unwrap();
        assert_eq!(corpus, again);
        assert_eq!(again.user("alice").unwrap().posts[0].quoted_spans, vec![(0, 4)]);
    }
}
