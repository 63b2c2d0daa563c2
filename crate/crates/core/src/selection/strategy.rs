//! Post-selection strategies for profile generation.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lexicon::{default_controversial_keywords, load_keywords, tokenize, PhraseMatcher, WeightedLexicon};
use super::score::{ScoreOptions, Scorer};
use crate::corpus::RawPost;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Share of a PoliticalSignal selection taken straight from the top scores.
pub const TOP_SHARE_NUM: usize = 3;
pub const TOP_SHARE_DEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    PoliticalSignal,
    Random,
    ControversialTopic,
    RecentPost,
    LongForm,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::PoliticalSignal,
        StrategyKind::Random,
        StrategyKind::ControversialTopic,
        StrategyKind::RecentPost,
        StrategyKind::LongForm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::PoliticalSignal => "political_signal",
            StrategyKind::Random => "random",
            StrategyKind::ControversialTopic => "controversial_topic",
            StrategyKind::RecentPost => "recent_post",
            StrategyKind::LongForm => "long_form",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown selection strategy {s:?}")))
    }
}

/// A resolved strategy with its parameters.
#[derive(Debug, Clone)]
pub enum SelectionStrategy {
    PoliticalSignal(Arc<Scorer>),
    Random { seed: u64 },
    ControversialTopic { keywords: Arc<PhraseMatcher>, include_quotes: bool },
    RecentPost,
    LongForm,
}

/// Everything needed to build any strategy.
#[derive(Debug, Clone)]
pub struct StrategyParams {
    pub lexicon: WeightedLexicon,
    pub score: ScoreOptions,
    pub controversial_keywords: Option<std::path::PathBuf>,
}

impl StrategyParams {
    pub fn seed(&self) -> u64 {
        self.score.seed
    }

    /// Hash of everything that influences which posts are selected: the
    /// lexicon, the scoring options and the resolved controversial keywords.
    pub fn fingerprint(&self) -> Result<String> {
        let keywords = match &self.controversial_keywords {
            Some(path) => load_keywords(path)?,
            None => default_controversial_keywords(),
        };
        let canonical = serde_json::json!({
            "lexicon": self.lexicon,
            "score": self.score,
            "controversial_keywords": keywords,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        Ok(hex::encode(&digest[..8]))
    }
}

impl SelectionStrategy {
    pub fn build(kind: StrategyKind, params: &StrategyParams) -> Result<Self> {
        Ok(match kind {
            StrategyKind::PoliticalSignal => {
                SelectionStrategy::PoliticalSignal(Arc::new(Scorer::new(params.lexicon.clone(), params.score)))
            }
            StrategyKind::Random => SelectionStrategy::Random { seed: params.seed() },
            StrategyKind::ControversialTopic => {
                let keywords = match &params.controversial_keywords {
                    Some(path) => load_keywords(path)?,
                    None => default_controversial_keywords(),
                };
                Self::controversial(&keywords, params.score.include_quotes)
            }
            StrategyKind::RecentPost => SelectionStrategy::RecentPost,
            StrategyKind::LongForm => SelectionStrategy::LongForm,
        })
    }

    pub fn controversial_from_file(path: &Path, include_quotes: bool) -> Result<Self> {
        Ok(Self::controversial(&load_keywords(path)?, include_quotes))
    }

    pub fn controversial(keywords: &[String], include_quotes: bool) -> Self {
        SelectionStrategy::ControversialTopic {
            keywords: Arc::new(PhraseMatcher::new(keywords.iter().map(String::as_str))),
            include_quotes,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            SelectionStrategy::PoliticalSignal(_) => StrategyKind::PoliticalSignal,
            SelectionStrategy::Random { .. } => StrategyKind::Random,
            SelectionStrategy::ControversialTopic { .. } => StrategyKind::ControversialTopic,
            SelectionStrategy::RecentPost => StrategyKind::RecentPost,
            SelectionStrategy::LongForm => StrategyKind::LongForm,
        }
    }
}

/// How many posts a profile is built from. Serialises as a number or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PostBudget {
    Count(usize),
    All,
}

impl PostBudget {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            PostBudget::Count(n) => n,
            PostBudget::All => available,
        }
    }

    /// Rejects negative counts coming from config files or flags.
    pub fn from_signed(n: i64) -> Result<Self> {
        usize::try_from(n)
            .map(PostBudget::Count)
            .map_err(|_| Error::Config(format!("post count must be non-negative, got {n}")))
    }
}

impl fmt::Display for PostBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostBudget::Count(n) => write!(f, "{n}"),
            PostBudget::All => f.write_str("all"),
        }
    }
}

impl Serialize for PostBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PostBudget::Count(n) => s.serialize_u64(*n as u64),
            PostBudget::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for PostBudget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => PostBudget::from_signed(n).map_err(serde::de::Error::custom),
            Raw::Str(s) if s == "all" => Ok(PostBudget::All),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a post count or \"all\", got {s:?}"))),
        }
    }
}

/// Number of posts a PoliticalSignal selection of size `n` takes by score:
/// `ceil(0.6 * n)`.
pub fn top_share(n: usize) -> usize {
    (n * TOP_SHARE_NUM).div_ceil(TOP_SHARE_DEN)
}

/// Cosine distance, with the conventions that two zero vectors are at
/// distance 0 and a zero vector is at distance 1 from any non-zero vector.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => 1.0 - dot / (na * nb),
    }
}

/// Descending by key, then most recent first, then input position.
fn rank_desc<K: PartialOrd>(posts: &[RawPost], keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..posts.len()).collect();
    idx.sort_by(|&a, &b| {
        keys[b].partial_cmp(&keys[a]).unwrap_or(Ordering::Equal).then(posts[b].seq.cmp(&posts[a].seq)).then(a.cmp(&b))
    });
    idx
}

fn political_signal(posts: &[RawPost], n: usize, scorer: &Scorer) -> Vec<usize> {
    let counts: Vec<Vec<u32>> = posts.iter().map(|p| scorer.term_counts(p)).collect();
    let totals: Vec<f64> = posts.iter().zip(&counts).map(|(p, c)| scorer.score_from_counts(p, c).total()).collect();
    let ranked = rank_desc(posts, &totals);
    let k_top = top_share(n);
    let mut chosen: Vec<usize> = ranked[..k_top].to_vec();

    let vectors: Vec<Vec<f64>> = counts.iter().map(|c| c.iter().map(|&x| f64::from(x)).collect()).collect();
    let dim = scorer.lexicon().ordered_terms().count();
    let mut centroid = vec![0.0; dim];
    for &i in &chosen {
        for (acc, x) in centroid.iter_mut().zip(&vectors[i]) {
            *acc += x;
        }
    }
    for acc in &mut centroid {
        *acc /= k_top as f64;
    }

    // Greedy farthest-point: each pick maximises its minimum distance to the
    // reference set, which starts as the top set's centroid and grows with
    // every pick. Ties go to the higher-ranked post.
    let mut references = vec![centroid];
    let mut pool: Vec<usize> = ranked[k_top..].to_vec();
    let mut min_dist: Vec<f64> = pool.iter().map(|&i| cosine_distance(&vectors[i], &references[0])).collect();
    while chosen.len() < n {
        let mut best = 0;
        for j in 1..pool.len() {
            if min_dist[j] > min_dist[best] {
                best = j;
            }
        }
        let pick = pool.remove(best);
        min_dist.remove(best);
        references.push(vectors[pick].clone());
        let latest = references.last().expect("just pushed");
        for (d, &i) in min_dist.iter_mut().zip(&pool) {
            *d = d.min(cosine_distance(&vectors[i], latest));
        }
        chosen.push(pick);
    }
    chosen
}

/// Picks at most `n` posts. When `n >= posts.len()` every post is returned
/// in input order. Random and RecentPost return their picks in input order;
/// the ranking strategies return rank order.
pub fn select_posts(posts: &[RawPost], n: usize, strategy: &SelectionStrategy) -> Vec<RawPost> {
    select_indices(posts, n, strategy).into_iter().map(|i| posts[i].clone()).collect()
}

pub fn select_indices(posts: &[RawPost], n: usize, strategy: &SelectionStrategy) -> Vec<usize> {
    if n >= posts.len() {
        return (0..posts.len()).collect();
    }
    if n == 0 {
        return Vec::new();
    }
    match strategy {
        SelectionStrategy::PoliticalSignal(scorer) => political_signal(posts, n, scorer),
        SelectionStrategy::Random { seed } => {
            let key = posts.first().map(|p| p.author.as_str()).unwrap_or("");
            let mut idx: Vec<usize> = (0..posts.len()).collect();
            SplitMix64::keyed(*seed, key).shuffle(&mut idx);
            idx.truncate(n);
            idx.sort_unstable();
            idx
        }
        SelectionStrategy::ControversialTopic { keywords, include_quotes } => {
            let hits: Vec<u32> = posts
                .iter()
                .map(|p| {
                    let text = if *include_quotes { p.text.clone() } else { p.original_text() };
                    keywords.counts(&tokenize(&text)).iter().sum()
                })
                .collect();
            let mut ranked = rank_desc(posts, &hits);
            ranked.truncate(n);
            ranked
        }
        SelectionStrategy::RecentPost => {
            let mut idx: Vec<usize> = (0..posts.len()).collect();
            idx.sort_by_key(|&i| std::cmp::Reverse((posts[i].seq, i)));
            idx.truncate(n);
            idx.sort_unstable();
            idx
        }
        SelectionStrategy::LongForm => {
            let words: Vec<usize> = posts.iter().map(RawPost::word_count).collect();
            let mut ranked = rank_desc(posts, &words);
            ranked.truncate(n);
            ranked
        }
    }
}
