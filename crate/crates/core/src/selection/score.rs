//! Political signal scoring.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lexicon::{tokenize, PhraseMatcher, WeightedLexicon};
use crate::corpus::RawPost;

pub const SUBFORUM_BOOST: u32 = 5;
pub const DEFAULT_NOISE_RANGE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub seed: u64,
    /// Tie-break noise is drawn from `[0, noise_range)`; 0 disables it.
    pub noise_range: f64,
    /// Score quoted text too. Off by default: quoting an opponent is not
    /// the author's own signal.
    pub include_quotes: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { seed: 42, noise_range: DEFAULT_NOISE_RANGE, include_quotes: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoliticalScore {
    pub base: u32,
    pub subforum_boost: u32,
    pub noise: f64,
}

impl PoliticalScore {
    pub fn total(&self) -> f64 {
        f64::from(self.base) + f64::from(self.subforum_boost) + self.noise
    }
}

/// Deterministic value in `[0, range)` derived from `(seed, post_id)`.
pub fn tie_break_noise(post_id: &str, seed: u64, range: f64) -> f64 {
    if range <= 0.0 {
        return 0.0;
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(post_id.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    // 53 high bits give a uniform double in [0, 1)
    let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
    unit * range
}

/// Lexicon compiled for repeated scoring.
#[derive(Debug, Clone)]
pub struct Scorer {
    lexicon: WeightedLexicon,
    weights: Vec<u32>,
    matcher: PhraseMatcher,
    options: ScoreOptions,
}

impl Scorer {
    pub fn new(lexicon: WeightedLexicon, options: ScoreOptions) -> Self {
        let terms: Vec<(String, u32)> = lexicon.ordered_terms().map(|(_, t, w)| (t.to_string(), w)).collect();
        let matcher = PhraseMatcher::new(terms.iter().map(|(t, _)| t.as_str()));
        Self { weights: terms.iter().map(|(_, w)| *w).collect(), lexicon, matcher, options }
    }

    pub fn lexicon(&self) -> &WeightedLexicon {
        &self.lexicon
    }

    pub fn options(&self) -> &ScoreOptions {
        &self.options
    }

    fn scored_tokens(&self, post: &RawPost) -> Vec<String> {
        if self.options.include_quotes {
            tokenize(&post.text)
        } else {
            tokenize(&post.original_text())
        }
    }

    /// Per-term occurrence counts in [`WeightedLexicon::ordered_terms`] order.
    pub fn term_counts(&self, post: &RawPost) -> Vec<u32> {
        self.matcher.counts(&self.scored_tokens(post))
    }

    pub fn score(&self, post: &RawPost) -> PoliticalScore {
        let counts = self.term_counts(post);
        self.score_from_counts(post, &counts)
    }

    pub(crate) fn score_from_counts(&self, post: &RawPost, counts: &[u32]) -> PoliticalScore {
        let base = counts.iter().zip(&self.weights).map(|(c, w)| c * w).sum();
        let subforum_boost = if self.lexicon.is_political_subforum(&post.subforum) { SUBFORUM_BOOST } else { 0 };
        PoliticalScore {
            base,
            subforum_boost,
            noise: tie_break_noise(&post.post_id, self.options.seed, self.options.noise_range),
        }
    }
}

/// One-off scoring with default options and the given seed.
pub fn score_post(post: &RawPost, lexicon: &WeightedLexicon, seed: u64) -> PoliticalScore {
    Scorer::new(lexicon.clone(), ScoreOptions { seed, ..ScoreOptions::default() }).score(post)
}
