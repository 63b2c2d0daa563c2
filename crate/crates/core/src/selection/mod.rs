//! Political-signal scoring and the post-selection strategies.

mod lexicon;
mod score;
mod strategy;

pub use lexicon::{
    default_controversial_keywords, default_lexicon, load_keywords, tokenize, PhraseMatcher, Tier, WeightedLexicon,
};
pub use score::{
    score_post, tie_break_noise, PoliticalScore, ScoreOptions, Scorer, DEFAULT_NOISE_RANGE, SUBFORUM_BOOST,
};
pub use strategy::{
    cosine_distance, select_indices, select_posts, top_share, PostBudget, SelectionStrategy, StrategyKind,
    StrategyParams,
};
