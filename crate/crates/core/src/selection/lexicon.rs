//! Tiered political lexicon and the phrase matcher built from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.json");
const DEFAULT_CONTROVERSIAL: &str = include_str!("../../data/controversial_keywords.json");

/// Lowercases and splits on anything that is not alphanumeric. Hyphens and
/// apostrophes are separators, so `left-wing` is the two-token phrase
/// `left wing`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    General,
    Party,
    HotButton,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::General, Tier::Party, Tier::HotButton];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedLexicon {
    pub general_terms: BTreeMap<String, u32>,
    pub party_terms: BTreeMap<String, u32>,
    pub hot_button_terms: BTreeMap<String, u32>,
    #[serde(default)]
    pub political_subforums: BTreeSet<String>,
}

impl WeightedLexicon {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: WeightedLexicon = serde_json::from_str(text).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        raw.normalized()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Lowercases terms onto their token form and checks the invariants:
    /// non-empty terms, positive weights, disjoint tiers.
    pub fn normalized(self) -> Result<Self> {
        let mut seen: HashMap<String, Tier> = HashMap::new();
        let mut norm_tier = |tier: Tier, terms: BTreeMap<String, u32>| -> Result<BTreeMap<String, u32>> {
            let mut out = BTreeMap::new();
            for (term, weight) in terms {
                let key = tokenize(&term).join(" ");
                if key.is_empty() {
                    return Err(Error::Config(format!("lexicon term {term:?} has no tokens")));
                }
                if weight == 0 {
                    return Err(Error::Config(format!("lexicon term {term:?} has zero weight")));
                }
                if let Some(prev) = seen.insert(key.clone(), tier) {
                    return Err(Error::Config(format!(
                        "lexicon term {term:?} appears in both {prev:?} and {tier:?} tiers"
                    )));
                }
                out.insert(key, weight);
            }
            Ok(out)
        };
        let general_terms = norm_tier(Tier::General, self.general_terms)?;
        let party_terms = norm_tier(Tier::Party, self.party_terms)?;
        let hot_button_terms = norm_tier(Tier::HotButton, self.hot_button_terms)?;
        Ok(Self {
            general_terms,
            party_terms,
            hot_button_terms,
            political_subforums: self.political_subforums.into_iter().map(|s| s.trim().to_lowercase()).collect(),
        })
    }

    pub fn with_political_subforums<I, S>(mut self, subforums: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.political_subforums = subforums.into_iter().map(|s| s.as_ref().trim().to_lowercase()).collect();
        self
    }

    pub fn tier_terms(&self, tier: Tier) -> &BTreeMap<String, u32> {
        match tier {
            Tier::General => &self.general_terms,
            Tier::Party => &self.party_terms,
            Tier::HotButton => &self.hot_button_terms,
        }
    }

    /// Weight of a term, looked up by its normalised token form.
    pub fn weight(&self, term: &str) -> Option<u32> {
        let key = tokenize(term).join(" ");
        Tier::ALL.iter().find_map(|&t| self.tier_terms(t).get(&key).copied())
    }

    pub fn is_political_subforum(&self, subforum: &str) -> bool {
        self.political_subforums.contains(&subforum.trim().to_lowercase())
    }

    /// All terms in tier order (general, party, hot-button), each tier sorted.
    /// This is the dimension order of term-count vectors.
    pub fn ordered_terms(&self) -> impl Iterator<Item = (Tier, &str, u32)> + '_ {
        Tier::ALL
            .into_iter()
            .flat_map(move |tier| self.tier_terms(tier).iter().map(move |(term, &w)| (tier, term.as_str(), w)))
    }
}

/// The bundled three-tier lexicon with no political subforums configured.
pub fn default_lexicon() -> WeightedLexicon {
    WeightedLexicon::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
}

/// Bundled controversial-topic keyword list.
pub fn default_controversial_keywords() -> Vec<String> {
    serde_json::from_str(DEFAULT_CONTROVERSIAL).expect("bundled keyword list is valid")
}

pub fn load_keywords(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("controversial keyword file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("controversial keyword file {}: {e}", path.display())))
}

/// Token-boundary phrase matcher. Scans left to right and, at each position,
/// takes the longest phrase that matches; matched tokens are consumed.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    by_first: HashMap<String, Vec<(Vec<String>, usize)>>,
    len: usize,
}

impl PhraseMatcher {
    pub fn new<'a>(phrases: impl IntoIterator<Item = &'a str>) -> Self {
        let mut by_first: HashMap<String, Vec<(Vec<String>, usize)>> = HashMap::new();
        let mut len = 0;
        for (idx, phrase) in phrases.into_iter().enumerate() {
            let tokens = tokenize(phrase);
            if let Some(first) = tokens.first() {
                by_first.entry(first.clone()).or_default().push((tokens, idx));
            }
            len = idx + 1;
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        Self { by_first, len }
    }

    /// Number of phrases (the dimension of [`PhraseMatcher::counts`]).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Per-phrase occurrence counts, indexed by construction order.
    pub fn counts(&self, tokens: &[String]) -> Vec<u32> {
        let mut counts = vec![0; self.len];
        let mut i = 0;
        while i < tokens.len() {
            let hit = self
                .by_first
                .get(&tokens[i])
                .and_then(|cands| cands.iter().find(|(phrase, _)| tokens[i..].starts_with(phrase)));
            match hit {
                Some((phrase, idx)) => {
                    counts[*idx] += 1;
                    i += phrase.len();
                }
                None => i += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_on_punctuation() {
        assert_eq!(tokenize("Left-Wing, GOP's tax!"), vec!["left", "wing", "gop", "s", "tax"]);
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn default_weights() {
        let lex = default_lexicon();
        assert_eq!(lex.weight("vote"), Some(1));
        assert_eq!(lex.weight("maga"), Some(2));
        assert_eq!(lex.weight("border"), Some(3));
        assert_eq!(lex.weight("Tea Party"), Some(2));
        assert_eq!(lex.weight("socialism"), Some(3));
        assert_eq!(lex.weight("sandwich"), None);
    }

    #[test]
    fn overlapping_tiers_rejected() {
        let json = r#"{"general_terms":{"tax":1},"party_terms":{},"hot_button_terms":{"TAX":3}}"#;
        assert_eq!(WeightedLexicon::from_json(json).unwrap_err().category(), "config");
    }

    #[test]
    fn zero_weight_rejected() {
        let json = r#"{"general_terms":{"tax":0},"party_terms":{},"hot_button_terms":{}}"#;
        assert!(WeightedLexicon::from_json(json).is_err());
    }

    #[test]
    fn longest_phrase_consumes() {
        let m = PhraseMatcher::new(["democrat", "democratic", "democratic party", "party"]);
        let counts = m.counts(&tokenize("the Democratic Party and a democrat party"));
        assert_eq!(counts, vec![1, 0, 1, 1]);
    }

    #[test]
    fn bundled_keywords_cover_hot_button_tier() {
        let keywords: BTreeSet<String> =
            default_controversial_keywords().iter().map(|k| tokenize(k).join(" ")).collect();
        assert!(keywords.len() >= 150);
        for term in default_lexicon().hot_button_terms.keys() {
            assert!(keywords.contains(term), "{term}");
        }
    }
}
