//! Structured user profiles: prompt construction, response validation and
//! cached generation.

mod cache;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backend::{prompt_hash, Backend, BackendError};
use crate::corpus::RawPost;
use crate::error::{Error, Result};
use crate::response::{first_json_object, ResponseError};
use crate::selection::{select_posts, PostBudget, SelectionStrategy};

pub use cache::ProfileCache;

/// Substring that identifies a profile-generation prompt.
pub const PROFILE_TEMPLATE_ANCHOR: &str = "create a concise political profile summary";
pub const USERNAME_PREFIX: &str = "Username: ";
pub const POSTS_HEADER: &str = "Posts:\n";
pub const REASK_SUFFIX: &str = "\n\nReturn only the JSON object.";

pub const PROFILE_TEMPLATE: &str = r#"Analyze the following set of forum posts by the user and create a concise political profile summary. For this task:
1. Identify any consistent political indicators in their posts (criticism of specific politicians/parties, stance on issues, etc.)
2. Note recurring topics this user discusses
3. Observe distinctive language patterns (formal/informal, emotional/detached, specific phrases)
4. Identify who/what they consistently criticize or support
5. Determine if there's sufficient evidence to classify them as LEFT, RIGHT, or UNKNOWN

Format your response as a JSON object with these fields:
{
  "username": "the username",
  "political_leaning": "left/right/unknown",
  "confidence": "high/medium/low",
  "key_indicators": ["3-5 specific examples from posts that indicate political leaning"],
  "recurring_topics": ["list frequent topics"],
  "language_style": "brief description of their communication style",
  "sentiment_patterns": "who/what they criticize or support",
  "context_notes": "any additional relevant information"
}

IMPORTANT:
- Focus on clear patterns rather than isolated statements
- Maintain objectivity and avoid overinterpreting ambiguous content
- If there isn't sufficient evidence to determine orientation, mark as "unknown"
- Ensure your response is a valid JSON object"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileLeaning {
    Left,
    Right,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

/// Field order matches the generation template and is the canonical
/// serialisation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub username: String,
    pub political_leaning: ProfileLeaning,
    pub confidence: Confidence,
    pub key_indicators: Vec<String>,
    pub recurring_topics: Vec<String>,
    pub language_style: String,
    pub sentiment_patterns: String,
    pub context_notes: String,
}

impl UserProfile {
    /// Pretty-printed JSON in template field order; this is the text that is
    /// embedded into context prompts.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Field-level violations, empty when the profile is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.key_indicators.len();
        let (lo, hi) = match self.political_leaning {
            ProfileLeaning::Unknown => (0, 5),
            _ => (3, 5),
        };
        if !(lo..=hi).contains(&n) {
            out.push(format!("key_indicators: expected {lo}-{hi} entries, got {n}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(v.join("; ")))
        }
    }
}

/// Post text with quoted spans on their own `> quoted: ` lines.
pub fn render_post_body(post: &RawPost) -> String {
    let mut out = String::with_capacity(post.text.len() + 16);
    for (segment, quoted) in post.segments() {
        if quoted {
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            for line in segment.lines() {
                out.push_str("> quoted: ");
                out.push_str(line);
                out.push('\n');
            }
        } else {
            out.push_str(segment);
        }
    }
    out.trim_end().to_string()
}

/// Generation template, then the author's name, then one numbered
/// `--- Post k ---` block per post.
pub fn build_profile_prompt(posts: &[RawPost]) -> Result<String> {
    let first = posts.first().ok_or_else(|| Error::Usage("cannot build a profile prompt from zero posts".into()))?;
    let mut prompt = String::from(PROFILE_TEMPLATE);
    prompt.push_str("\n\n");
    prompt.push_str(USERNAME_PREFIX);
    prompt.push_str(&first.author);
    prompt.push_str("\n\n");
    prompt.push_str(POSTS_HEADER);
    for (i, post) in posts.iter().enumerate() {
        prompt.push_str(&format!("\n--- Post {} ---\n", i + 1));
        prompt.push_str(&render_post_body(post));
        prompt.push('\n');
    }
    Ok(prompt)
}

fn string_field(map: &Map<String, Value>, key: &str, optional: bool, errs: &mut Vec<String>) -> String {
    match map.get(key) {
        Some(Value::String(s)) => s.clone(),
        None | Some(Value::Null) if optional => String::new(),
        None => {
            errs.push(format!("{key}: missing"));
            String::new()
        }
        Some(other) => {
            errs.push(format!("{key}: expected string, got {other}"));
            String::new()
        }
    }
}

fn list_field(map: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Vec<String> {
    match map.get(key) {
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => out.push(s.clone()),
                    other => {
                        errs.push(format!("{key}: non-string entry {other}"));
                        break;
                    }
                }
            }
            out
        }
        None => {
            errs.push(format!("{key}: missing"));
            Vec::new()
        }
        Some(other) => {
            errs.push(format!("{key}: expected list, got {other}"));
            Vec::new()
        }
    }
}

fn enum_field<T>(
    map: &Map<String, Value>,
    key: &str,
    parse: impl Fn(&str) -> Option<T>,
    errs: &mut Vec<String>,
) -> Option<T> {
    let raw = string_field(map, key, false, errs);
    if !map.contains_key(key) || !map[key].is_string() {
        return None;
    }
    let parsed = parse(&raw.trim().to_lowercase());
    if parsed.is_none() {
        errs.push(format!("{key}: unexpected value {raw:?}"));
    }
    parsed
}

/// Extracts and validates a profile from model output.
pub fn parse_profile_response(raw: &str) -> std::result::Result<UserProfile, ResponseError> {
    let map = first_json_object(raw).ok_or_else(|| ResponseError::ParseFailure { raw: raw.to_string() })?;
    let mut errs = Vec::new();
    let username = string_field(&map, "username", false, &mut errs);
    let leaning = enum_field(
        &map,
        "political_leaning",
        |s| match s {
            "left" => Some(ProfileLeaning::Left),
            "right" => Some(ProfileLeaning::Right),
            "unknown" => Some(ProfileLeaning::Unknown),
            _ => None,
        },
        &mut errs,
    );
    let confidence = enum_field(
        &map,
        "confidence",
        |s| match s {
            "high" => Some(Confidence::High),
            "medium" => Some(Confidence::Medium),
            "low" => Some(Confidence::Low),
            _ => None,
        },
        &mut errs,
    );
    let key_indicators = list_field(&map, "key_indicators", &mut errs);
    let recurring_topics = list_field(&map, "recurring_topics", &mut errs);
    let language_style = string_field(&map, "language_style", false, &mut errs);
    let sentiment_patterns = string_field(&map, "sentiment_patterns", false, &mut errs);
    let context_notes = string_field(&map, "context_notes", true, &mut errs);
    let (Some(political_leaning), Some(confidence)) = (leaning, confidence) else {
        return Err(ResponseError::SchemaFailure { fields: errs, raw: raw.to_string() });
    };
    let profile = UserProfile {
        username,
        political_leaning,
        confidence,
        key_indicators,
        recurring_topics,
        language_style,
        sentiment_patterns,
        context_notes,
    };
    errs.extend(profile.violations());
    if errs.is_empty() {
        Ok(profile)
    } else {
        Err(ResponseError::SchemaFailure { fields: errs, raw: raw.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProfileKey {
    pub model: String,
    pub username: String,
    pub strategy: String,
    pub n_posts: PostBudget,
    pub corpus_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileStatus {
    Ok,
    /// The model never produced a valid profile, even after the re-ask.
    ProfileUnavailable,
}

impl fmt::Display for ProfileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileStatus::Ok => "ok",
            ProfileStatus::ProfileUnavailable => "profile_unavailable",
        })
    }
}

/// Outcome of one generation, as cached and journaled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub key: ProfileKey,
    pub status: ProfileStatus,
    pub profile: Option<UserProfile>,
    pub posts_sent: Vec<String>,
    pub prompt_hash: String,
    pub raw_responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// Runs select → prompt → complete → parse for one user, with one re-ask on
/// an unparseable response, behind an optional on-disk cache.
pub struct ProfileGenerator<'a> {
    backend: &'a dyn Backend,
    cache: Option<&'a ProfileCache>,
    corpus_hash: String,
}

impl<'a> ProfileGenerator<'a> {
    pub fn new(backend: &'a dyn Backend, cache: Option<&'a ProfileCache>, corpus_hash: impl Into<String>) -> Self {
        Self { backend, cache, corpus_hash: corpus_hash.into() }
    }

    pub fn key(&self, username: &str, strategy: &SelectionStrategy, budget: PostBudget) -> ProfileKey {
        ProfileKey {
            model: self.backend.spec().id().to_string(),
            username: username.to_string(),
            strategy: strategy.kind().to_string(),
            n_posts: budget,
            corpus_hash: self.corpus_hash.clone(),
        }
    }

    /// `posts` is the user's profile set. Backend failures are returned as
    /// errors and never cached.
    pub fn generate(
        &self,
        username: &str,
        posts: &[RawPost],
        strategy: &SelectionStrategy,
        budget: PostBudget,
    ) -> std::result::Result<ProfileRecord, ProfileError> {
        let key = self.key(username, strategy, budget);
        if posts.is_empty() {
            return Err(ProfileError::NoPosts(username.to_string()));
        }
        let selected = select_posts(posts, budget.resolve(posts.len()), strategy);
        let prompt = build_profile_prompt(&selected).map_err(|_| ProfileError::NoPosts(username.to_string()))?;
        let hash = prompt_hash(self.backend.spec(), &prompt);
        if let Some(cache) = self.cache {
            // A hit only counts if it was generated from this exact prompt;
            // changed selection settings or sampling options regenerate.
            if let Some(hit) = cache.get(&key)?.filter(|hit| hit.prompt_hash == hash) {
                return Ok(hit);
            }
        }
        let mut raw_responses = Vec::new();
        let mut errors = Vec::new();
        let mut profile = None;
        for attempt_prompt in [prompt.clone(), format!("{prompt}{REASK_SUFFIX}")] {
            let exchange = self.backend.complete(&attempt_prompt)?;
            raw_responses.push(exchange.response.clone());
            match parse_profile_response(&exchange.response) {
                Ok(p) => {
                    profile = Some(p);
                    break;
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        let record = ProfileRecord {
            key,
            status: if profile.is_some() { ProfileStatus::Ok } else { ProfileStatus::ProfileUnavailable },
            profile,
            posts_sent: selected.iter().map(|p| p.post_id.clone()).collect(),
            prompt_hash: hash,
            raw_responses,
            errors,
        };
        if let Some(cache) = self.cache {
            cache.put(&record)?;
        }
        Ok(record)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("user {0:?} has no profile-set posts")]
    NoPosts(String),
    #[error(transparent)]
    Cache(#[from] Error),
}
