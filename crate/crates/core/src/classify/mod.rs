//! Baseline and context-enriched stance classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::corpus::{PoliticalLeaning, RawPost};
use crate::error::{Error, Result};
use crate::profiling::{render_post_body, UserProfile};
use crate::response::{first_json_object, ResponseError};

pub const CONTEXT_ANCHOR: &str = "IMPORTANT CONTEXT ABOUT THIS USER:";
pub const POST_HEADER: &str = "Post:\n";

const INTRO: &str = "Analyze the following discussion group post and classify the author's political orientation.\n\n";
const CONTEXT_FOLLOWUP: &str = "Take the above user profile into account when analyzing this post. The profile reflects patterns from the user's previous posts, which may provide context for this specific post.\n\n";
const FORMAT_BLOCK: &str = r#"Provide your response in this exact JSON format:

{
  "orientation": "LEFT|RIGHT|UNKNOWN",
  "explanation": "A detailed explanation of why you chose this classification based on the content"
}

"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StanceLabel {
    Left,
    Right,
    Unknown,
}

impl StanceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Left => "LEFT",
            StanceLabel::Right => "RIGHT",
            StanceLabel::Unknown => "UNKNOWN",
        }
    }

    pub fn matches(self, gold: PoliticalLeaning) -> bool {
        matches!(
            (self, gold),
            (StanceLabel::Left, PoliticalLeaning::Left) | (StanceLabel::Right, PoliticalLeaning::Right)
        )
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Context,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Context => "context",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Ok,
    ParseFailure,
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub post_id: String,
    pub gold: PoliticalLeaning,
    pub predicted: Option<StanceLabel>,
    pub explanation: String,
    pub mode: Mode,
    pub classifier_model: String,
    pub profile_model: Option<String>,
    pub status: ResultStatus,
    /// Context was requested but the profile was unavailable, so the post
    /// was classified in baseline mode.
    #[serde(default)]
    pub profile_fallback: bool,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ClassificationResult {
    pub fn is_correct(&self) -> bool {
        self.status == ResultStatus::Ok && self.predicted.is_some_and(|p| p.matches(self.gold))
    }
}

fn check_post(post: &RawPost) -> Result<String> {
    let body = render_post_body(post);
    if body.trim().is_empty() {
        return Err(Error::Usage(format!("post {:?} has no text to classify", post.post_id)));
    }
    Ok(body)
}

fn assemble(context: Option<&str>, body: &str) -> String {
    let mut prompt = String::from(INTRO);
    if let Some(profile_json) = context {
        prompt.push_str(CONTEXT_ANCHOR);
        prompt.push('\n');
        prompt.push_str(profile_json);
        prompt.push_str("\n\n");
        prompt.push_str(CONTEXT_FOLLOWUP);
    }
    prompt.push_str(FORMAT_BLOCK);
    prompt.push_str(POST_HEADER);
    prompt.push_str(body);
    prompt.push('\n');
    prompt
}

/// The classification template without its context block, followed by the post.
pub fn build_baseline_prompt(post: &RawPost) -> Result<String> {
    Ok(assemble(None, &check_post(post)?))
}

/// The full classification template with the profile's canonical JSON in
/// place of the summary placeholder.
pub fn build_context_prompt(post: &RawPost, profile: &UserProfile) -> Result<String> {
    profile.validate()?;
    Ok(assemble(Some(&profile.canonical_json()), &check_post(post)?))
}

/// Inverse of [`parse_classification`], used by mocks and tests.
pub fn render_classification(label: StanceLabel, explanation: &str) -> String {
    serde_json::json!({ "orientation": label.as_str(), "explanation": explanation }).to_string()
}

pub fn parse_classification(raw: &str) -> std::result::Result<(StanceLabel, String), ResponseError> {
    let map = first_json_object(raw).ok_or_else(|| ResponseError::ParseFailure { raw: raw.to_string() })?;
    let schema = |field: String| ResponseError::SchemaFailure { fields: vec![field], raw: raw.to_string() };
    let label = match map.get("orientation").and_then(|v| v.as_str()) {
        Some(s) => match s.trim().to_uppercase().as_str() {
            "LEFT" => StanceLabel::Left,
            "RIGHT" => StanceLabel::Right,
            "UNKNOWN" => StanceLabel::Unknown,
            other => return Err(schema(format!("orientation: unexpected value {other:?}"))),
        },
        None => return Err(schema("orientation: missing or not a string".into())),
    };
    let explanation = match map.get("explanation") {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    Ok((label, explanation))
}

/// Profile input for one classification.
#[derive(Debug, Clone, Copy)]
pub enum ProfileContext<'a> {
    None,
    Profile {
        profile: &'a UserProfile,
        model: &'a str,
    },
    /// The generator failed to produce a profile; classify in baseline mode
    /// and flag the fallback.
    Unavailable {
        model: &'a str,
    },
}

/// Classifies one test post. Usage errors (empty post, unlabelled gold) are
/// returned; backend and parse failures are recorded in the result.
pub fn classify_post(
    post: &RawPost,
    gold: PoliticalLeaning,
    context: ProfileContext<'_>,
    backend: &dyn Backend,
) -> Result<ClassificationResult> {
    if !gold.is_known() {
        return Err(Error::Usage(format!("post {:?} has no LEFT/RIGHT gold label", post.post_id)));
    }
    let (prompt, mode, profile_model, profile_fallback) = match context {
        ProfileContext::None => (build_baseline_prompt(post)?, Mode::Baseline, None, false),
        ProfileContext::Profile { profile, model } => {
            (build_context_prompt(post, profile)?, Mode::Context, Some(model.to_string()), false)
        }
        ProfileContext::Unavailable { model } => {
            (build_baseline_prompt(post)?, Mode::Baseline, Some(model.to_string()), true)
        }
    };
    let mut result = ClassificationResult {
        post_id: post.post_id.clone(),
        gold,
        predicted: None,
        explanation: String::new(),
        mode,
        classifier_model: backend.spec().id().to_string(),
        profile_model,
        status: ResultStatus::Ok,
        profile_fallback,
        raw_response: String::new(),
        error: None,
    };
    match backend.complete(&prompt) {
        Err(e) => {
            result.status = ResultStatus::BackendFailure;
            result.error = Some(e.to_string());
        }
        Ok(exchange) => {
            match parse_classification(&exchange.response) {
                Ok((label, explanation)) => {
                    result.predicted = Some(label);
                    result.explanation = explanation;
                }
                Err(e) => {
                    result.status = ResultStatus::ParseFailure;
                    result.error = Some(e.to_string());
                }
            }
            result.raw_response = exchange.response;
        }
    }
    Ok(result)
}
