//! Offline backends: scripted responses for tests and a deterministic
//! simulated model for the CLI's `--backend mock`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::resilient::{InFlightProbe, ResilientBackend, RetryPolicy, Sleeper, Throttle, Transport, TransportError};
use super::{Backend, BackendError, BackendFactory, ModelSpec};
use crate::rng::fnv1a64;
use crate::selection::tokenize;

/// Shared count of transport-level sends.
#[derive(Debug, Clone, Default)]
pub struct CallCounter(Arc<AtomicUsize>);

impl CallCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

pub type Script = Arc<dyn Fn(&ModelSpec, &str) -> Result<String, TransportError> + Send + Sync>;

pub struct ScriptedTransport {
    script: Script,
    calls: CallCounter,
    probe: Option<Arc<InFlightProbe>>,
    hold: Duration,
}

impl ScriptedTransport {
    pub fn new(script: Script, calls: CallCounter) -> Self {
        Self { script, calls, probe: None, hold: Duration::ZERO }
    }

    /// Holds each request open for `hold` while `probe` tracks concurrency.
    pub fn instrumented(mut self, probe: Arc<InFlightProbe>, hold: Duration) -> Self {
        self.probe = Some(probe);
        self.hold = hold;
        self
    }

    pub fn calls(&self) -> &CallCounter {
        &self.calls
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, spec: &ModelSpec, prompt: &str) -> Result<String, TransportError> {
        self.calls.bump();
        if let Some(probe) = &self.probe {
            probe.enter();
        }
        if !self.hold.is_zero() {
            std::thread::sleep(self.hold);
        }
        let out = (self.script)(spec, prompt);
        if let Some(probe) = &self.probe {
            probe.exit();
        }
        out
    }
}

pub type MockBackend = ResilientBackend<ScriptedTransport>;

fn no_sleep() -> Sleeper {
    Arc::new(|_| {})
}

impl ResilientBackend<ScriptedTransport> {
    /// Mock whose retries never sleep.
    pub fn scripted<F>(spec: ModelSpec, script: F) -> Self
    where
        F: Fn(&str) -> String + Send + Sync + 'static,
    {
        Self::fallible(spec, move |p| Ok(script(p)))
    }

    pub fn fallible<F>(spec: ModelSpec, script: F) -> Self
    where
        F: Fn(&str) -> Result<String, TransportError> + Send + Sync + 'static,
    {
        let script: Script = Arc::new(move |_, p| script(p));
        ResilientBackend::new(
            spec,
            ScriptedTransport::new(script, CallCounter::default()),
            RetryPolicy::default(),
            Arc::new(Throttle::unlimited()),
        )
        .with_sleeper(no_sleep())
    }

    pub fn calls(&self) -> usize {
        self.transport().calls().get()
    }
}

/// Factory handing out scripted backends that share one call counter.
#[derive(Clone)]
pub struct MockFactory {
    script: Script,
    calls: CallCounter,
}

impl MockFactory {
    pub fn new<F>(script: F) -> Self
    where
        F: Fn(&ModelSpec, &str) -> String + Send + Sync + 'static,
    {
        Self { script: Arc::new(move |s, p| Ok(script(s, p))), calls: CallCounter::default() }
    }

    pub fn fallible<F>(script: F) -> Self
    where
        F: Fn(&ModelSpec, &str) -> Result<String, TransportError> + Send + Sync + 'static,
    {
        Self { script: Arc::new(script), calls: CallCounter::default() }
    }

    /// Factory backed by [`simulated_response`].
    pub fn simulated() -> Self {
        Self::new(simulated_response)
    }

    pub fn calls(&self) -> CallCounter {
        self.calls.clone()
    }
}

impl BackendFactory for MockFactory {
    fn create(&self, spec: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError> {
        spec.validate()?;
        Ok(Arc::new(
            ResilientBackend::new(
                spec.clone(),
                ScriptedTransport::new(self.script.clone(), self.calls.clone()),
                RetryPolicy { max_attempts: 3, ..RetryPolicy::default() },
                Arc::new(Throttle::unlimited()),
            )
            .with_sleeper(no_sleep()),
        ))
    }
}

const LEFT_CUES: &[&str] = &[
    "liberal",
    "democrat",
    "democrats",
    "progressive",
    "obama",
    "biden",
    "kerry",
    "clinton",
    "union",
    "unions",
    "healthcare",
];
const RIGHT_CUES: &[&str] =
    &["conservative", "republican", "republicans", "gop", "trump", "bush", "reagan", "maga", "taxes", "border"];

fn lean(text: &str, tiebreak_key: &str) -> &'static str {
    let (mut l, mut r) = (0i64, 0i64);
    for tok in tokenize(text) {
        l += i64::from(LEFT_CUES.contains(&tok.as_str()));
        r += i64::from(RIGHT_CUES.contains(&tok.as_str()));
    }
    match l.cmp(&r) {
        std::cmp::Ordering::Greater => "left",
        std::cmp::Ordering::Less => "right",
        std::cmp::Ordering::Equal if fnv1a64(tiebreak_key.as_bytes()).is_multiple_of(2) => "left",
        std::cmp::Ordering::Equal => "right",
    }
}

/// A deterministic stand-in model: answers profile prompts with a profile
/// whose leaning is a crude cue-word vote over the posts, and classification
/// prompts by echoing the profile's leaning when context is present, or by
/// the same vote over the post otherwise.
pub fn simulated_response(spec: &ModelSpec, prompt: &str) -> String {
    let key = format!("{}\u{0}{prompt}", spec.model_name);
    if prompt.contains(crate::profiling::PROFILE_TEMPLATE_ANCHOR) {
        let username =
            prompt.lines().find_map(|l| l.strip_prefix(crate::profiling::USERNAME_PREFIX)).unwrap_or("unknown").trim();
        let posts = prompt.split(crate::profiling::POSTS_HEADER).nth(1).unwrap_or("");
        let leaning = lean(posts, &key);
        return serde_json::json!({
            "username": username,
            "political_leaning": leaning,
            "confidence": "medium",
            "key_indicators": ["cue word balance", "recurring party references", "issue framing"],
            "recurring_topics": ["politics"],
            "language_style": "informal",
            "sentiment_patterns": format!("leans {leaning}"),
            "context_notes": ""
        })
        .to_string();
    }
    let post = prompt.rsplit(crate::classify::POST_HEADER).next().unwrap_or(prompt);
    let orientation = match prompt
        .contains(crate::classify::CONTEXT_ANCHOR)
        .then(|| crate::response::first_json_object(prompt.split(crate::classify::CONTEXT_ANCHOR).nth(1)?))
        .flatten()
        .and_then(|profile| profile.get("political_leaning")?.as_str().map(str::to_lowercase))
    {
        Some(l) if l == "left" || l == "right" => l,
        _ => lean(post, &key).to_string(),
    };
    serde_json::json!({
        "orientation": orientation.to_uppercase(),
        "explanation": "simulated"
    })
    .to_string()
}
