//! Retry with exponential backoff and per-provider throttling around a
//! raw transport.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{Backend, BackendError, CompletionExchange, ModelSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    /// Timeouts, connection failures, 429 and 5xx are transient.
    pub transient: bool,
    pub message: String,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self { transient: true, message: message.into() }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { transient: false, message: message.into() }
    }

    pub fn from_status(status: u16, body: &str) -> Self {
        let message = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
        Self { transient: status == 429 || status == 408 || status >= 500, message }
    }
}

/// One raw request/response hop, no retries.
pub trait Transport: Send + Sync {
    fn send(&self, spec: &ModelSpec, prompt: &str) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub multiplier: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 6,
            initial_delay: Duration::from_secs(1),
            multiplier: 2.0,
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `failures` (1-based). Nondecreasing in
    /// `failures` and capped at `max_delay`.
    pub fn delay(&self, failures: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(failures.saturating_sub(1) as i32);
        let secs = (self.initial_delay.as_secs_f64() * factor).min(self.max_delay.as_secs_f64());
        Duration::from_secs_f64(secs)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrottleConfig {
    pub max_in_flight: usize,
    /// Minimum spacing between request starts; zero disables rate limiting.
    pub min_interval: Duration,
}

impl Default for ThrottleConfig {
    fn default() -> Self {
        Self { max_in_flight: 4, min_interval: Duration::from_millis(0) }
    }
}

impl ThrottleConfig {
    pub fn per_minute(max_in_flight: usize, requests_per_minute: u32) -> Self {
        let min_interval = if requests_per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(requests_per_minute))
        };
        Self { max_in_flight: max_in_flight.max(1), min_interval }
    }
}

#[derive(Debug)]
struct ThrottleState {
    in_flight: usize,
    next_start: Instant,
}

/// Concurrency and request-rate limiter shared by every backend of one provider.
#[derive(Debug)]
pub struct Throttle {
    config: ThrottleConfig,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

pub struct ThrottlePermit<'a> {
    throttle: &'a Throttle,
}

impl Drop for ThrottlePermit<'_> {
    fn drop(&mut self) {
        let mut state = self.throttle.state.lock().expect("throttle lock");
        state.in_flight -= 1;
        drop(state);
        self.throttle.freed.notify_one();
    }
}

impl Throttle {
    pub fn new(config: ThrottleConfig) -> Self {
        Self {
            config: ThrottleConfig { max_in_flight: config.max_in_flight.max(1), ..config },
            state: Mutex::new(ThrottleState { in_flight: 0, next_start: Instant::now() }),
            freed: Condvar::new(),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(ThrottleConfig { max_in_flight: usize::MAX, min_interval: Duration::ZERO })
    }

    pub fn acquire(&self) -> ThrottlePermit<'_> {
        let mut state = self.state.lock().expect("throttle lock");
        while state.in_flight >= self.config.max_in_flight {
            state = self.freed.wait(state).expect("throttle lock");
        }
        state.in_flight += 1;
        let now = Instant::now();
        let start = state.next_start.max(now);
        state.next_start = start + self.config.min_interval;
        drop(state);
        if start > now {
            std::thread::sleep(start - now);
        }
        ThrottlePermit { throttle: self }
    }
}

/// Test instrumentation: tracks the peak number of concurrent sends.
#[derive(Debug, Default)]
pub struct InFlightProbe {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl InFlightProbe {
    pub fn enter(&self) {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn exit(&self) {
        self.current.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

pub struct ResilientBackend<T> {
    spec: ModelSpec,
    transport: T,
    policy: RetryPolicy,
    throttle: Arc<Throttle>,
    sleeper: Sleeper,
}

impl<T: Transport> ResilientBackend<T> {
    pub fn new(spec: ModelSpec, transport: T, policy: RetryPolicy, throttle: Arc<Throttle>) -> Self {
        Self { spec, transport, policy, throttle, sleeper: Arc::new(std::thread::sleep) }
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: Transport> Backend for ResilientBackend<T> {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn complete(&self, prompt: &str) -> Result<CompletionExchange, BackendError> {
        let started = Instant::now();
        let max_attempts = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.throttle.acquire();
                self.transport.send(&self.spec, prompt)
            };
            match result {
                Ok(response) => {
                    return Ok(CompletionExchange {
                        prompt: prompt.to_string(),
                        response,
                        latency: started.elapsed(),
                        attempt_count: attempt,
                        model: self.spec.clone(),
                    })
                }
                Err(e) if !e.transient => {
                    return Err(BackendError::Rejected { model: self.spec.id().to_string(), cause: e.message })
                }
                Err(e) if attempt >= max_attempts => {
                    return Err(BackendError::Exhausted {
                        model: self.spec.id().to_string(),
                        attempts: attempt,
                        cause: e.message,
                    })
                }
                Err(e) => {
                    let delay = self.policy.delay(attempt);
                    tracing::warn!(model = self.spec.id(), attempt, ?delay, "transient failure: {}", e.message);
                    (self.sleeper)(delay);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures_left: AtomicU32,
        fatal: bool,
    }

    impl Transport for Flaky {
        fn send(&self, _: &ModelSpec, prompt: &str) -> Result<String, TransportError> {
            let left = self.failures_left.load(Ordering::SeqCst);
            if left > 0 {
                self.failures_left.store(left - 1, Ordering::SeqCst);
                return Err(if self.fatal {
                    TransportError::fatal("400")
                } else {
                    TransportError::from_status(503, "busy")
                });
            }
            Ok(format!("echo {prompt}"))
        }
    }

    fn backend(failures: u32, fatal: bool, delays: Arc<Mutex<Vec<Duration>>>) -> ResilientBackend<Flaky> {
        let sleeper: Sleeper = Arc::new(move |d| delays.lock().unwrap().push(d));
        ResilientBackend::new(
            ModelSpec::new("mock", "m"),
            Flaky { failures_left: AtomicU32::new(failures), fatal },
            RetryPolicy { max_attempts: 4, ..RetryPolicy::default() },
            Arc::new(Throttle::unlimited()),
        )
        .with_sleeper(sleeper)
    }

    #[test]
    fn two_transient_failures_then_success() {
        let delays = Arc::new(Mutex::new(Vec::new()));
        let ex = backend(2, false, delays.clone()).complete("hi").unwrap();
        assert_eq!(ex.attempt_count, 3);
        assert_eq!(ex.response, "echo hi");
        assert_eq!(*delays.lock().unwrap(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn exhaustion_reports_attempts() {
        let delays = Arc::new(Mutex::new(Vec::new()));
        match backend(10, false, delays).complete("hi").unwrap_err() {
            BackendError::Exhausted { attempts, cause, .. } => {
                assert_eq!(attempts, 4);
                assert!(cause.contains("503"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let delays = Arc::new(Mutex::new(Vec::new()));
        assert!(matches!(backend(1, true, delays.clone()).complete("hi"), Err(BackendError::Rejected { .. })));
        assert!(delays.lock().unwrap().is_empty());
    }

    #[test]
    fn backoff_is_nondecreasing_and_capped() {
        let p = RetryPolicy {
            max_attempts: 20,
            initial_delay: Duration::from_millis(250),
            multiplier: 3.0,
            max_delay: Duration::from_secs(10),
        };
        let delays: Vec<_> = (1..20).map(|k| p.delay(k)).collect();
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*delays.last().unwrap(), Duration::from_secs(10));
    }

    #[test]
    fn status_classification() {
        assert!(TransportError::from_status(429, "").transient);
        assert!(TransportError::from_status(502, "").transient);
        assert!(!TransportError::from_status(401, "").transient);
    }

    #[test]
    fn rate_limit_spaces_starts() {
        let t = Throttle::new(ThrottleConfig { max_in_flight: 8, min_interval: Duration::from_millis(20) });
        let start = Instant::now();
        for _ in 0..4 {
            drop(t.acquire());
        }
        assert!(start.elapsed() >= Duration::from_millis(60));
    }
}
