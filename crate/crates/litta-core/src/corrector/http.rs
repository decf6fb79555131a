//! Chat-completion HTTP corrector: posts the instruction-wrapped transcript
//! to a configurable endpoint, normalizes the reply into the vocabulary,
//! and falls back to the input on any failure within a bounded time budget.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::json;

use crate::ctc::Transcription;
use crate::error::{Error, Result};
use crate::text::normalize_to_vocab;
use crate::vocab::Vocab;

use super::{build_prompt, CorrectionOutcome, CorrectionSource, CorrectorSpec};

/// First retry delay; doubles per attempt up to the remaining budget.
const BACKOFF_BASE: Duration = Duration::from_millis(250);

/// Counting semaphore bounding concurrent requests to the endpoint.
struct InFlight {
    state: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl InFlight {
    fn new(cap: usize) -> Self {
        InFlight {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) {
        let mut n = self.state.lock().unwrap();
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.state.lock().unwrap();
        *n -= 1;
        self.cv.notify_one();
    }
}

pub struct HttpCorrector {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    max_retries: u32,
    cache_enabled: bool,
    cache: Mutex<BTreeMap<String, String>>,
    in_flight: InFlight,
    vocab: Vocab,
}

enum AttemptError {
    /// Transport or server failure; worth retrying.
    Retryable,
    /// The response arrived but had no usable text; do not retry.
    Unusable,
}

impl HttpCorrector {
    pub fn new(spec: &CorrectorSpec, vocab: &Vocab) -> Result<Self> {
        let endpoint = spec
            .endpoint_url
            .clone()
            .ok_or_else(|| Error::InvalidArgument("http corrector needs endpoint_url".into()))?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(true)
            .build()
            .new_agent();
        Ok(HttpCorrector {
            agent,
            endpoint,
            model: spec
                .model_name
                .clone()
                .unwrap_or_else(|| "default".to_string()),
            api_key: spec.api_key.clone(),
            timeout: Duration::from_millis(spec.timeout_ms),
            max_retries: spec.max_retries,
            cache_enabled: spec.cache_enabled,
            cache: Mutex::new(BTreeMap::new()),
            in_flight: InFlight::new(spec.in_flight_cap),
            vocab: vocab.clone(),
        })
    }

    pub fn correct(&self, transcript: &Transcription) -> CorrectionOutcome {
        let started = Instant::now();
        if self.cache_enabled {
            if let Some(hit) = self.cache.lock().unwrap().get(transcript.as_str()) {
                let corrected = Transcription::new(hit.clone(), &self.vocab)
                    .unwrap_or_else(|_| transcript.clone());
                return CorrectionOutcome::new(transcript, corrected, CorrectionSource::Http, 0);
            }
        }

        let deadline = started + self.timeout;
        let prompt = build_prompt(transcript.as_str());
        let mut attempt: u32 = 0;
        loop {
            let now = Instant::now();
            if now >= deadline {
                return self.fallback(transcript, started);
            }
            match self.attempt(&prompt, deadline - now) {
                Ok(raw) => {
                    let normalized = normalize_to_vocab(&raw, &self.vocab);
                    if self.cache_enabled {
                        self.cache
                            .lock()
                            .unwrap()
                            .insert(transcript.as_str().to_string(), normalized.clone());
                    }
                    let corrected = Transcription::new(normalized, &self.vocab)
                        .unwrap_or_else(|_| transcript.clone());
                    return CorrectionOutcome::new(
                        transcript,
                        corrected,
                        CorrectionSource::Http,
                        started.elapsed().as_millis() as u64,
                    );
                }
                Err(AttemptError::Unusable) => return self.fallback(transcript, started),
                Err(AttemptError::Retryable) => {
                    if attempt >= self.max_retries {
                        return self.fallback(transcript, started);
                    }
                    let backoff = BACKOFF_BASE * 2u32.pow(attempt);
                    let remaining = deadline.saturating_duration_since(Instant::now());
                    std::thread::sleep(backoff.min(remaining));
                    attempt += 1;
                }
            }
        }
    }

    fn fallback(&self, transcript: &Transcription, started: Instant) -> CorrectionOutcome {
        CorrectionOutcome::new(
            transcript,
            transcript.clone(),
            CorrectionSource::FallbackIdentity,
            started.elapsed().as_millis() as u64,
        )
    }

    fn attempt(&self, prompt: &str, budget: Duration) -> std::result::Result<String, AttemptError> {
        self.in_flight.acquire();
        let result = self.attempt_inner(prompt, budget);
        self.in_flight.release();
        result
    }

    fn attempt_inner(
        &self,
        prompt: &str,
        budget: Duration,
    ) -> std::result::Result<String, AttemptError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self
            .agent
            .post(&self.endpoint)
            .config()
            .timeout_global(Some(budget))
            .build()
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let response = request
            .send_json(&body)
            .map_err(|_| AttemptError::Retryable)?;
        let value: serde_json::Value = response
            .into_body()
            .read_json()
            .map_err(|_| AttemptError::Retryable)?;
        extract_text(&value).ok_or(AttemptError::Unusable)
    }
}

/// First text segment of the first choice; tolerant of either the chat
/// (`message.content`) or completion (`text`) response shapes.
fn extract_text(value: &serde_json::Value) -> Option<String> {
    let first = value.get("choices")?.get(0)?;
    if let Some(content) = first.pointer("/message/content").and_then(|v| v.as_str()) {
        return Some(content.to_string());
    }
    first
        .get("text")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string())
}
