//! The gateway entry point agents call: mode dispatch, cassette handling,
//! and transient-error retries.

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use super::canonical::{canonical_request_text, fingerprint};
use super::cassette::{diff_requests, Cassette, CassetteEntry};
use super::providers::Provider;
use super::{ChatRequest, ChatResponse, LlmError, Mode};

/// Retry policy for transient provider errors. Replay never retries.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

struct CassetteState {
    cassette: Cassette,
    cursor: usize,
}

/// A configured chat-completion backend: provider adapter plus mode plus
/// (for RECORD/REPLAY) a cassette. Safe to share between the sequential
/// phases of one run; the cassette cursor is strictly ordered.
pub struct Backend {
    mode: Mode,
    provider: Box<dyn Provider>,
    state: Mutex<CassetteState>,
    cassette_path: Option<PathBuf>,
    retry: RetryPolicy,
}

impl Backend {
    pub fn live(provider: Box<dyn Provider>) -> Self {
        Backend {
            mode: Mode::Live,
            provider,
            state: Mutex::new(CassetteState {
                cassette: Cassette::new(),
                cursor: 0,
            }),
            cassette_path: None,
            retry: RetryPolicy::default(),
        }
    }

    /// Record every exchange; the cassette file is rewritten after each
    /// call so a crashed run keeps its prefix.
    pub fn record(provider: Box<dyn Provider>, cassette_path: PathBuf) -> Self {
        Backend {
            mode: Mode::Record,
            provider,
            state: Mutex::new(CassetteState {
                cassette: Cassette::new(),
                cursor: 0,
            }),
            cassette_path: Some(cassette_path),
            retry: RetryPolicy::default(),
        }
    }

    /// Serve responses from a loaded cassette, in strict order. `provider`
    /// is never called; pass a `DenyAllProvider` to prove it.
    pub fn replay(provider: Box<dyn Provider>, cassette: Cassette) -> Self {
        Backend {
            mode: Mode::Replay,
            provider,
            state: Mutex::new(CassetteState {
                cassette,
                cursor: 0,
            }),
            cassette_path: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of exchanges served so far.
    pub fn calls_made(&self) -> usize {
        let state = self.state.lock().expect("backend lock");
        match self.mode {
            Mode::Replay => state.cursor,
            _ => state.cassette.len(),
        }
    }

    /// Copy of the recorded cassette (RECORD mode).
    pub fn recorded_cassette(&self) -> Cassette {
        self.state.lock().expect("backend lock").cassette.clone()
    }

    /// Write the cassette file even when no call was made, so a replay of
    /// the same run finds a (possibly empty) cassette for every component.
    pub fn persist(&self) -> Result<(), LlmError> {
        if let Some(path) = &self.cassette_path {
            self.state
                .lock()
                .expect("backend lock")
                .cassette
                .save(path)?;
        }
        Ok(())
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        match self.mode {
            Mode::Live => self.call_with_retries(request),
            Mode::Record => {
                let response = self.call_with_retries(request)?;
                let mut state = self.state.lock().expect("backend lock");
                state.cassette.push(CassetteEntry {
                    fingerprint: fingerprint(request),
                    request_text: canonical_request_text(request),
                    response: response.clone(),
                });
                if let Some(path) = &self.cassette_path {
                    state.cassette.save(path)?;
                }
                Ok(response)
            }
            Mode::Replay => {
                let mut state = self.state.lock().expect("backend lock");
                let index = state.cursor;
                let entry = state
                    .cassette
                    .entries
                    .get(index)
                    .ok_or(LlmError::CassetteExhausted { call_index: index })?;
                let incoming = fingerprint(request);
                if entry.fingerprint != incoming {
                    return Err(LlmError::FingerprintMismatch {
                        entry_index: index,
                        diff: diff_requests(&entry.request_text, &canonical_request_text(request)),
                    });
                }
                let response = entry.response.clone();
                state.cursor += 1;
                Ok(response)
            }
        }
    }

    fn call_with_retries(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut delay_ms = self.retry.base_delay_ms;
        let mut last_error = None;
        for attempt in 1..=self.retry.attempts.max(1) {
            match self.provider.complete(request) {
                Ok(response) => return Ok(response),
                Err(error) => {
                    let transient = match &error {
                        LlmError::Timeout(_) | LlmError::Provider(_) => true,
                        LlmError::Http { status, .. } => *status >= 500 || *status == 429,
                        _ => false,
                    };
                    if !transient || attempt == self.retry.attempts.max(1) {
                        return Err(error);
                    }
                    last_error = Some(error);
                    std::thread::sleep(Duration::from_millis(delay_ms));
                    delay_ms = delay_ms.saturating_mul(2);
                }
            }
        }
        Err(last_error.unwrap_or_else(|| LlmError::Provider("retries exhausted".to_string())))
    }
}
