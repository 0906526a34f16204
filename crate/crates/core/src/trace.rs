//! Execution traces: the append-only, step-tagged record of everything an
//! agent did while running one test case.
//!
//! Events are numbered with a logical sequence counter rather than a
//! wall clock so that replayed runs are byte-identical. Traces persist as
//! line-delimited JSON, written through as events happen, so a crashed run
//! still leaves a scorable prefix on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::AgentVerdict;

/// Which step of the test case an event belongs to. Events emitted before
/// the first step (for example the initial reset observation) are tagged
/// `Preamble`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepTag {
    #[serde(with = "preamble_tag")]
    Preamble,
    Step(u32),
}

mod preamble_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str("PREAMBLE")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<(), D::Error> {
        let tag = String::deserialize(de)?;
        if tag == "PREAMBLE" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected PREAMBLE"))
        }
    }
}

/// The payload of one trace event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEventBody {
    /// An LLM prompt was issued by `component` (seeact, actor, ...).
    Prompt {
        component: String,
        fingerprint: String,
        text: String,
    },
    /// The LLM response to the preceding prompt.
    Response {
        component: String,
        text: String,
        prompt_tokens: u32,
        completion_tokens: u32,
        latency_ms: u64,
    },
    /// A browser command was executed with the given result.
    Command {
        description: String,
        status: String,
        note: String,
    },
    /// Hash of the observation captured at this point.
    ObservationHash { hash: String },
    /// The orchestrator's judgment of an actor attempt.
    Judgment { decision: String },
    /// An entry was appended to the shared memory store.
    MemoryAppend { entry: String },
    /// A non-fatal anomaly (letter budget overflow, parse retry, ...).
    Warning { message: String },
    /// The final verdict of the run.
    Verdict { verdict: AgentVerdict },
}

/// One ordered, step-tagged trace event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub step: StepTag,
    #[serde(flatten)]
    pub body: TraceEventBody,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {0} is not valid: {1}")]
    Malformed(usize, serde_json::Error),
}

/// In-memory trace for one case, optionally teeing every event to a file
/// as it is appended.
pub struct ExecutionTrace {
    pub case_id: String,
    pub events: Vec<TraceEvent>,
    sink: Option<BufWriter<File>>,
}

impl ExecutionTrace {
    pub fn new(case_id: impl Into<String>) -> Self {
        ExecutionTrace {
            case_id: case_id.into(),
            events: Vec::new(),
            sink: None,
        }
    }

    /// Attach a file sink; every subsequent event is written through and
    /// flushed immediately.
    pub fn with_file(case_id: impl Into<String>, path: &Path) -> Result<Self, TraceError> {
        let file = File::create(path)?;
        Ok(ExecutionTrace {
            case_id: case_id.into(),
            events: Vec::new(),
            sink: Some(BufWriter::new(file)),
        })
    }

    pub fn append(&mut self, step: StepTag, body: TraceEventBody) {
        let event = TraceEvent {
            seq: self.events.len() as u64 + 1,
            step,
            body,
        };
        if let Some(sink) = &mut self.sink {
            // Serialization of TraceEvent cannot fail; ignore sink errors
            // beyond this point so a full disk cannot abort a run that the
            // in-memory trace can still score.
            if let Ok(line) = serde_json::to_string(&event) {
                let _ = writeln!(sink, "{line}");
                let _ = sink.flush();
            }
        }
        self.events.push(event);
    }

    pub fn count_events<F: Fn(&TraceEventBody) -> bool>(&self, pred: F) -> usize {
        self.events.iter().filter(|e| pred(&e.body)).count()
    }

    /// Serialize all events as line-delimited JSON.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(case_id: impl Into<String>, text: &str) -> Result<Self, TraceError> {
        let mut trace = ExecutionTrace::new(case_id);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: TraceEvent =
                serde_json::from_str(line).map_err(|e| TraceError::Malformed(i + 1, e))?;
            trace.events.push(event);
        }
        Ok(trace)
    }

    pub fn load(case_id: impl Into<String>, path: &Path) -> Result<Self, TraceError> {
        let reader = BufReader::new(File::open(path)?);
        let mut text = String::new();
        for line in reader.lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(case_id, &text)
    }
}
