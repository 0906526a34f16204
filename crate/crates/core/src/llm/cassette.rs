//! Cassettes: ordered, fingerprint-keyed recordings of LLM exchanges.
//!
//! A cassette file is a JSON array of entries, each holding the request
//! fingerprint, the canonical request text (kept so mismatches can be
//! diffed), and the full response. Replay consumes entries strictly in
//! order; the incoming request must fingerprint-match the next entry or
//! replay fails with a unified diff of the two canonical renderings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request_text: String,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Cassette::default()
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| LlmError::CassetteIo(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| LlmError::CassetteIo(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| LlmError::CassetteIo(format!("{}: {e}", parent.display())))?;
        }
        let json = serde_json::to_string_pretty(self).expect("cassette serializes");
        fs::write(path, json).map_err(|e| LlmError::CassetteIo(format!("{}: {e}", path.display())))
    }

    pub fn push(&mut self, entry: CassetteEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Minimal unified-style diff of two canonical request texts, naming the
/// first differing line.
pub fn diff_requests(recorded: &str, incoming: &str) -> String {
    let recorded_lines: Vec<&str> = recorded.lines().collect();
    let incoming_lines: Vec<&str> = incoming.lines().collect();
    let max = recorded_lines.len().max(incoming_lines.len());
    for i in 0..max {
        let old = recorded_lines.get(i).copied();
        let new = incoming_lines.get(i).copied();
        if old != new {
            let mut out = format!("first difference at line {}\n", i + 1);
            let context_start = i.saturating_sub(2);
            for (j, line) in recorded_lines
                .iter()
                .enumerate()
                .take(i)
                .skip(context_start)
            {
                out.push_str(&format!("  {}: {line}\n", j + 1));
            }
            out.push_str(&format!(
                "- recorded: {}\n",
                old.unwrap_or("<end of request>")
            ));
            out.push_str(&format!(
                "+ incoming: {}\n",
                new.unwrap_or("<end of request>")
            ));
            return out;
        }
    }
    "requests are line-identical (fingerprint inputs differ elsewhere)".to_string()
}
