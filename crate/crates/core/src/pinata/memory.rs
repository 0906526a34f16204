//! Shared long-term memory for the orchestrator, actor and assertor.
//!
//! The store is append-only and ordered by insertion; nothing is ever
//! rewritten. Entries carry a logical sequence number instead of a wall
//! clock so replayed runs stay byte-identical.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tokens::token_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MemoryKind {
    Observation,
    Action,
    Assertion,
    Judgment,
}

impl MemoryKind {
    pub fn label(self) -> &'static str {
        match self {
            MemoryKind::Observation => "OBSERVATION",
            MemoryKind::Action => "ACTION",
            MemoryKind::Assertion => "ASSERTION",
            MemoryKind::Judgment => "JUDGMENT",
        }
    }

    fn abbrev(self) -> &'static str {
        match self {
            MemoryKind::Observation => "OBS",
            MemoryKind::Action => "ACT",
            MemoryKind::Assertion => "ASR",
            MemoryKind::Judgment => "JDG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step_index: u32,
    pub kind: MemoryKind,
    pub content: String,
    /// Logical insertion counter, starting at 1.
    pub seq: u64,
}

impl fmt::Display for MemoryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} {}: {}",
            self.step_index,
            self.kind.label(),
            self.content.replace('\n', " ")
        )
    }
}

/// Append-only memory store, confined to one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryStore {
    entries: Vec<MemoryEntry>,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }

    pub fn append(
        &mut self,
        step_index: u32,
        kind: MemoryKind,
        content: impl Into<String>,
    ) -> &MemoryEntry {
        let entry = MemoryEntry {
            step_index,
            kind,
            content: content.into(),
            seq: self.entries.len() as u64 + 1,
        };
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn truncate_words(content: &str, budget: usize) -> String {
    let words: Vec<&str> = content.split_whitespace().collect();
    if words.len() <= budget {
        words.join(" ")
    } else {
        let mut out = words[..budget].join(" ");
        out.push('…');
        out
    }
}

/// Chronological digest of the memory fitting a token budget.
///
/// Recent entries are kept verbatim while the budget allows; older ones
/// degrade to one compact line, and under extreme pressure to a bare
/// `s<step>:<kind>` token. Every entry keeps its step index visible in
/// all three forms, so cross-step value checks stay possible.
pub fn render_memory_context(memory: &MemoryStore, _current_step: u32, budget: usize) -> String {
    if memory.is_empty() {
        return "No prior steps.".to_string();
    }
    let entries = memory.entries();
    let verbatim: Vec<String> = entries.iter().map(|e| e.to_string()).collect();
    let compact: Vec<String> = entries
        .iter()
        .map(|e| {
            format!(
                "s{} {}: {}",
                e.step_index,
                e.kind.abbrev(),
                truncate_words(&e.content, 8)
            )
        })
        .collect();
    let tiny: Vec<String> = entries
        .iter()
        .map(|e| format!("s{}:{}", e.step_index, e.kind.abbrev()))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Level {
        Verbatim,
        Compact,
        Tiny,
    }
    let mut levels = vec![Level::Compact; entries.len()];
    let cost = |level: Level, i: usize| -> usize {
        match level {
            Level::Verbatim => token_count(&verbatim[i]),
            Level::Compact => token_count(&compact[i]),
            Level::Tiny => token_count(&tiny[i]),
        }
    };
    let mut total: usize = (0..entries.len()).map(|i| cost(Level::Compact, i)).sum();

    if total > budget {
        // Degrade oldest-first until it fits (or everything is tiny).
        for (i, level) in levels.iter_mut().enumerate() {
            if total <= budget {
                break;
            }
            total = total - cost(Level::Compact, i) + cost(Level::Tiny, i);
            *level = Level::Tiny;
        }
    } else {
        // Upgrade newest-first while it still fits.
        for i in (0..entries.len()).rev() {
            let upgraded = total - cost(Level::Compact, i) + cost(Level::Verbatim, i);
            if upgraded <= budget {
                total = upgraded;
                levels[i] = Level::Verbatim;
            }
        }
    }

    let mut lines = Vec::with_capacity(entries.len());
    for (i, level) in levels.iter().enumerate() {
        lines.push(match level {
            Level::Verbatim => verbatim[i].clone(),
            Level::Compact => compact[i].clone(),
            Level::Tiny => tiny[i].clone(),
        });
    }
    lines.join("\n")
}
