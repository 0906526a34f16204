//! Canonical request rendering and content fingerprints.
//!
//! Two requests fingerprint equal exactly when their canonical renderings
//! are equal: text parts are whitespace-normalized (CRLF folded, trailing
//! whitespace stripped per line, leading/trailing blank lines dropped),
//! image parts are reduced to a content hash, and scalar parameters are
//! rendered in a fixed order. The rendering is also what cassette
//! mismatches diff, so it stays line-oriented and human-readable.

use sha2::{Digest, Sha256};

use super::{ChatRequest, ContentPart};

/// Normalize a text block for fingerprinting.
pub fn normalize_text(text: &str) -> String {
    let unified = text.replace("\r\n", "\n");
    let mut lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    while lines.first().is_some_and(|l| l.is_empty()) {
        lines.remove(0);
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Render a request into its canonical, diff-friendly text form.
pub fn canonical_request_text(request: &ChatRequest) -> String {
    let mut out = String::new();
    out.push_str(&format!("model: {}\n", request.model_id));
    out.push_str(&format!("temperature: {}\n", request.temperature));
    out.push_str(&format!("max_tokens: {}\n", request.max_tokens));
    for (i, message) in request.messages.iter().enumerate() {
        out.push_str(&format!(
            "-- message {}: {} --\n",
            i + 1,
            message.role.label()
        ));
        for part in &message.parts {
            match part {
                ContentPart::Text { text } => {
                    out.push_str("[text]\n");
                    out.push_str(&normalize_text(text));
                    out.push('\n');
                }
                ContentPart::Image { media_type, data } => {
                    let mut hasher = Sha256::new();
                    hasher.update(data);
                    out.push_str(&format!(
                        "[image sha256:{} media={media_type}]\n",
                        hex::encode(hasher.finalize())
                    ));
                }
            }
        }
    }
    out
}

/// Stable content hash of the canonical rendering. Independent of wall
/// clock, process, and platform.
pub fn fingerprint(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_request_text(request).as_bytes());
    hex::encode(hasher.finalize())
}
