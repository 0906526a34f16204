//! The assertor: agent-as-a-judge verification of one step assertion from
//! the screenshot alone. No DOM channel, no marks — a deliberately
//! passive visual judgment.

use regex::Regex;
use std::sync::OnceLock;

use crate::browser::{PageObservation, ScreenshotArtifact};
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::seeact::{infra_or_verdict, AgentError, AssertionStatus};
use crate::templates;
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};

use super::memory::{render_memory_context, MemoryKind, MemoryStore};
use super::{AssertorReport, OrchestratorConfig};

pub const ASSERTOR_PARSE_RETRIES: u32 = 2;

fn atomic_regex() -> &'static Regex {
    static REGEX: OnceLock<Regex> = OnceLock::new();
    REGEX.get_or_init(|| {
        Regex::new(r"(?m)^\s*\d+[.)]\s*(.+?)\s*\|\s*(NOT\s+VERIFIED|VERIFIED)\s*\|?\s*(.*)$")
            .expect("atomic assertion regex")
    })
}

/// Parse the numbered atomic-assertion list of an assertor reply:
/// `N. <assertion> | <STATUS> | <justification>`. Falls back to the
/// colon-separated form without justification.
pub fn parse_assertor_reply(text: &str) -> Vec<(String, AssertionStatus, String)> {
    let mut atomic: Vec<(String, AssertionStatus, String)> = atomic_regex()
        .captures_iter(text)
        .map(|capture| {
            let status = if capture[2].starts_with("NOT") {
                AssertionStatus::NotVerified
            } else {
                AssertionStatus::Verified
            };
            (
                capture[1].trim().to_string(),
                status,
                capture
                    .get(3)
                    .map(|m| m.as_str().trim())
                    .unwrap_or("")
                    .to_string(),
            )
        })
        .collect();
    if atomic.is_empty() {
        atomic = crate::seeact::extract_assertion_statuses(text)
            .into_iter()
            .map(|(text, status)| (text, status, String::new()))
            .collect();
    }
    atomic
}

/// Render the assertor prompt. The screenshot is the only channel: no
/// DOM snapshot and no mark list are included.
pub fn build_assertor_prompt(
    step_index: u32,
    assertion_text: &str,
    observation: &PageObservation,
    memory: &MemoryStore,
    config: &OrchestratorConfig,
) -> Result<String, crate::templates::TemplateError> {
    let screenshot_text = match &observation.screenshot {
        ScreenshotArtifact::TextRender(text) => text.trim_end().to_string(),
        ScreenshotArtifact::Image(_) => "(image screenshot attached)".to_string(),
    };
    let memory_text = render_memory_context(memory, step_index, config.memory_budget_tokens);
    templates::render(
        config.assertor_template(),
        &[
            ("PROFILE", templates::MULTI_AGENT_PROFILE),
            ("ASSERTION", assertion_text),
            ("MEMORY", &memory_text),
            ("SCREENSHOT", &screenshot_text),
        ],
    )
}

/// Decompose and judge one assertion against the current observation.
/// The report is appended to memory as ASSERTION entries; an unparsable
/// reply after the retries yields an overall NOT VERIFIED flagged as
/// parse-degraded.
pub fn assert_step(
    step_index: u32,
    assertion_text: &str,
    observation: &PageObservation,
    memory: &mut MemoryStore,
    backend: &Backend,
    config: &OrchestratorConfig,
    trace: &mut ExecutionTrace,
) -> Result<AssertorReport, AgentError> {
    let step = StepTag::Step(step_index);
    let prompt_text =
        build_assertor_prompt(step_index, assertion_text, observation, memory, config)?;
    let request = ChatRequest::new(&config.model_assertor, vec![ChatMessage::user(prompt_text)]);

    let mut atomic: Vec<(String, AssertionStatus, String)> = Vec::new();
    let mut degraded = true;
    for attempt in 0..=ASSERTOR_PARSE_RETRIES {
        trace.append(
            step,
            TraceEventBody::Prompt {
                component: "assertor".to_string(),
                fingerprint: crate::llm::fingerprint(&request),
                text: crate::llm::canonical_request_text(&request),
            },
        );
        let response = match backend.complete(&request) {
            Ok(response) => response,
            Err(error) => {
                if let Some(infra) = infra_or_verdict(&error) {
                    return Err(infra);
                }
                trace.append(
                    step,
                    TraceEventBody::Warning {
                        message: format!("assertor backend failure: {error}"),
                    },
                );
                break;
            }
        };
        trace.append(
            step,
            TraceEventBody::Response {
                component: "assertor".to_string(),
                text: response.text.clone(),
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
                latency_ms: response.latency_ms,
            },
        );
        let parsed = parse_assertor_reply(&response.text);
        if !parsed.is_empty() {
            atomic = parsed;
            degraded = false;
            break;
        }
        if attempt < ASSERTOR_PARSE_RETRIES {
            trace.append(
                step,
                TraceEventBody::Warning {
                    message: "empty atomic-assertion parse, retrying".to_string(),
                },
            );
        }
    }

    let overall = if degraded {
        trace.append(
            step,
            TraceEventBody::Warning {
                message: "assertor reply unparsable, reporting NOT VERIFIED (degraded)".to_string(),
            },
        );
        AssertionStatus::NotVerified
    } else if atomic
        .iter()
        .all(|(_, status, _)| *status == AssertionStatus::Verified)
    {
        AssertionStatus::Verified
    } else {
        AssertionStatus::NotVerified
    };

    for (text, status, justification) in &atomic {
        let entry = format!(
            "{text} -> {} ({justification})",
            match status {
                AssertionStatus::Verified => "VERIFIED",
                AssertionStatus::NotVerified => "NOT VERIFIED",
            }
        );
        memory.append(step_index, MemoryKind::Assertion, &entry);
        trace.append(
            step,
            TraceEventBody::MemoryAppend {
                entry: format!("s{step_index} ASSERTION: {entry}"),
            },
        );
    }

    Ok(AssertorReport {
        atomic,
        overall,
        degraded,
    })
}
