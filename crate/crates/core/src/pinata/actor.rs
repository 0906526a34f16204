//! The actor: grounds one natural-language test action onto a concrete
//! browser command and executes it.
//!
//! Grounding prefers Set-of-Marks ids, falls back to resolving raw
//! coordinates through element bounding boxes, and only then issues a raw
//! coordinate command. The path taken is recorded in the trace.

use regex::Regex;
use std::sync::OnceLock;

use crate::browser::{
    annotate_marks, BrowserCommand, CommandKind, CommandStatus, CommandTarget, Driver,
    MarkedObservation, PageObservation, ScreenshotArtifact,
};
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::seeact::{infra_or_verdict, AgentError};
use crate::templates;
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};

use super::memory::{render_memory_context, MemoryKind, MemoryStore};
use super::{ActorFeedback, ActorOutcome, OrchestratorConfig};

/// Parse retries inside one act() invocation before giving up as
/// ungroundable.
pub const GROUNDING_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActorTarget {
    Mark(u32),
    Point(u32, u32),
    None,
}

/// Structured actor reply: TARGET / ACTION / VALUE / REASON lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorReply {
    pub target: ActorTarget,
    pub action: CommandKind,
    pub value: Option<String>,
    pub reason: String,
}

/// Which grounding route produced a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundingPath {
    MarkId,
    BBoxResolved,
    RawCoordinates,
    NoTarget,
}

/// Why grounding did not produce a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroundingIssue {
    /// The model affirmatively reported the needed element absent.
    TargetMissing(String),
    /// Malformed or out-of-range reply; worth a retry.
    Invalid(String),
}

fn reply_regexes() -> &'static (Regex, Regex, Regex, Regex) {
    static REGEXES: OnceLock<(Regex, Regex, Regex, Regex)> = OnceLock::new();
    REGEXES.get_or_init(|| {
        (
            Regex::new(r"(?im)^\s*TARGET\s*:\s*(.*)$").expect("target regex"),
            Regex::new(r"(?im)^\s*ACTION\s*:\s*(.*)$").expect("action regex"),
            Regex::new(r"(?im)^\s*VALUE\s*:\s*(.*)$").expect("value regex"),
            Regex::new(r"(?im)^\s*REASON\s*:\s*(.*)$").expect("reason regex"),
        )
    })
}

pub fn parse_actor_reply(text: &str) -> Result<ActorReply, String> {
    let (target_re, action_re, value_re, reason_re) = reply_regexes();
    let target_raw = target_re
        .captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
        .ok_or_else(|| "missing TARGET line".to_string())?;
    let action_raw = action_re
        .captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
        .ok_or_else(|| "missing ACTION line".to_string())?;
    let value = value_re
        .captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
        .filter(|v| !v.is_empty() && !v.eq_ignore_ascii_case("none"));
    let reason = reason_re
        .captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
        .unwrap_or_default();

    let target = parse_target(&target_raw)?;
    let action_token = action_raw
        .trim_end_matches(['.', '!'])
        .replace([' ', '-'], "_")
        .to_uppercase();
    let action = match action_token.as_str() {
        "CLICK" => CommandKind::Click,
        "TYPE" => CommandKind::Type,
        "SELECT" => CommandKind::Select,
        "PRESS_ENTER" => CommandKind::PressEnter,
        "NAVIGATE" => CommandKind::Navigate,
        "SCROLL" => CommandKind::Scroll,
        "NOOP" | "NO_OP" => CommandKind::Noop,
        other => return Err(format!("unknown actor action `{other}`")),
    };
    Ok(ActorReply {
        target,
        action,
        value,
        reason,
    })
}

fn parse_target(raw: &str) -> Result<ActorTarget, String> {
    let upper = raw.to_uppercase();
    if upper.starts_with("NONE") || upper.is_empty() {
        return Ok(ActorTarget::None);
    }
    if let Some(rest) = upper.strip_prefix("MARK") {
        let id: u32 = rest
            .trim_start_matches([' ', ':', '#'])
            .trim()
            .parse()
            .map_err(|_| format!("unparsable mark id in `{raw}`"))?;
        return Ok(ActorTarget::Mark(id));
    }
    if let Some(rest) = upper.strip_prefix("POINT") {
        static POINT: OnceLock<Regex> = OnceLock::new();
        let re = POINT.get_or_init(|| Regex::new(r"(\d+)\s*,\s*(\d+)").expect("point regex"));
        let captures = re
            .captures(rest)
            .ok_or_else(|| format!("unparsable point in `{raw}`"))?;
        return Ok(ActorTarget::Point(
            captures[1].parse().map_err(|_| "bad x".to_string())?,
            captures[2].parse().map_err(|_| "bad y".to_string())?,
        ));
    }
    Err(format!("unparsable target `{raw}`"))
}

/// Resolve a parsed reply to a browser command against this turn's marks.
pub fn ground(
    reply: &ActorReply,
    marked: &MarkedObservation,
) -> Result<(BrowserCommand, GroundingPath), GroundingIssue> {
    let needs_target = matches!(
        reply.action,
        CommandKind::Click | CommandKind::Type | CommandKind::Select
    );
    match &reply.target {
        ActorTarget::None => {
            if needs_target {
                let what = if reply.reason.is_empty() {
                    format!("{} needs a target element", reply.action)
                } else {
                    reply.reason.clone()
                };
                return Err(GroundingIssue::TargetMissing(what));
            }
            let command = match reply.action {
                CommandKind::Navigate => {
                    let url = reply.value.clone().ok_or_else(|| {
                        GroundingIssue::Invalid("NAVIGATE without a url value".to_string())
                    })?;
                    BrowserCommand::navigate(url)
                }
                CommandKind::PressEnter => BrowserCommand::press_enter(),
                CommandKind::Scroll => BrowserCommand::scroll(),
                _ => BrowserCommand::noop(),
            };
            Ok((command, GroundingPath::NoTarget))
        }
        ActorTarget::Mark(id) => {
            if marked.element(*id).is_none() {
                return Err(GroundingIssue::Invalid(format!(
                    "mark id {id} out of range (page has {} marks)",
                    marked.mark_count()
                )));
            }
            let command = command_for(reply, CommandTarget::Mark(*id))?;
            Ok((command, GroundingPath::MarkId))
        }
        ActorTarget::Point(x, y) => {
            let (max_x, max_y) = page_bounds(&marked.observation);
            if *x > max_x || *y > max_y {
                return Err(GroundingIssue::Invalid(format!(
                    "coordinates ({x}, {y}) outside page bounds ({max_x}, {max_y})"
                )));
            }
            let containing = marked
                .marks
                .iter()
                .find(|(_, element)| element.bbox.contains(*x, *y))
                .map(|(mark_id, _)| *mark_id);
            match containing {
                Some(mark_id) => {
                    let command = command_for(reply, CommandTarget::Mark(mark_id))?;
                    Ok((command, GroundingPath::BBoxResolved))
                }
                None => {
                    let command = command_for(reply, CommandTarget::Point { x: *x, y: *y })?;
                    Ok((command, GroundingPath::RawCoordinates))
                }
            }
        }
    }
}

fn command_for(
    reply: &ActorReply,
    target: CommandTarget,
) -> Result<BrowserCommand, GroundingIssue> {
    let command = match reply.action {
        CommandKind::Click => BrowserCommand::click(target),
        CommandKind::Type => BrowserCommand::type_text(
            target,
            reply
                .value
                .clone()
                .ok_or_else(|| GroundingIssue::Invalid("TYPE without a value".to_string()))?,
        ),
        CommandKind::Select => BrowserCommand::select(
            target,
            reply
                .value
                .clone()
                .ok_or_else(|| GroundingIssue::Invalid("SELECT without a value".to_string()))?,
        ),
        CommandKind::PressEnter => BrowserCommand::press_enter(),
        CommandKind::Scroll => BrowserCommand::scroll(),
        CommandKind::Noop => BrowserCommand::noop(),
        CommandKind::Navigate => BrowserCommand::navigate(reply.value.clone().unwrap_or_default()),
    };
    Ok(command)
}

fn page_bounds(observation: &PageObservation) -> (u32, u32) {
    let max_y = observation
        .elements
        .iter()
        .map(|e| e.bbox.y + e.bbox.height)
        .max()
        .unwrap_or(0);
    (1280, max_y + 200)
}

fn page_summary(observation: &PageObservation) -> String {
    format!(
        "\"{}\" at {} (state {})",
        observation.title,
        observation.url,
        &observation.state_hash()[..8]
    )
}

/// Everything act() produced: the feedback plus the observations the
/// orchestrator's judge needs.
#[derive(Debug, Clone)]
pub struct ActResult {
    pub feedback: ActorFeedback,
    pub before: PageObservation,
    pub after: PageObservation,
}

/// Render the actor prompt for one grounding attempt.
pub fn build_actor_prompt(
    step_index: u32,
    step_action: &str,
    memory: &MemoryStore,
    marked: &MarkedObservation,
    config: &OrchestratorConfig,
) -> Result<String, crate::templates::TemplateError> {
    let screenshot_text = match &marked.marked_screenshot {
        ScreenshotArtifact::TextRender(text) => text.trim_end().to_string(),
        ScreenshotArtifact::Image(_) => "(image screenshot attached)".to_string(),
    };
    let mut marks_list = String::new();
    for (mark_id, element) in &marked.marks {
        marks_list.push_str(&format!("[{mark_id}] {}\n", element.pseudo_html()));
    }
    let memory_text = render_memory_context(memory, step_index, config.memory_budget_tokens);
    templates::render(
        config.actor_template(),
        &[
            ("PROFILE", templates::MULTI_AGENT_PROFILE),
            ("ACTION", step_action),
            ("MEMORY", &memory_text),
            ("SCREENSHOT", &screenshot_text),
            ("MARKS", marks_list.trim_end()),
        ],
    )
}

/// Observe, prompt for one grounded command, execute it, and report.
/// Appends OBSERVATION and ACTION entries to the shared memory.
pub fn act(
    step_index: u32,
    step_action: &str,
    memory: &mut MemoryStore,
    driver: &mut dyn Driver,
    backend: &Backend,
    config: &OrchestratorConfig,
    trace: &mut ExecutionTrace,
) -> Result<ActResult, AgentError> {
    let step = StepTag::Step(step_index);
    let before = driver
        .observe()
        .map_err(|e| AgentError::Infra(e.to_string()))?;
    trace.append(
        step,
        TraceEventBody::ObservationHash {
            hash: before.state_hash(),
        },
    );
    let marked = annotate_marks(&before);
    let prompt_text = build_actor_prompt(step_index, step_action, memory, &marked, config)?;
    let request = ChatRequest::new(&config.model_actor, vec![ChatMessage::user(prompt_text)]);

    let mut blocked_reason: Option<String> = None;
    let mut grounded: Option<(BrowserCommand, GroundingPath)> = None;
    for attempt in 0..=GROUNDING_RETRIES {
        trace.append(
            step,
            TraceEventBody::Prompt {
                component: "actor".to_string(),
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
                blocked_reason = Some(format!("backend failure: {error}"));
                break;
            }
        };
        trace.append(
            step,
            TraceEventBody::Response {
                component: "actor".to_string(),
                text: response.text.clone(),
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
                latency_ms: response.latency_ms,
            },
        );
        match parse_actor_reply(&response.text)
            .map_err(GroundingIssue::Invalid)
            .and_then(|reply| ground(&reply, &marked))
        {
            Ok((command, path)) => {
                trace.append(
                    step,
                    TraceEventBody::Warning {
                        message: format!("grounding path: {path:?}"),
                    },
                );
                grounded = Some((command, path));
                break;
            }
            Err(GroundingIssue::TargetMissing(reason)) => {
                blocked_reason = Some(format!("target element not found on page: {reason}"));
                break;
            }
            Err(GroundingIssue::Invalid(reason)) => {
                trace.append(
                    step,
                    TraceEventBody::Warning {
                        message: format!("grounding retry: {reason}"),
                    },
                );
                if attempt == GROUNDING_RETRIES {
                    blocked_reason = Some("ungroundable".to_string());
                }
            }
        }
    }

    let observation_note = format!("page {}", page_summary(&before));
    memory.append(step_index, MemoryKind::Observation, &observation_note);
    trace.append(
        step,
        TraceEventBody::MemoryAppend {
            entry: format!("s{step_index} OBSERVATION: {observation_note}"),
        },
    );

    let (feedback, after) = match (grounded, blocked_reason) {
        (Some((command, _path)), _) => {
            let result = driver
                .execute(&command)
                .map_err(|e| AgentError::Infra(e.to_string()))?;
            trace.append(
                step,
                TraceEventBody::Command {
                    description: command.describe(),
                    status: result.status.to_string(),
                    note: result.note.clone(),
                },
            );
            let after = driver
                .observe()
                .map_err(|e| AgentError::Infra(e.to_string()))?;
            let narration = format!(
                "attempted `{step_action}`: {} -> {} ({}); page now {}",
                command.describe(),
                result.status,
                result.note,
                page_summary(&after)
            );
            let feedback = if result.status == CommandStatus::Ok {
                ActorFeedback {
                    outcome: ActorOutcome::Executed,
                    command: Some(command),
                    narration,
                }
            } else {
                ActorFeedback {
                    outcome: ActorOutcome::Blocked,
                    command: None,
                    narration,
                }
            };
            (feedback, after)
        }
        (None, reason) => {
            let narration = format!(
                "could not execute `{step_action}`: {}",
                reason.unwrap_or_else(|| "ungroundable".to_string())
            );
            (
                ActorFeedback {
                    outcome: ActorOutcome::Blocked,
                    command: None,
                    narration,
                },
                before.clone(),
            )
        }
    };

    memory.append(step_index, MemoryKind::Action, &feedback.narration);
    trace.append(
        step,
        TraceEventBody::MemoryAppend {
            entry: format!("s{step_index} ACTION: {}", feedback.narration),
        },
    );

    Ok(ActResult {
        feedback,
        before,
        after,
    })
}
