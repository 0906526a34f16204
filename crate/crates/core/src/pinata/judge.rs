//! The orchestrator's judgment of an actor attempt.
//!
//! Executed attempts are judged by a dedicated LLM call over the actor's
//! narration and before/after page summaries — actor self-reports are not
//! trusted. Blocked attempts never reach the LLM: nothing was executed, so
//! they map to RETRY, or to INFEASIBLE on the final retry with the page
//! unchanged.

use regex::Regex;
use std::sync::OnceLock;

use crate::browser::PageObservation;
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::seeact::{infra_or_verdict, AgentError};
use crate::templates;
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};

use super::{ActorFeedback, ActorOutcome, OrchestratorConfig};

pub const JUDGE_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgment {
    Accept,
    Retry,
    Infeasible,
}

impl Judgment {
    pub fn label(self) -> &'static str {
        match self {
            Judgment::Accept => "ACCEPT",
            Judgment::Retry => "RETRY",
            Judgment::Infeasible => "INFEASIBLE",
        }
    }
}

fn decision_regex() -> &'static Regex {
    static REGEX: OnceLock<Regex> = OnceLock::new();
    REGEX.get_or_init(|| {
        Regex::new(r"(?im)^\s*DECISION\s*:\s*(ACCEPT|RETRY|INFEASIBLE)\b").expect("decision regex")
    })
}

pub fn parse_decision(text: &str) -> Option<Judgment> {
    decision_regex()
        .captures_iter(text)
        .last()
        .map(|c| match c[1].to_uppercase().as_str() {
            "ACCEPT" => Judgment::Accept,
            "INFEASIBLE" => Judgment::Infeasible,
            _ => Judgment::Retry,
        })
}

fn observation_summary(observation: &PageObservation) -> String {
    format!(
        "title \"{}\", url {}, state {}",
        observation.title,
        observation.url,
        &observation.state_hash()[..8]
    )
}

/// Render the judgment prompt for one executed attempt.
pub fn build_judge_prompt(
    step_action: &str,
    feedback: &ActorFeedback,
    before: &PageObservation,
    after: &PageObservation,
    config: &OrchestratorConfig,
) -> Result<String, crate::templates::TemplateError> {
    templates::render(
        config.judge_template(),
        &[
            ("PROFILE", templates::MULTI_AGENT_PROFILE),
            ("ACTION", step_action),
            ("FEEDBACK", &feedback.narration),
            ("BEFORE", &observation_summary(before)),
            ("AFTER", &observation_summary(after)),
        ],
    )
}

/// Judge one actor attempt. `attempt` is 1-based; `max_retries` is the
/// total attempt budget for the step.
#[allow(clippy::too_many_arguments)]
pub fn judge_feedback(
    step_index: u32,
    step_action: &str,
    feedback: &ActorFeedback,
    before: &PageObservation,
    after: &PageObservation,
    attempt: u32,
    max_retries: u32,
    backend: &Backend,
    config: &OrchestratorConfig,
    trace: &mut ExecutionTrace,
) -> Result<Judgment, AgentError> {
    let step = StepTag::Step(step_index);

    if feedback.outcome == ActorOutcome::Blocked {
        let unchanged = before.state_hash() == after.state_hash();
        let judgment = if attempt >= max_retries && unchanged {
            Judgment::Infeasible
        } else {
            Judgment::Retry
        };
        trace.append(
            step,
            TraceEventBody::Judgment {
                decision: format!("{} (actor blocked, no llm call)", judgment.label()),
            },
        );
        return Ok(judgment);
    }

    let prompt_text = build_judge_prompt(step_action, feedback, before, after, config)?;
    let request = ChatRequest::new(
        &config.model_orchestrator,
        vec![ChatMessage::user(prompt_text)],
    );

    let mut judgment = Judgment::Retry; // conservative fallback
    for parse_attempt in 0..=JUDGE_PARSE_RETRIES {
        trace.append(
            step,
            TraceEventBody::Prompt {
                component: "orchestrator".to_string(),
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
                        message: format!("judge backend failure: {error}"),
                    },
                );
                break;
            }
        };
        trace.append(
            step,
            TraceEventBody::Response {
                component: "orchestrator".to_string(),
                text: response.text.clone(),
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
                latency_ms: response.latency_ms,
            },
        );
        match parse_decision(&response.text) {
            Some(parsed) => {
                judgment = parsed;
                break;
            }
            None if parse_attempt == JUDGE_PARSE_RETRIES => {
                trace.append(
                    step,
                    TraceEventBody::Warning {
                        message: "unparsable judgment, defaulting to RETRY".to_string(),
                    },
                );
            }
            None => {}
        }
    }

    trace.append(
        step,
        TraceEventBody::Judgment {
            decision: judgment.label().to_string(),
        },
    );
    Ok(judgment)
}
