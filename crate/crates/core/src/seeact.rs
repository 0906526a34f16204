//! Baseline single-prompt test agent.
//!
//! One iterative prompt carries the tester profile, the rendered test, the
//! action history, the marked screenshot, chain-of-thought guidance
//! sections, a lettered multichoice over the page elements, and a final
//! structured answer. The LLM's answer drives the browser; assertion
//! statuses extracted from the response drive the verdict.

use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

use crate::browser::{
    annotate_marks, BrowserCommand, CommandResult, CommandTarget, Driver, DriverError,
    MarkedObservation, ScreenshotArtifact,
};
use crate::llm::{Backend, ChatMessage, ChatRequest, ContentPart, LlmError, Role};
use crate::templates::{self, TemplateError, SEEACT_TEMPLATE_V1};
use crate::testcase::{render_case_text, TestCase};
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};
use crate::verdict::{AgentVerdict, FailureCause, VerdictFlag};

/// Elements get letters A..Y; the 26th letter is reserved for the
/// none-option. Anything past the budget is dropped with a trace warning.
pub const LETTER_BUDGET: usize = 25;

/// Iteration and parse-retry limits for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunLimits {
    /// Hard cap on LLM calls; `None` means 4x the step count, capped at 40.
    pub max_iterations: Option<u32>,
    /// Consecutive malformed responses tolerated before giving up.
    pub parse_retries: u32,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_iterations: None,
            parse_retries: 2,
        }
    }
}

impl RunLimits {
    pub fn effective_max(&self, step_count: usize) -> u32 {
        self.max_iterations
            .unwrap_or_else(|| (4 * step_count as u32).min(40))
    }
}

/// Actions the final answer may name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeeActAction {
    Click,
    Select,
    Type,
    PressEnter,
    Terminate,
    None,
}

/// The element choice of a final answer: a multichoice letter, or the
/// none-option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementChoice {
    Letter(char),
    NoneMatch,
}

/// Parsed `ELEMENT / ACTION / VALUE` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalAnswer {
    pub element_choice: ElementChoice,
    pub action: SeeActAction,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("MISSING_BLOCK: no final answer block in response")]
    MissingBlock,
    #[error("UNKNOWN_ACTION: `{0}` is not a recognised action")]
    UnknownAction(String),
    #[error("MISSING_VALUE: {0} requires a value")]
    MissingValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertionStatus {
    Verified,
    NotVerified,
}

/// A command the agent actually issued, with its result and a
/// prompt-friendly description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutedCommand {
    pub command: BrowserCommand,
    pub result: CommandResult,
    pub description: String,
}

/// One prompt/response turn of a run. Turns are append-only.
#[derive(Debug, Clone)]
pub struct SeeActTurn {
    pub prompt: ChatRequest,
    pub response_text: String,
    pub parsed: Result<FinalAnswer, ParseFailure>,
    pub assertion_report: Vec<(String, AssertionStatus)>,
    pub executed: Option<ExecutedCommand>,
}

/// A built prompt plus the letter grounding needed to map the answer back
/// onto marks.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub request: ChatRequest,
    /// letter index (0 = A) to mark id of this turn's observation.
    pub letter_marks: Vec<u32>,
    pub none_letter: char,
    pub dropped_elements: usize,
}

/// Errors that abort a case instead of producing a verdict. Anything the
/// harness should score as infrastructure failure, not agent failure.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("infrastructure: {0}")]
    Infra(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("driver error during reset: {0}")]
    Reset(DriverError),
}

pub(crate) fn infra_or_verdict(error: &LlmError) -> Option<AgentError> {
    if error.is_infrastructure() {
        Some(AgentError::Infra(error.to_string()))
    } else {
        None
    }
}

/// Build the single-user-message prompt for one turn.
pub fn build_prompt(
    case: &TestCase,
    history: &[SeeActTurn],
    marked: &MarkedObservation,
    template: &str,
    model_id: &str,
) -> Result<PromptBundle, TemplateError> {
    let test_text = render_case_text(case);
    let previous_actions = previous_actions_summary(history);

    let elements: Vec<_> = marked.marks.iter().collect();
    let kept = elements.len().min(LETTER_BUDGET);
    let dropped_elements = elements.len() - kept;
    let mut letter_marks = Vec::with_capacity(kept);
    let mut choices = String::new();
    for (i, (mark_id, element)) in elements.iter().take(kept).enumerate() {
        let letter = (b'A' + i as u8) as char;
        letter_marks.push(**mark_id);
        choices.push_str(&format!("{letter}. {}\n", element.pseudo_html()));
    }
    let none_letter = (b'A' + kept as u8) as char;
    choices.push_str(&format!(
        "{none_letter}. None of the other options match the correct element"
    ));

    let screenshot_text = match &marked.marked_screenshot {
        ScreenshotArtifact::TextRender(text) => Some(text.trim_end().to_string()),
        ScreenshotArtifact::Image(_) => None,
    };

    let none_letter_str = none_letter.to_string();
    let bindings: Vec<(&str, &str)> = vec![
        ("TEST", test_text.trim_end()),
        ("PREVIOUS_ACTIONS", previous_actions.trim_end()),
        ("CHOICES", choices.trim_end()),
        ("NONE_LETTER", &none_letter_str),
    ];

    let parts = match screenshot_text {
        Some(text) => {
            let mut bindings = bindings.clone();
            bindings.push(("SCREENSHOT", &text));
            vec![ContentPart::text(templates::render(template, &bindings)?)]
        }
        None => {
            // Image screenshots ride along as an attachment part between
            // the two halves of the template.
            let mut bindings = bindings.clone();
            bindings.push(("SCREENSHOT", "(screenshot attached below)"));
            let rendered = templates::render(template, &bindings)?;
            let marker = "(screenshot attached below)";
            let split = rendered.find(marker).map(|i| i + marker.len());
            let ScreenshotArtifact::Image(bytes) = &marked.marked_screenshot else {
                unreachable!()
            };
            match split {
                Some(at) => vec![
                    ContentPart::text(rendered[..at].to_string()),
                    ContentPart::Image {
                        media_type: "image/png".to_string(),
                        data: bytes.clone(),
                    },
                    ContentPart::text(rendered[at..].to_string()),
                ],
                None => vec![ContentPart::text(rendered)],
            }
        }
    };

    let request = ChatRequest::new(
        model_id,
        vec![ChatMessage {
            role: Role::User,
            parts,
        }],
    );
    Ok(PromptBundle {
        request,
        letter_marks,
        none_letter,
        dropped_elements,
    })
}

fn previous_actions_summary(history: &[SeeActTurn]) -> String {
    let executed: Vec<&ExecutedCommand> =
        history.iter().filter_map(|t| t.executed.as_ref()).collect();
    if executed.is_empty() {
        return "None".to_string();
    }
    let mut out = String::new();
    for (i, execution) in executed.iter().enumerate() {
        out.push_str(&format!(
            "{}. {} -> {}\n",
            i + 1,
            execution.description,
            execution.result.status
        ));
    }
    out
}

fn answer_regexes() -> &'static (Regex, Regex, Regex) {
    static REGEXES: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    REGEXES.get_or_init(|| {
        (
            Regex::new(r"(?im)^\s*ELEMENT\s*:\s*(.*)$").expect("element regex"),
            Regex::new(r"(?im)^\s*ACTION\s*:\s*(.*)$").expect("action regex"),
            Regex::new(r"(?im)^\s*VALUE\s*:\s*(.*)$").expect("value regex"),
        )
    })
}

/// Parse the last `ELEMENT / ACTION / VALUE` block out of a response,
/// tolerant of surrounding prose. `PRESS ENTER` is normalized to
/// `PRESS_ENTER`; TYPE and SELECT must carry a value.
pub fn parse_final_answer(response_text: &str) -> Result<FinalAnswer, ParseFailure> {
    let (element_re, action_re, value_re) = answer_regexes();

    let action_capture = action_re
        .captures_iter(response_text)
        .last()
        .ok_or(ParseFailure::MissingBlock)?;
    let action_raw = action_capture
        .get(1)
        .map(|m| m.as_str().trim())
        .unwrap_or_default();
    let action_token = action_raw
        .trim_end_matches(['.', '!'])
        .replace([' ', '-'], "_")
        .to_uppercase();
    let action = match action_token.as_str() {
        "CLICK" => SeeActAction::Click,
        "SELECT" => SeeActAction::Select,
        "TYPE" => SeeActAction::Type,
        "PRESS_ENTER" => SeeActAction::PressEnter,
        "TERMINATE" => SeeActAction::Terminate,
        "NONE" => SeeActAction::None,
        _ => return Err(ParseFailure::UnknownAction(action_raw.to_string())),
    };

    let element_choice = element_re
        .captures_iter(response_text)
        .last()
        .map(|c| parse_element_choice(c.get(1).map(|m| m.as_str()).unwrap_or_default()))
        .unwrap_or(ElementChoice::NoneMatch);

    let value = value_re
        .captures_iter(response_text)
        .last()
        .map(|c| c.get(1).map(|m| m.as_str().trim()).unwrap_or_default())
        .filter(|v| !v.is_empty() && !v.eq_ignore_ascii_case("none"))
        .map(|v| v.to_string());

    if value.is_none() && matches!(action, SeeActAction::Type | SeeActAction::Select) {
        return Err(ParseFailure::MissingValue(action_token));
    }
    Ok(FinalAnswer {
        element_choice,
        action,
        value,
    })
}

fn parse_element_choice(raw: &str) -> ElementChoice {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.to_lowercase().contains("none") {
        return ElementChoice::NoneMatch;
    }
    let mut chars = trimmed.chars();
    let first = chars.next().unwrap_or(' ').to_ascii_uppercase();
    let rest_is_separator = chars.next().is_none_or(|c| !c.is_ascii_alphanumeric());
    if first.is_ascii_uppercase() && rest_is_separator {
        ElementChoice::Letter(first)
    } else {
        ElementChoice::NoneMatch
    }
}

fn assertion_regex() -> &'static Regex {
    static REGEX: OnceLock<Regex> = OnceLock::new();
    REGEX.get_or_init(|| {
        Regex::new(r"(?m)^\s*\d+[.)]\s*(.*?)\s*[:|\-]*\s*(NOT\s+VERIFIED|VERIFIED)\s*\.?\s*$")
            .expect("assertion regex")
    })
}

/// Extract the numbered atomic-assertion statuses from a response. An
/// absent section yields an empty list (assertion-less step).
pub fn extract_assertion_statuses(response_text: &str) -> Vec<(String, AssertionStatus)> {
    assertion_regex()
        .captures_iter(response_text)
        .map(|capture| {
            let text = capture.get(1).map(|m| m.as_str()).unwrap_or_default();
            let status = if capture
                .get(2)
                .map(|m| m.as_str().starts_with("NOT"))
                .unwrap_or(false)
            {
                AssertionStatus::NotVerified
            } else {
                AssertionStatus::Verified
            };
            (text.trim().to_string(), status)
        })
        .collect()
}

/// Whether the response carries the all-verified sentinel sentence.
pub fn has_all_verified_sentinel(response_text: &str) -> bool {
    response_text.contains("All assertions have been verified")
}

fn progress_regex() -> &'static Regex {
    static REGEX: OnceLock<Regex> = OnceLock::new();
    REGEX.get_or_init(|| Regex::new(r"(?i)\bstep\s+(\d+)\b").expect("progress regex"))
}

/// Current step as reported in the `[TEST CASE PROGRESS]` section: the
/// first line that names a step and tags it CURRENT. The tag must be
/// uppercase; prose like "the current test step" never matches.
pub fn parse_progress_current_step(response_text: &str) -> Option<u32> {
    for line in response_text.lines() {
        if !line.contains("CURRENT") {
            continue;
        }
        if let Some(capture) = progress_regex().captures(line) {
            if let Ok(step) = capture[1].parse::<u32>() {
                return Some(step);
            }
        }
    }
    None
}

/// Everything a run needs besides the case, driver and backend.
#[derive(Debug, Clone)]
pub struct SeeActConfig {
    pub model_id: String,
    pub limits: RunLimits,
    /// Template text override; `None` uses the embedded v1 template.
    pub template: Option<String>,
}

impl SeeActConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        SeeActConfig {
            model_id: model_id.into(),
            limits: RunLimits::default(),
            template: None,
        }
    }
}

/// Execute one case with the baseline agent. The trace receives every
/// prompt, response, command and warning; the verdict comes from the
/// rules below:
///
/// - any assertion NOT VERIFIED on two consecutive turns for the same
///   step fails that step with cause ASSERTION (one retry absorbs a
///   transient misread);
/// - TERMINATE at the last step with its assertions verified (or absent)
///   passes; TERMINATE earlier fails the first unexecuted step with
///   cause ACTION;
/// - hitting the iteration cap or exhausting parse retries fails the
///   current step with cause ACTION, flagged accordingly.
pub fn run(
    case: &TestCase,
    driver: &mut dyn Driver,
    backend: &Backend,
    config: &SeeActConfig,
    trace: &mut ExecutionTrace,
) -> Result<AgentVerdict, AgentError> {
    if case.steps.is_empty() {
        return Err(AgentError::Infra("case has no steps".to_string()));
    }
    let template = config.template.as_deref().unwrap_or(SEEACT_TEMPLATE_V1);
    let limits = config.limits;
    let model_id = config.model_id.clone();
    let last_step = case.steps.len() as u32;
    let max_calls = limits.effective_max(case.steps.len());

    let mut history: Vec<SeeActTurn> = Vec::new();
    let mut tracked_step: u32 = 1;
    let mut consecutive_parse_failures: u32 = 0;
    let mut last_not_verified_step: Option<u32> = None;
    let mut calls: u32 = 0;

    let verdict = loop {
        if calls >= max_calls {
            break AgentVerdict::fail(tracked_step, FailureCause::Action)
                .with_flag(VerdictFlag::CapExceeded);
        }

        let observation = match driver.observe() {
            Ok(observation) => observation,
            Err(error) => {
                trace.append(
                    StepTag::Step(tracked_step),
                    TraceEventBody::Warning {
                        message: format!("driver failure: {error}"),
                    },
                );
                break AgentVerdict::fail(tracked_step, FailureCause::Action);
            }
        };
        trace.append(
            StepTag::Step(tracked_step),
            TraceEventBody::ObservationHash {
                hash: observation.state_hash(),
            },
        );
        let marked = annotate_marks(&observation);
        let bundle = build_prompt(case, &history, &marked, template, &model_id)?;
        if bundle.dropped_elements > 0 {
            trace.append(
                StepTag::Step(tracked_step),
                TraceEventBody::Warning {
                    message: format!(
                        "{} elements beyond the letter budget were dropped",
                        bundle.dropped_elements
                    ),
                },
            );
        }

        trace.append(
            StepTag::Step(tracked_step),
            TraceEventBody::Prompt {
                component: "seeact".to_string(),
                fingerprint: crate::llm::fingerprint(&bundle.request),
                text: crate::llm::canonical_request_text(&bundle.request),
            },
        );
        let response = match backend.complete(&bundle.request) {
            Ok(response) => response,
            Err(error) => {
                if let Some(infra) = infra_or_verdict(&error) {
                    return Err(infra);
                }
                trace.append(
                    StepTag::Step(tracked_step),
                    TraceEventBody::Warning {
                        message: format!("backend failure: {error}"),
                    },
                );
                break AgentVerdict::fail(tracked_step, FailureCause::Action);
            }
        };
        calls += 1;
        trace.append(
            StepTag::Step(tracked_step),
            TraceEventBody::Response {
                component: "seeact".to_string(),
                text: response.text.clone(),
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
                latency_ms: response.latency_ms,
            },
        );

        let parsed = parse_final_answer(&response.text);
        let assertion_report = extract_assertion_statuses(&response.text);
        let reported_step = parse_progress_current_step(&response.text);
        let current_step = reported_step.unwrap_or(tracked_step).clamp(1, last_step);
        tracked_step = current_step;

        let has_not_verified = assertion_report
            .iter()
            .any(|(_, status)| *status == AssertionStatus::NotVerified);

        let mut turn = SeeActTurn {
            prompt: bundle.request.clone(),
            response_text: response.text.clone(),
            parsed: parsed.clone(),
            assertion_report,
            executed: None,
        };

        if has_not_verified {
            if last_not_verified_step == Some(current_step) {
                history.push(turn);
                break AgentVerdict::fail(current_step, FailureCause::Assertion);
            }
            last_not_verified_step = Some(current_step);
        } else {
            last_not_verified_step = None;
        }

        let answer = match parsed {
            Ok(answer) => {
                consecutive_parse_failures = 0;
                answer
            }
            Err(failure) => {
                consecutive_parse_failures += 1;
                trace.append(
                    StepTag::Step(current_step),
                    TraceEventBody::Warning {
                        message: format!("parse failure: {failure}"),
                    },
                );
                history.push(turn);
                if consecutive_parse_failures > limits.parse_retries {
                    break AgentVerdict::fail(current_step, FailureCause::Action)
                        .with_flag(VerdictFlag::CapExceeded)
                        .with_flag(VerdictFlag::ParseDegraded);
                }
                continue;
            }
        };

        match answer.action {
            SeeActAction::Terminate => {
                history.push(turn);
                if current_step >= last_step {
                    if has_not_verified {
                        break AgentVerdict::fail(last_step, FailureCause::Assertion);
                    }
                    break AgentVerdict::pass();
                }
                break AgentVerdict::fail(current_step, FailureCause::Action);
            }
            SeeActAction::None => {
                history.push(turn);
                continue;
            }
            action => {
                let command = match resolve_command(action, &answer, &bundle) {
                    Ok(command) => command,
                    Err(reason) => {
                        consecutive_parse_failures += 1;
                        trace.append(
                            StepTag::Step(current_step),
                            TraceEventBody::Warning {
                                message: format!("ungroundable answer: {reason}"),
                            },
                        );
                        history.push(turn);
                        if consecutive_parse_failures > limits.parse_retries {
                            break AgentVerdict::fail(current_step, FailureCause::Action)
                                .with_flag(VerdictFlag::CapExceeded)
                                .with_flag(VerdictFlag::ParseDegraded);
                        }
                        continue;
                    }
                };
                let description = describe_command(&command, &marked);
                let result = match driver.execute(&command) {
                    Ok(result) => result,
                    Err(error) => {
                        trace.append(
                            StepTag::Step(current_step),
                            TraceEventBody::Warning {
                                message: format!("driver failure: {error}"),
                            },
                        );
                        history.push(turn);
                        break AgentVerdict::fail(current_step, FailureCause::Action);
                    }
                };
                trace.append(
                    StepTag::Step(current_step),
                    TraceEventBody::Command {
                        description: description.clone(),
                        status: result.status.to_string(),
                        note: result.note.clone(),
                    },
                );
                let executed_ok = result.status == crate::browser::CommandStatus::Ok;
                turn.executed = Some(ExecutedCommand {
                    command,
                    result,
                    description,
                });
                history.push(turn);
                if executed_ok && reported_step.is_none() {
                    tracked_step = (tracked_step + 1).min(last_step);
                }
            }
        }
    };

    trace.append(
        StepTag::Step(verdict.failed_step.unwrap_or(last_step.max(1))),
        TraceEventBody::Verdict {
            verdict: verdict.clone(),
        },
    );
    Ok(verdict)
}

/// Map a parsed answer onto a browser command using this turn's letter
/// grounding. TERMINATE and NONE never reach this function.
fn resolve_command(
    action: SeeActAction,
    answer: &FinalAnswer,
    bundle: &PromptBundle,
) -> Result<BrowserCommand, String> {
    let mark_for_letter = |letter: char| -> Result<u32, String> {
        let index = (letter as u8).wrapping_sub(b'A') as usize;
        if letter == bundle.none_letter {
            return Err(format!("letter {letter} is the none-option"));
        }
        bundle
            .letter_marks
            .get(index)
            .copied()
            .ok_or_else(|| format!("letter {letter} was not offered in the multichoice"))
    };
    match action {
        SeeActAction::PressEnter => Ok(BrowserCommand::press_enter()),
        SeeActAction::Click => match answer.element_choice {
            ElementChoice::Letter(letter) => Ok(BrowserCommand::click(CommandTarget::Mark(
                mark_for_letter(letter)?,
            ))),
            ElementChoice::NoneMatch => Err("CLICK without an element letter".to_string()),
        },
        SeeActAction::Type | SeeActAction::Select => {
            let letter = match answer.element_choice {
                ElementChoice::Letter(letter) => letter,
                ElementChoice::NoneMatch => {
                    return Err(format!("{action:?} without an element letter"))
                }
            };
            let mark = mark_for_letter(letter)?;
            let value = answer.value.clone().unwrap_or_default();
            if action == SeeActAction::Type {
                Ok(BrowserCommand::type_text(CommandTarget::Mark(mark), value))
            } else {
                Ok(BrowserCommand::select(CommandTarget::Mark(mark), value))
            }
        }
        SeeActAction::Terminate | SeeActAction::None => {
            unreachable!("terminal actions never reach the driver")
        }
    }
}

fn describe_command(command: &BrowserCommand, marked: &MarkedObservation) -> String {
    let element_text = command.target.and_then(|target| match target {
        CommandTarget::Mark(id) => marked.element(id).map(|e| e.text.clone()),
        CommandTarget::Point { .. } => None,
    });
    match element_text {
        Some(text) => match &command.value {
            Some(value) => format!("{} \"{value}\" into \"{text}\"", command.kind),
            None => format!("{} on \"{text}\"", command.kind),
        },
        None => command.describe(),
    }
}
