//! The advanced test agent: an orchestrator planning with feedback, an
//! actor that grounds and executes actions, and an assertor judging
//! assertions from screenshots, all over one shared append-only memory.
//!
//! The orchestrator walks the steps strictly in order. Each step's action
//! is delegated to the actor and the outcome judged; rejected attempts
//! retry up to the configured budget before the step — and the test —
//! fails with cause ACTION. Steps with an assertion then go through the
//! assertor, with the same retry discipline and cause ASSERTION. A test
//! passes only after the final step's assertion phase completes.

pub mod actor;
pub mod assertor;
pub mod judge;
pub mod memory;

use serde::{Deserialize, Serialize};

use crate::browser::{BrowserCommand, Driver};
use crate::llm::Backend;
use crate::seeact::{AgentError, AssertionStatus};
use crate::templates::{
    PINATA_ACTOR_TEMPLATE_V1, PINATA_ASSERTOR_TEMPLATE_V1, PINATA_JUDGE_TEMPLATE_V1,
};
use crate::testcase::TestCase;
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};
use crate::verdict::{AgentVerdict, FailureCause, VerdictFlag};

pub use actor::{
    act, build_actor_prompt, ground, ActResult, ActorReply, ActorTarget, GroundingIssue,
    GroundingPath,
};
pub use assertor::{assert_step, build_assertor_prompt};
pub use judge::{build_judge_prompt, judge_feedback, Judgment};
pub use memory::{render_memory_context, MemoryEntry, MemoryKind, MemoryStore};

/// Per-component backends; the three components may use different models
/// and record to different cassettes.
pub struct ComponentBackends {
    pub orchestrator: Backend,
    pub actor: Backend,
    pub assertor: Backend,
}

/// Configuration of one orchestrated run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    /// Total attempt budget per step, for both the action and the
    /// assertion phase.
    pub max_retries: u32,
    /// Token budget for the rendered memory digest in prompts.
    pub memory_budget_tokens: usize,
    pub model_orchestrator: String,
    pub model_actor: String,
    pub model_assertor: String,
    pub actor_template: Option<String>,
    pub judge_template: Option<String>,
    pub assertor_template: Option<String>,
}

impl OrchestratorConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        let model = model_id.into();
        OrchestratorConfig {
            max_retries: 3,
            memory_budget_tokens: 3000,
            model_orchestrator: model.clone(),
            model_actor: model.clone(),
            model_assertor: model,
            actor_template: None,
            judge_template: None,
            assertor_template: None,
        }
    }

    pub fn actor_template(&self) -> &str {
        self.actor_template
            .as_deref()
            .unwrap_or(PINATA_ACTOR_TEMPLATE_V1)
    }

    pub fn judge_template(&self) -> &str {
        self.judge_template
            .as_deref()
            .unwrap_or(PINATA_JUDGE_TEMPLATE_V1)
    }

    pub fn assertor_template(&self) -> &str {
        self.assertor_template
            .as_deref()
            .unwrap_or(PINATA_ASSERTOR_TEMPLATE_V1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionPhase {
    Pending,
    Done,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssertionPhase {
    Pending,
    Verified,
    NotVerified,
    /// The step has no assertion text; the assertor is skipped entirely.
    None,
}

/// The orchestrator's model of one step's execution progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepProgress {
    pub step_index: u32,
    pub action_status: ActionPhase,
    pub assertion_status: AssertionPhase,
    pub attempts_action: u32,
    pub attempts_assert: u32,
}

impl StepProgress {
    fn new(step_index: u32, has_assertion: bool) -> Self {
        StepProgress {
            step_index,
            action_status: ActionPhase::Pending,
            assertion_status: if has_assertion {
                AssertionPhase::Pending
            } else {
                AssertionPhase::None
            },
            attempts_action: 0,
            attempts_assert: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorOutcome {
    Executed,
    Blocked,
}

/// What the actor reports back to the orchestrator.
#[derive(Debug, Clone)]
pub struct ActorFeedback {
    pub outcome: ActorOutcome,
    /// Present exactly when the outcome is `Executed` (command ran with
    /// status OK).
    pub command: Option<BrowserCommand>,
    pub narration: String,
}

/// An assertor verdict over the decomposed atomic assertions.
#[derive(Debug, Clone)]
pub struct AssertorReport {
    pub atomic: Vec<(String, AssertionStatus, String)>,
    pub overall: AssertionStatus,
    /// Set when the reply was unparsable and the overall status is a
    /// degraded default rather than a judgment.
    pub degraded: bool,
}

/// Run one case through the orchestrator. Returns the verdict and the
/// per-step progress model.
pub fn orchestrate(
    case: &TestCase,
    driver: &mut dyn Driver,
    backends: &ComponentBackends,
    config: &OrchestratorConfig,
    trace: &mut ExecutionTrace,
) -> Result<(AgentVerdict, Vec<StepProgress>), AgentError> {
    if case.steps.is_empty() {
        return Err(AgentError::Infra("case has no steps".to_string()));
    }
    let mut memory = MemoryStore::new();
    let mut progress: Vec<StepProgress> = Vec::with_capacity(case.steps.len());

    for step in &case.steps {
        let step_index = step.index;
        let tag = StepTag::Step(step_index);
        let mut record = StepProgress::new(step_index, step.assertion.is_some());

        // Action phase: delegate to the actor, judge each attempt.
        let mut parse_degraded = false;
        loop {
            let attempt = record.attempts_action + 1;
            record.attempts_action = attempt;
            let act_result = match act(
                step_index,
                &step.action,
                &mut memory,
                driver,
                &backends.actor,
                config,
                trace,
            ) {
                Ok(result) => result,
                Err(AgentError::Infra(message)) => return Err(AgentError::Infra(message)),
                Err(other) => return Err(other),
            };
            if act_result.feedback.narration.contains("ungroundable") {
                parse_degraded = true;
            }
            let judgment = judge_feedback(
                step_index,
                &step.action,
                &act_result.feedback,
                &act_result.before,
                &act_result.after,
                attempt,
                config.max_retries,
                &backends.orchestrator,
                config,
                trace,
            )?;
            memory.append(
                step_index,
                MemoryKind::Judgment,
                format!("attempt {attempt}: {}", judgment.label()),
            );
            trace.append(
                tag,
                TraceEventBody::MemoryAppend {
                    entry: format!(
                        "s{step_index} JUDGMENT: attempt {attempt}: {}",
                        judgment.label()
                    ),
                },
            );
            match judgment {
                Judgment::Accept => {
                    record.action_status = ActionPhase::Done;
                    break;
                }
                Judgment::Infeasible => {
                    record.action_status = ActionPhase::Infeasible;
                    progress.push(record);
                    let mut verdict = AgentVerdict::fail(step_index, FailureCause::Action);
                    if parse_degraded {
                        verdict = verdict.with_flag(VerdictFlag::ParseDegraded);
                    }
                    finish(trace, tag, &verdict);
                    return Ok((verdict, progress));
                }
                Judgment::Retry => {
                    if attempt >= config.max_retries {
                        record.action_status = ActionPhase::Infeasible;
                        progress.push(record);
                        let mut verdict = AgentVerdict::fail(step_index, FailureCause::Action)
                            .with_flag(VerdictFlag::CapExceeded);
                        if parse_degraded {
                            verdict = verdict.with_flag(VerdictFlag::ParseDegraded);
                        }
                        finish(trace, tag, &verdict);
                        return Ok((verdict, progress));
                    }
                }
            }
        }

        // Assertion phase: skipped entirely for assertion-less steps.
        if let Some(assertion) = &step.assertion {
            loop {
                let attempt = record.attempts_assert + 1;
                record.attempts_assert = attempt;
                // Fresh observation per attempt.
                let observation = driver
                    .observe()
                    .map_err(|e| AgentError::Infra(e.to_string()))?;
                let report = assert_step(
                    step_index,
                    assertion,
                    &observation,
                    &mut memory,
                    &backends.assertor,
                    config,
                    trace,
                )?;
                if report.overall == AssertionStatus::Verified {
                    record.assertion_status = AssertionPhase::Verified;
                    break;
                }
                if attempt >= config.max_retries {
                    record.assertion_status = AssertionPhase::NotVerified;
                    progress.push(record);
                    let mut verdict = AgentVerdict::fail(step_index, FailureCause::Assertion);
                    if report.degraded {
                        verdict = verdict.with_flag(VerdictFlag::ParseDegraded);
                    }
                    finish(trace, tag, &verdict);
                    return Ok((verdict, progress));
                }
            }
        }

        progress.push(record);
    }

    let verdict = AgentVerdict::pass();
    finish(trace, StepTag::Step(case.steps.len() as u32), &verdict);
    Ok((verdict, progress))
}

fn finish(trace: &mut ExecutionTrace, tag: StepTag, verdict: &AgentVerdict) {
    trace.append(
        tag,
        TraceEventBody::Verdict {
            verdict: verdict.clone(),
        },
    );
}
