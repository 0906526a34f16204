//! Agent verdicts: the outcome of executing one test case.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Pass/fail outcome of a test-case execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass => write!(f, "PASS"),
            Outcome::Fail => write!(f, "FAIL"),
        }
    }
}

/// Why a failing verdict was reached: the step's action could not be
/// completed, or the step's assertion did not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FailureCause {
    Action,
    Assertion,
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureCause::Action => write!(f, "ACTION"),
            FailureCause::Assertion => write!(f, "ASSERTION"),
        }
    }
}

/// Degradation flags attached to a verdict. They never change the verdict
/// itself; they record that the run hit an operational limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictFlag {
    /// The iteration or retry cap was reached before a natural verdict.
    CapExceeded,
    /// Malformed LLM output forced a degraded decision path.
    ParseDegraded,
}

/// The agent's verdict for one test case.
///
/// Invariant: `outcome == Fail` if and only if `failed_step` and `cause`
/// are both present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub outcome: Outcome,
    pub failed_step: Option<u32>,
    pub cause: Option<FailureCause>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<VerdictFlag>,
}

impl AgentVerdict {
    pub fn pass() -> Self {
        AgentVerdict {
            outcome: Outcome::Pass,
            failed_step: None,
            cause: None,
            flags: BTreeSet::new(),
        }
    }

    pub fn fail(step: u32, cause: FailureCause) -> Self {
        AgentVerdict {
            outcome: Outcome::Fail,
            failed_step: Some(step),
            cause: Some(cause),
            flags: BTreeSet::new(),
        }
    }

    pub fn with_flag(mut self, flag: VerdictFlag) -> Self {
        self.flags.insert(flag);
        self
    }

    /// Check the structural invariant tying outcome to attribution fields.
    pub fn is_well_formed(&self) -> bool {
        match self.outcome {
            Outcome::Pass => self.failed_step.is_none() && self.cause.is_none(),
            Outcome::Fail => self.failed_step.is_some() && self.cause.is_some(),
        }
    }
}

impl fmt::Display for AgentVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.outcome {
            Outcome::Pass => write!(f, "PASS"),
            Outcome::Fail => {
                write!(
                    f,
                    "FAIL at step {} ({})",
                    self.failed_step.unwrap_or(0),
                    self.cause.map(|c| c.to_string()).unwrap_or_default()
                )?;
                if !self.flags.is_empty() {
                    let tags: Vec<String> = self.flags.iter().map(|x| format!("{x:?}")).collect();
                    write!(f, " [{}]", tags.join(", "))?;
                }
                Ok(())
            }
        }
    }
}
