//! Runtime and evaluation harness for autonomous test agents (ATAs):
//! LLM-driven agents that execute natural-language end-to-end web test
//! cases step by step and return a pass/fail verdict with failed-step
//! attribution.
//!
//! The crate is organised around the lifecycle of a test run:
//!
//! - [`testcase`] — test-case and suite model, parsing, validation and
//!   prompt-safe rendering.
//! - [`browser`] — the browser-driver abstraction: a deterministic
//!   simulated web application driven by fixture files, Set-of-Marks
//!   annotation, and (behind the `remote-driver` feature) a thin
//!   WebDriver client for real browsers.
//! - [`llm`] — provider-agnostic chat-completion gateway with
//!   record/replay cassettes for fully deterministic runs.
//! - [`seeact`] — the baseline single-prompt agent.
//! - [`pinata`] — the orchestrator / actor / assertor agent with shared
//!   long-term memory.
//! - [`metrics`] — verdict- and step-alignment scoring against human
//!   ground truth, in exact rational arithmetic.
//! - [`harness`] — suite runner, trace persistence and report emission.

pub mod browser;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod pinata;
pub mod seeact;
pub mod templates;
pub mod testcase;
pub mod tokens;
pub mod trace;
pub mod verdict;

pub use verdict::{AgentVerdict, FailureCause, Outcome, VerdictFlag};
