//! Natural-language end-to-end test cases and suites.
//!
//! A test case is an ordered scenario of steps, each with a free-text
//! action and an optional free-text assertion. A suite groups cases and
//! carries a manifest of per-application pass/fail counts that is checked
//! against the actual cases at parse time and never silently repaired.
//!
//! The suite file format is a line-oriented structured text document; the
//! exact grammar with worked examples lives in `docs/suite-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::Outcome;

/// One step of a test case: a 1-based ordinal, a natural-language action,
/// and an optional natural-language assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: u32,
    pub action: String,
    pub assertion: Option<String>,
}

/// A natural-language E2E test case with its human ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub app_id: String,
    pub title: String,
    pub steps: Vec<Step>,
    pub ground_truth: Outcome,
    pub expected_failure_step: Option<u32>,
}

/// Per-application counts of passing and failing cases, as declared in the
/// suite manifest block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pass_count: u32,
    pub fail_count: u32,
}

/// A parsed suite: name, manifest, and cases. Immutable after parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub manifest: BTreeMap<String, ManifestEntry>,
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuiteError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("case {case_id}: {violation}")]
    InvalidCase { case_id: String, violation: String },
    #[error("duplicate case id {0}")]
    DuplicateId(String),
    #[error("manifest mismatch for {app_id}: declared {declared_pass}/{declared_fail} pass/fail, found {actual_pass}/{actual_fail}")]
    ManifestMismatch {
        app_id: String,
        declared_pass: u32,
        declared_fail: u32,
        actual_pass: u32,
        actual_fail: u32,
    },
}

/// Parse a suite file. The returned [`Suite`] satisfies every structural
/// invariant: contiguous step indices, ground-truth/failure-step
/// consistency, unique ids, and a manifest that matches the actual cases.
pub fn parse_suite(raw: &str) -> Result<Suite, SuiteError> {
    Parser::new(raw).parse()
}

/// Validate one case, returning a description of every violated rule.
/// An empty list means all invariants hold.
pub fn validate_case(case: &TestCase) -> Vec<String> {
    let mut violations = Vec::new();
    if case.id.trim().is_empty() {
        violations.push("id: case id is empty".to_string());
    }
    if case.app_id.trim().is_empty() {
        violations.push("app: application id is empty".to_string());
    }
    if case.steps.is_empty() {
        violations.push("steps: case must have at least one step".to_string());
    }
    for (pos, step) in case.steps.iter().enumerate() {
        let expected = pos as u32 + 1;
        if step.index != expected {
            violations.push(format!("non-contiguous step index at position {}", pos + 1));
        }
        if step.action.trim().is_empty() {
            violations.push(format!("step {}: action text is empty", step.index));
        }
        if let Some(assertion) = &step.assertion {
            if assertion.trim().is_empty() {
                violations.push(format!("step {}: expect text is empty", step.index));
            }
        }
    }
    match (case.ground_truth, case.expected_failure_step) {
        (Outcome::Pass, Some(_)) => {
            violations.push("expected_failure_step forbidden for PASS".to_string());
        }
        (Outcome::Fail, None) => {
            violations.push("expected_failure_step missing for FAIL".to_string());
        }
        (Outcome::Fail, Some(step)) => {
            if step == 0 || step as usize > case.steps.len() {
                violations.push("failure step out of range".to_string());
            }
        }
        (Outcome::Pass, None) => {}
    }
    violations
}

/// Render a case as prompt-embeddable text: one line per step,
/// `Step N — Action: ... | Expected: ...`, with the `Expected` clause
/// omitted for assertion-less steps. The rendering deliberately exposes
/// neither the ground-truth label nor the expected failure step: agents
/// must never see the oracle.
pub fn render_case_text(case: &TestCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Test: {}", case.title);
    for step in &case.steps {
        let _ = write!(out, "Step {} — Action: {}", step.index, step.action);
        if let Some(assertion) = &step.assertion {
            let _ = write!(out, " | Expected: {assertion}");
        }
        out.push('\n');
    }
    out
}

/// Serialize a suite back into the canonical suite-file text. Parsing the
/// output reproduces the suite exactly.
pub fn serialize_suite(suite: &Suite) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "suite: {}", suite.name);
    let _ = writeln!(out, "manifest:");
    for (app, entry) in &suite.manifest {
        let _ = writeln!(out, "  {} {} {}", app, entry.pass_count, entry.fail_count);
    }
    for case in &suite.cases {
        let _ = writeln!(out, "case:");
        let _ = writeln!(out, "  id: {}", case.id);
        let _ = writeln!(out, "  app: {}", case.app_id);
        let _ = writeln!(out, "  title: {}", case.title);
        let _ = writeln!(out, "  ground_truth: {}", case.ground_truth);
        if let Some(step) = case.expected_failure_step {
            let _ = writeln!(out, "  expected_failure_step: {step}");
        }
        for step in &case.steps {
            let _ = writeln!(out, "  step {}:", step.index);
            let _ = writeln!(out, "    action: {}", step.action);
            if let Some(assertion) = &step.assertion {
                let _ = writeln!(out, "    expect: {assertion}");
            }
        }
    }
    out
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(raw: &'a str) -> Self {
        let lines = raw
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .collect();
        Parser { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).map(|&(n, l)| (n, l.trim()))
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn err(line: usize, message: impl Into<String>) -> SuiteError {
        SuiteError::Syntax {
            line,
            message: message.into(),
        }
    }

    fn parse(mut self) -> Result<Suite, SuiteError> {
        let (line, first) = self.next().ok_or(Self::err(1, "empty suite file"))?;
        let name = first
            .strip_prefix("suite:")
            .ok_or_else(|| Self::err(line, "expected `suite: <name>` header"))?
            .trim()
            .to_string();
        if name.is_empty() {
            return Err(Self::err(line, "suite name is empty"));
        }

        let (line, manifest_kw) = self
            .next()
            .ok_or(Self::err(line, "expected `manifest:` block"))?;
        if manifest_kw != "manifest:" {
            return Err(Self::err(line, "expected `manifest:` block"));
        }
        let mut manifest = BTreeMap::new();
        while let Some((line, text)) = self.peek() {
            if text.starts_with("case:") {
                break;
            }
            self.next();
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Self::err(
                    line,
                    "manifest entry must be `<app_id> <pass_count> <fail_count>`",
                ));
            }
            let pass_count: u32 = fields[1]
                .parse()
                .map_err(|_| Self::err(line, "pass count is not a number"))?;
            let fail_count: u32 = fields[2]
                .parse()
                .map_err(|_| Self::err(line, "fail count is not a number"))?;
            if manifest
                .insert(
                    fields[0].to_string(),
                    ManifestEntry {
                        pass_count,
                        fail_count,
                    },
                )
                .is_some()
            {
                return Err(Self::err(
                    line,
                    format!("duplicate manifest entry for {}", fields[0]),
                ));
            }
        }

        let mut cases = Vec::new();
        while let Some((line, text)) = self.next() {
            if text != "case:" {
                return Err(Self::err(line, "expected `case:` block"));
            }
            cases.push(self.parse_case(line)?);
        }

        let suite = Suite {
            name,
            manifest,
            cases,
        };
        check_suite(&suite)?;
        Ok(suite)
    }

    fn parse_case(&mut self, start_line: usize) -> Result<TestCase, SuiteError> {
        let mut id = None;
        let mut app_id = None;
        let mut title = None;
        let mut ground_truth = None;
        let mut expected_failure_step = None;
        let mut steps: Vec<Step> = Vec::new();
        let mut last_line = start_line;

        while let Some((line, text)) = self.peek() {
            if text == "case:" {
                break;
            }
            self.next();
            last_line = line;
            if let Some(rest) = text.strip_prefix("id:") {
                id = Some(rest.trim().to_string());
            } else if let Some(rest) = text.strip_prefix("app:") {
                app_id = Some(rest.trim().to_string());
            } else if let Some(rest) = text.strip_prefix("title:") {
                title = Some(rest.trim().to_string());
            } else if let Some(rest) = text.strip_prefix("ground_truth:") {
                ground_truth = Some(match rest.trim() {
                    "PASS" => Outcome::Pass,
                    "FAIL" => Outcome::Fail,
                    other => {
                        return Err(Self::err(
                            line,
                            format!("ground_truth must be PASS or FAIL, got `{other}`"),
                        ))
                    }
                });
            } else if let Some(rest) = text.strip_prefix("expected_failure_step:") {
                let step: u32 = rest
                    .trim()
                    .parse()
                    .map_err(|_| Self::err(line, "expected_failure_step is not a number"))?;
                expected_failure_step = Some(step);
            } else if let Some(rest) = text.strip_prefix("step") {
                let ordinal = rest
                    .trim()
                    .strip_suffix(':')
                    .ok_or_else(|| Self::err(line, "step header must end with `:`"))?;
                let index: u32 = ordinal
                    .trim()
                    .parse()
                    .map_err(|_| Self::err(line, "step ordinal is not a number"))?;
                let step = self.parse_step(index, line)?;
                steps.push(step);
            } else {
                return Err(Self::err(line, format!("unexpected line `{text}`")));
            }
        }

        let case = TestCase {
            id: id.ok_or(Self::err(last_line, "case is missing `id:`"))?,
            app_id: app_id.ok_or(Self::err(last_line, "case is missing `app:`"))?,
            title: title.ok_or(Self::err(last_line, "case is missing `title:`"))?,
            steps,
            ground_truth: ground_truth
                .ok_or(Self::err(last_line, "case is missing `ground_truth:`"))?,
            expected_failure_step,
        };
        let violations = validate_case(&case);
        if let Some(violation) = violations.into_iter().next() {
            return Err(SuiteError::InvalidCase {
                case_id: case.id,
                violation,
            });
        }
        Ok(case)
    }

    fn parse_step(&mut self, index: u32, header_line: usize) -> Result<Step, SuiteError> {
        let mut action = None;
        let mut assertion = None;
        while let Some((line, text)) = self.peek() {
            if let Some(rest) = text.strip_prefix("action:") {
                if action.is_some() {
                    return Err(Self::err(line, "step has more than one action"));
                }
                self.next();
                action = Some(rest.trim().to_string());
            } else if let Some(rest) = text.strip_prefix("expect:") {
                if assertion.is_some() {
                    return Err(Self::err(line, "step has more than one expect"));
                }
                self.next();
                assertion = Some(rest.trim().to_string());
            } else {
                break;
            }
        }
        Ok(Step {
            index,
            action: action.ok_or(Self::err(header_line, "step is missing `action:`"))?,
            assertion,
        })
    }
}

fn check_suite(suite: &Suite) -> Result<(), SuiteError> {
    let mut seen = BTreeSet::new();
    for case in &suite.cases {
        if !seen.insert(case.id.clone()) {
            return Err(SuiteError::DuplicateId(case.id.clone()));
        }
    }

    let mut actual: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for case in &suite.cases {
        let entry = actual.entry(case.app_id.as_str()).or_default();
        match case.ground_truth {
            Outcome::Pass => entry.0 += 1,
            Outcome::Fail => entry.1 += 1,
        }
    }
    let mut apps: BTreeSet<&str> = suite.manifest.keys().map(String::as_str).collect();
    apps.extend(actual.keys());
    for app in apps {
        let declared = suite.manifest.get(app).copied().unwrap_or_default();
        let (actual_pass, actual_fail) = actual.get(app).copied().unwrap_or_default();
        if declared.pass_count != actual_pass || declared.fail_count != actual_fail {
            return Err(SuiteError::ManifestMismatch {
                app_id: app.to_string(),
                declared_pass: declared.pass_count,
                declared_fail: declared.fail_count,
                actual_pass,
                actual_fail,
            });
        }
    }
    Ok(())
}
