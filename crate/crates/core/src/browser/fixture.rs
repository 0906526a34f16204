//! Declarative fixtures for the simulated web application.
//!
//! A fixture is a finite state machine: named page states, each with a
//! title, url, prose text and an ordered element list, plus a transition
//! table keyed by (state, trigger element, command kind) with an optional
//! field-value condition. The format is line-oriented structured text,
//! documented with examples in `docs/fixture-format.md`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ElementRole;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FixtureError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("fixture `{0}`: {1}")]
    Invalid(String, String),
}

/// One element definition inside a fixture state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureElement {
    pub id: String,
    pub role: ElementRole,
    pub text: String,
    pub editable: bool,
    pub attributes: BTreeMap<String, String>,
}

/// One page state of the simulated application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureState {
    pub name: String,
    pub title: String,
    pub url: String,
    pub overlay: bool,
    pub text_lines: Vec<String>,
    pub elements: Vec<FixtureElement>,
}

impl FixtureState {
    pub fn element(&self, id: &str) -> Option<&FixtureElement> {
        self.elements.iter().find(|e| e.id == id)
    }
}

/// What fires a transition out of a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    Click(String),
    Type(String),
    Select(String),
    PressEnter,
}

/// One row of the transition table. `condition` names a field element and
/// the exact value it must currently hold for the row to match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: String,
    pub trigger: Trigger,
    pub target: String,
    pub condition: Option<(String, String)>,
}

/// A parsed fixture: the full state machine for one simulated application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub app_id: String,
    pub start_state: String,
    pub states: BTreeMap<String, FixtureState>,
    pub transitions: Vec<Transition>,
}

impl Fixture {
    pub fn parse(raw: &str) -> Result<Fixture, FixtureError> {
        parse_fixture(raw)
    }

    pub fn state(&self, name: &str) -> Option<&FixtureState> {
        self.states.get(name)
    }

    pub fn state_by_url(&self, url: &str) -> Option<&FixtureState> {
        self.states.values().find(|s| s.url == url)
    }

    /// Transitions out of `state` matching `trigger`, in declaration order.
    pub fn transitions_from<'a>(
        &'a self,
        state: &'a str,
        trigger: &'a Trigger,
    ) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions
            .iter()
            .filter(move |t| t.state == state && &t.trigger == trigger)
    }
}

fn err(line: usize, message: impl Into<String>) -> FixtureError {
    FixtureError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_role(token: &str, line: usize) -> Result<ElementRole, FixtureError> {
    Ok(match token {
        "link" => ElementRole::Link,
        "button" => ElementRole::Button,
        "input" => ElementRole::Input,
        "select" => ElementRole::Select,
        "checkbox" => ElementRole::Checkbox,
        "text" => ElementRole::Text,
        "other" => ElementRole::Other,
        other => return Err(err(line, format!("unknown element role `{other}`"))),
    })
}

fn parse_quoted(rest: &str, line: usize) -> Result<(String, &str), FixtureError> {
    let rest = rest.trim_start();
    let inner = rest
        .strip_prefix('"')
        .ok_or_else(|| err(line, "expected a double-quoted string"))?;
    let end = inner
        .find('"')
        .ok_or_else(|| err(line, "unterminated double-quoted string"))?;
    Ok((inner[..end].to_string(), &inner[end + 1..]))
}

fn parse_element(rest: &str, line: usize) -> Result<FixtureElement, FixtureError> {
    let rest = rest.trim();
    let mut parts = rest.splitn(3, char::is_whitespace);
    let id = parts
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| err(line, "element needs `<id> <role> \"<text>\"`"))?
        .to_string();
    let role_token = parts
        .next()
        .ok_or_else(|| err(line, "element is missing its role"))?;
    let role = parse_role(role_token, line)?;
    let tail = parts.next().unwrap_or("");
    let (text, mut flags) = parse_quoted(tail, line)?;

    let mut editable = false;
    let mut attributes = BTreeMap::new();
    loop {
        flags = flags.trim_start();
        if flags.is_empty() {
            break;
        }
        if let Some(rest) = flags.strip_prefix("editable") {
            editable = true;
            flags = rest;
            continue;
        }
        let eq = flags
            .find('=')
            .ok_or_else(|| err(line, format!("unrecognised element flag `{flags}`")))?;
        let key = flags[..eq].trim().to_string();
        let (value, rest) = parse_quoted(&flags[eq + 1..], line)?;
        attributes.insert(key, value);
        flags = rest;
    }
    Ok(FixtureElement {
        id,
        role,
        text,
        editable,
        attributes,
    })
}

fn parse_transition(rest: &str, line: usize) -> Result<Transition, FixtureError> {
    let (lhs, rhs) = rest
        .split_once("=>")
        .ok_or_else(|| err(line, "transition needs `... => <target-state>`"))?;
    let lhs_tokens: Vec<&str> = lhs.split_whitespace().collect();
    let (state, trigger) = match lhs_tokens.as_slice() {
        [state, "click", element] => (state.to_string(), Trigger::Click(element.to_string())),
        [state, "type", element] => (state.to_string(), Trigger::Type(element.to_string())),
        [state, "select", element] => (state.to_string(), Trigger::Select(element.to_string())),
        [state, "press_enter"] => (state.to_string(), Trigger::PressEnter),
        _ => {
            return Err(err(
                line,
                "transition trigger must be `<state> click|type|select <element>` or `<state> press_enter`",
            ))
        }
    };

    let rhs = rhs.trim();
    let (target, condition) = match rhs.split_once(" if ") {
        Some((target, cond)) => {
            let (field, value) = cond
                .split_once('=')
                .ok_or_else(|| err(line, "condition must be `if <element>=\"<value>\"`"))?;
            let (value, leftover) = parse_quoted(value, line)?;
            if !leftover.trim().is_empty() {
                return Err(err(line, "trailing text after condition"));
            }
            (
                target.trim().to_string(),
                Some((field.trim().to_string(), value)),
            )
        }
        None => (rhs.to_string(), None),
    };
    if target.is_empty() {
        return Err(err(line, "transition target state is empty"));
    }
    Ok(Transition {
        state,
        trigger,
        target,
        condition,
    })
}

fn parse_fixture(raw: &str) -> Result<Fixture, FixtureError> {
    let mut app_id = None;
    let mut start_state = None;
    let mut states: BTreeMap<String, FixtureState> = BTreeMap::new();
    let mut state_order: Vec<String> = Vec::new();
    let mut transitions = Vec::new();
    let mut current: Option<FixtureState> = None;

    let commit = |state: Option<FixtureState>,
                  states: &mut BTreeMap<String, FixtureState>,
                  line: usize|
     -> Result<(), FixtureError> {
        if let Some(state) = state {
            if states.insert(state.name.clone(), state.clone()).is_some() {
                return Err(err(line, format!("duplicate state `{}`", state.name)));
            }
        }
        Ok(())
    };

    for (i, raw_line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let text = raw_line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("fixture:") {
            app_id = Some(rest.trim().to_string());
        } else if let Some(rest) = text.strip_prefix("start:") {
            start_state = Some(rest.trim().to_string());
        } else if let Some(rest) = text.strip_prefix("state:") {
            commit(current.take(), &mut states, line_no)?;
            let name = rest.trim().to_string();
            if name.is_empty() {
                return Err(err(line_no, "state name is empty"));
            }
            state_order.push(name.clone());
            current = Some(FixtureState {
                name,
                title: String::new(),
                url: String::new(),
                overlay: false,
                text_lines: Vec::new(),
                elements: Vec::new(),
            });
        } else if let Some(rest) = text.strip_prefix("title:") {
            let state = current
                .as_mut()
                .ok_or_else(|| err(line_no, "`title:` outside a state block"))?;
            state.title = rest.trim().to_string();
        } else if let Some(rest) = text.strip_prefix("url:") {
            let state = current
                .as_mut()
                .ok_or_else(|| err(line_no, "`url:` outside a state block"))?;
            state.url = rest.trim().to_string();
        } else if let Some(rest) = text.strip_prefix("overlay:") {
            let state = current
                .as_mut()
                .ok_or_else(|| err(line_no, "`overlay:` outside a state block"))?;
            state.overlay = rest.trim() == "true";
        } else if let Some(rest) = text.strip_prefix("text:") {
            let state = current
                .as_mut()
                .ok_or_else(|| err(line_no, "`text:` outside a state block"))?;
            state.text_lines.push(rest.trim().to_string());
        } else if let Some(rest) = text.strip_prefix("element:") {
            let state = current
                .as_mut()
                .ok_or_else(|| err(line_no, "`element:` outside a state block"))?;
            let element = parse_element(rest, line_no)?;
            if state.elements.iter().any(|e| e.id == element.id) {
                return Err(err(
                    line_no,
                    format!(
                        "duplicate element id `{}` in state `{}`",
                        element.id, state.name
                    ),
                ));
            }
            state.elements.push(element);
        } else if let Some(rest) = text.strip_prefix("transition:") {
            commit(current.take(), &mut states, line_no)?;
            transitions.push(parse_transition(rest, line_no)?);
        } else {
            return Err(err(line_no, format!("unexpected line `{text}`")));
        }
    }
    commit(current.take(), &mut states, raw.lines().count())?;

    let app_id = app_id.ok_or_else(|| err(1, "missing `fixture:` header"))?;
    let start_state = start_state.ok_or_else(|| err(1, "missing `start:` line"))?;

    let fixture = Fixture {
        app_id,
        start_state,
        states,
        transitions,
    };
    validate_fixture(&fixture)?;
    Ok(fixture)
}

fn validate_fixture(fixture: &Fixture) -> Result<(), FixtureError> {
    let invalid = |msg: String| FixtureError::Invalid(fixture.app_id.clone(), msg);
    if !fixture.states.contains_key(&fixture.start_state) {
        return Err(invalid(format!(
            "start state `{}` is not defined",
            fixture.start_state
        )));
    }
    for transition in &fixture.transitions {
        let state = fixture.states.get(&transition.state).ok_or_else(|| {
            invalid(format!(
                "transition from unknown state `{}`",
                transition.state
            ))
        })?;
        if !fixture.states.contains_key(&transition.target) {
            return Err(invalid(format!(
                "transition to unknown state `{}`",
                transition.target
            )));
        }
        let trigger_element = match &transition.trigger {
            Trigger::Click(id) | Trigger::Type(id) | Trigger::Select(id) => Some(id),
            Trigger::PressEnter => None,
        };
        if let Some(id) = trigger_element {
            if state.element(id).is_none() {
                return Err(invalid(format!(
                    "transition trigger element `{id}` is not in state `{}`",
                    transition.state
                )));
            }
        }
        if let Some((field, _)) = &transition.condition {
            if state.element(field).is_none() {
                return Err(invalid(format!(
                    "transition condition field `{field}` is not in state `{}`",
                    transition.state
                )));
            }
        }
    }
    for state in fixture.states.values() {
        if state.url.is_empty() {
            return Err(invalid(format!("state `{}` has no url", state.name)));
        }
        if state.title.is_empty() {
            return Err(invalid(format!("state `{}` has no title", state.name)));
        }
    }
    Ok(())
}
