//! Deterministic simulated web application.
//!
//! A session walks the fixture's state machine. Observations are a pure
//! function of (state, typed field values), so a fixed command sequence
//! yields an identical observation-hash sequence on every run and every
//! platform. The screenshot channel is a structured textual rendering of
//! the page rather than an image; agents and the LLM gateway treat both
//! kinds uniformly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::fixture::{Fixture, FixtureState, Trigger};
use super::{
    BBox, BrowserCommand, CommandKind, CommandResult, CommandTarget, Driver, DriverError,
    ElementDescriptor, ElementRole, PageObservation, ScreenshotArtifact, DEFAULT_DOM_TOKEN_BUDGET,
};
use crate::tokens::truncate_to_tokens;

pub struct SimulatorDriver {
    fixture: Arc<Fixture>,
    state: String,
    field_values: BTreeMap<String, String>,
    dom_token_budget: usize,
    open: bool,
}

impl SimulatorDriver {
    pub fn new(fixture: Arc<Fixture>) -> Self {
        let state = fixture.start_state.clone();
        SimulatorDriver {
            fixture,
            state,
            field_values: BTreeMap::new(),
            dom_token_budget: DEFAULT_DOM_TOKEN_BUDGET,
            open: true,
        }
    }

    pub fn with_dom_token_budget(mut self, budget: usize) -> Self {
        self.dom_token_budget = budget;
        self
    }

    pub fn current_state(&self) -> &str {
        &self.state
    }

    fn page(&self) -> &FixtureState {
        self.fixture
            .state(&self.state)
            .expect("current state always exists in the fixture")
    }

    fn ensure_open(&self) -> Result<(), DriverError> {
        if self.open {
            Ok(())
        } else {
            Err(DriverError::Disconnected("session closed".to_string()))
        }
    }

    fn descriptor(&self, index: usize) -> ElementDescriptor {
        let page = self.page();
        let element = &page.elements[index];
        let mut attributes = element.attributes.clone();
        match element.role {
            ElementRole::Checkbox => {
                let checked = self
                    .field_values
                    .get(&element.id)
                    .cloned()
                    .unwrap_or_else(|| "false".to_string());
                attributes.insert("checked".to_string(), checked);
            }
            ElementRole::Input | ElementRole::Select => {
                if !element.editable {
                    attributes.insert("readonly".to_string(), "true".to_string());
                }
                if let Some(value) = self.field_values.get(&element.id) {
                    attributes.insert("value".to_string(), value.clone());
                }
            }
            _ => {}
        }
        let width = (16 + 8 * element.text.chars().count() as u32).min(600);
        ElementDescriptor {
            mark_id: index as u32 + 1,
            role: element.role,
            text: element.text.clone(),
            attributes,
            bbox: BBox {
                x: 20,
                y: 40 * (index as u32 + 1),
                width,
                height: 28,
            },
        }
    }

    fn element_by_target(&self, target: &CommandTarget) -> Option<(usize, ElementDescriptor)> {
        let page = self.page();
        match target {
            CommandTarget::Mark(id) => {
                let index = (*id as usize).checked_sub(1)?;
                if index < page.elements.len() {
                    Some((index, self.descriptor(index)))
                } else {
                    None
                }
            }
            CommandTarget::Point { x, y } => (0..page.elements.len())
                .map(|i| (i, self.descriptor(i)))
                .find(|(_, d)| d.bbox.contains(*x, *y)),
        }
    }

    fn enter_state(&mut self, target: &str) {
        self.state = target.to_string();
        // New page load: pending field values belong to the old page.
        self.field_values.clear();
    }

    /// First transition for (state, trigger) whose condition matches the
    /// current field values.
    fn matching_transition(&self, trigger: &Trigger) -> Option<String> {
        self.fixture
            .transitions_from(&self.state, trigger)
            .find(|t| match &t.condition {
                None => true,
                Some((field, expected)) => {
                    self.field_values.get(field).map(String::as_str) == Some(expected.as_str())
                }
            })
            .map(|t| t.target.clone())
    }
}

impl Driver for SimulatorDriver {
    fn observe(&mut self) -> Result<PageObservation, DriverError> {
        self.ensure_open()?;
        let page = self.page();
        let descriptors: Vec<ElementDescriptor> = (0..page.elements.len())
            .map(|i| self.descriptor(i))
            .collect();

        let mut dom = String::new();
        for d in &descriptors {
            let _ = writeln!(dom, "[{}] {}", d.mark_id, d.pseudo_html());
        }
        let dom_snapshot = truncate_to_tokens(dom.trim_end(), self.dom_token_budget);

        let mut render = String::new();
        let _ = writeln!(render, "PAGE: {}", page.title);
        let _ = writeln!(render, "URL: {}", page.url);
        if page.overlay {
            let _ = writeln!(render, "OVERLAY PAGE");
        }
        for line in &page.text_lines {
            let _ = writeln!(render, "{line}");
        }
        let _ = writeln!(render, "ELEMENTS:");
        for d in &descriptors {
            let _ = writeln!(render, "{}", d.pseudo_html());
        }

        Ok(PageObservation {
            url: page.url.clone(),
            title: page.title.clone(),
            dom_snapshot,
            elements: descriptors,
            screenshot: ScreenshotArtifact::TextRender(render),
        })
    }

    fn execute(&mut self, cmd: &BrowserCommand) -> Result<CommandResult, DriverError> {
        self.ensure_open()?;
        cmd.validate()?;

        match cmd.kind {
            CommandKind::Noop => Ok(CommandResult::ok("no-op")),
            CommandKind::Scroll => Ok(CommandResult::ok("scrolled")),
            CommandKind::Navigate => {
                let url = cmd.value.as_deref().unwrap_or_default();
                match self.fixture.state_by_url(url) {
                    Some(state) => {
                        let name = state.name.clone();
                        self.enter_state(&name);
                        Ok(CommandResult::ok(format!("navigated to {url}")))
                    }
                    None => Ok(CommandResult::rejected(format!("unknown url {url}"))),
                }
            }
            CommandKind::PressEnter => {
                if let Some(target) = self.matching_transition(&Trigger::PressEnter) {
                    self.enter_state(&target);
                    Ok(CommandResult::ok(format!(
                        "enter pressed, page is now {target}"
                    )))
                } else {
                    Ok(CommandResult::ok("enter pressed, nothing happened"))
                }
            }
            CommandKind::Click => {
                let target = cmd.target.as_ref().expect("validated");
                let Some((index, descriptor)) = self.element_by_target(target) else {
                    return Ok(CommandResult::target_not_found(format!(
                        "no element at {target}"
                    )));
                };
                let element_id = self.page().elements[index].id.clone();
                if descriptor.role == ElementRole::Checkbox {
                    let current = self
                        .field_values
                        .get(&element_id)
                        .map(String::as_str)
                        .unwrap_or("false");
                    let toggled = if current == "true" { "false" } else { "true" };
                    self.field_values
                        .insert(element_id.clone(), toggled.to_string());
                    return Ok(CommandResult::ok(format!(
                        "checkbox {element_id} set to {toggled}"
                    )));
                }
                if let Some(target_state) =
                    self.matching_transition(&Trigger::Click(element_id.clone()))
                {
                    self.enter_state(&target_state);
                    Ok(CommandResult::ok(format!(
                        "clicked {element_id}, page is now {target_state}"
                    )))
                } else {
                    Ok(CommandResult::ok(format!(
                        "clicked {element_id}, nothing happened"
                    )))
                }
            }
            CommandKind::Type | CommandKind::Select => {
                let target = cmd.target.as_ref().expect("validated");
                let value = cmd.value.clone().expect("validated");
                let Some((index, _)) = self.element_by_target(target) else {
                    return Ok(CommandResult::target_not_found(format!(
                        "no element at {target}"
                    )));
                };
                let element = &self.page().elements[index];
                let element_id = element.id.clone();
                let role_ok = match cmd.kind {
                    CommandKind::Type => matches!(element.role, ElementRole::Input),
                    _ => matches!(element.role, ElementRole::Select),
                };
                if !role_ok {
                    return Ok(CommandResult::rejected(format!(
                        "element {element_id} does not accept {}",
                        cmd.kind
                    )));
                }
                if !element.editable {
                    return Ok(CommandResult::rejected(format!(
                        "element {element_id} is read-only"
                    )));
                }
                self.field_values.insert(element_id.clone(), value.clone());
                let trigger = match cmd.kind {
                    CommandKind::Type => Trigger::Type(element_id.clone()),
                    _ => Trigger::Select(element_id.clone()),
                };
                if let Some(target_state) = self.matching_transition(&trigger) {
                    self.enter_state(&target_state);
                    Ok(CommandResult::ok(format!(
                        "entered value into {element_id}, page is now {target_state}"
                    )))
                } else {
                    Ok(CommandResult::ok(format!(
                        "entered value into {element_id}"
                    )))
                }
            }
        }
    }

    fn close(&mut self) {
        self.open = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::FixtureRegistry;

    const FIXTURE: &str = r#"
fixture: mini-sim
start: home

state: home
  title: Home
  url: https://mini.example/
  text: Welcome to mini.
  element: login_link link "Login"
  element: search input "Search" editable
  element: serial input "Serial number"
  element: remember checkbox "Remember me" editable

state: login
  title: Login
  url: https://mini.example/login
  element: user input "User" editable

state: results
  title: Results
  url: https://mini.example/search
  element: hit link "First hit"

transition: home click login_link => login
transition: home press_enter => results if search="sofa"
"#;

    fn session() -> SimulatorDriver {
        let mut registry = FixtureRegistry::new();
        registry.register(Fixture::parse(FIXTURE).unwrap());
        SimulatorDriver::new(registry.get("mini-sim").unwrap())
    }

    #[test]
    fn initial_observation_lists_elements_with_dense_marks() {
        let mut driver = session();
        let obs = driver.observe().unwrap();
        assert_eq!(obs.title, "Home");
        let marks: Vec<u32> = obs.elements.iter().map(|e| e.mark_id).collect();
        assert_eq!(marks, vec![1, 2, 3, 4]);
        assert!(obs
            .elements
            .iter()
            .any(|e| e.text == "Login" && e.role == ElementRole::Link));
        assert!(obs.mark_tokens_resolve());
    }

    #[test]
    fn repeated_observe_is_identical() {
        let mut driver = session();
        let first = driver.observe().unwrap();
        let second = driver.observe().unwrap();
        assert_eq!(first, second);
        assert_eq!(first.state_hash(), second.state_hash());
    }

    #[test]
    fn click_follows_transition() {
        let mut driver = session();
        let result = driver
            .execute(&BrowserCommand::click(CommandTarget::Mark(1)))
            .unwrap();
        assert_eq!(result.status, CommandStatus::Ok);
        let obs = driver.observe().unwrap();
        assert_eq!(obs.title, "Login");
    }

    use crate::browser::CommandStatus;

    #[test]
    fn click_on_missing_mark_leaves_state_unchanged() {
        let mut driver = session();
        let before = driver.observe().unwrap().state_hash();
        let result = driver
            .execute(&BrowserCommand::click(CommandTarget::Mark(9)))
            .unwrap();
        assert_eq!(result.status, CommandStatus::TargetNotFound);
        assert_eq!(driver.observe().unwrap().state_hash(), before);
    }

    #[test]
    fn type_into_read_only_is_rejected_without_mutation() {
        let mut driver = session();
        let before = driver.observe().unwrap().state_hash();
        let result = driver
            .execute(&BrowserCommand::type_text(CommandTarget::Mark(3), "abc"))
            .unwrap();
        assert_eq!(result.status, CommandStatus::Rejected);
        assert!(result.note.contains("read-only"));
        assert_eq!(driver.observe().unwrap().state_hash(), before);
    }

    #[test]
    fn typed_value_shows_up_and_drives_conditional_transition() {
        let mut driver = session();
        driver
            .execute(&BrowserCommand::type_text(CommandTarget::Mark(2), "sofa"))
            .unwrap();
        let obs = driver.observe().unwrap();
        let search = &obs.elements[1];
        assert_eq!(search.attributes.get("value").unwrap(), "sofa");
        let result = driver.execute(&BrowserCommand::press_enter()).unwrap();
        assert_eq!(result.status, CommandStatus::Ok);
        assert_eq!(driver.observe().unwrap().title, "Results");
    }

    #[test]
    fn press_enter_without_match_is_ok_noop() {
        let mut driver = session();
        let before = driver.observe().unwrap().state_hash();
        let result = driver.execute(&BrowserCommand::press_enter()).unwrap();
        assert_eq!(result.status, CommandStatus::Ok);
        assert_eq!(driver.observe().unwrap().state_hash(), before);
    }

    #[test]
    fn checkbox_click_toggles() {
        let mut driver = session();
        driver
            .execute(&BrowserCommand::click(CommandTarget::Mark(4)))
            .unwrap();
        let obs = driver.observe().unwrap();
        assert_eq!(obs.elements[3].attributes.get("checked").unwrap(), "true");
    }

    #[test]
    fn point_target_resolves_by_bbox() {
        let mut driver = session();
        let obs = driver.observe().unwrap();
        let login_bbox = obs.elements[0].bbox;
        let result = driver
            .execute(&BrowserCommand::click(CommandTarget::Point {
                x: login_bbox.x + 1,
                y: login_bbox.y + 1,
            }))
            .unwrap();
        assert_eq!(result.status, CommandStatus::Ok);
        assert_eq!(driver.observe().unwrap().title, "Login");
    }

    #[test]
    fn closed_session_is_disconnected() {
        let mut driver = session();
        driver.close();
        assert!(matches!(
            driver.observe().unwrap_err(),
            DriverError::Disconnected(_)
        ));
    }

    #[test]
    fn navigate_jumps_to_known_url() {
        let mut driver = session();
        let result = driver
            .execute(&BrowserCommand::navigate("https://mini.example/login"))
            .unwrap();
        assert_eq!(result.status, CommandStatus::Ok);
        assert_eq!(driver.observe().unwrap().title, "Login");
        let result = driver
            .execute(&BrowserCommand::navigate("https://elsewhere.example/"))
            .unwrap();
        assert_eq!(result.status, CommandStatus::Rejected);
    }
}
