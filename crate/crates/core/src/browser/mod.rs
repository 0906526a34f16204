//! Browser-driver abstraction and page observations.
//!
//! Two drivers implement the same [`Driver`] trait: a deterministic
//! simulated web application backed by fixture files ([`sim`]), and a thin
//! remote client speaking the W3C WebDriver protocol ([`remote`], behind
//! the `remote-driver` feature). Agents are written against the trait and
//! cannot tell the two apart.

pub mod fixture;
pub mod marks;
#[cfg(feature = "remote-driver")]
pub mod remote;
pub mod sim;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixture::{Fixture, FixtureError};
pub use marks::{annotate_marks, MarkedObservation};
pub use sim::SimulatorDriver;

/// Default whitespace-token budget for the simplified-DOM snapshot. Raw
/// DOMs routinely blow past any sensible prompt size, so observations are
/// truncated before they ever reach a prompt.
pub const DEFAULT_DOM_TOKEN_BUDGET: usize = 4000;

/// Element kind, drawn from a closed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRole {
    Link,
    Button,
    Input,
    Select,
    Checkbox,
    Text,
    Other,
}

impl ElementRole {
    /// Pseudo-HTML tag used in snapshots and multichoice listings.
    pub fn tag(self) -> &'static str {
        match self {
            ElementRole::Link => "a",
            ElementRole::Button => "button",
            ElementRole::Input => "input",
            ElementRole::Select => "select",
            ElementRole::Checkbox => "checkbox",
            ElementRole::Text => "span",
            ElementRole::Other => "div",
        }
    }
}

/// Bounding box in page pixels. Synthetic in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.x + self.width && py >= self.y && py < self.y + self.height
    }
}

/// One interactive (or labelled) element of a page observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDescriptor {
    /// Small integer label, unique within one observation.
    pub mark_id: u32,
    pub role: ElementRole,
    pub text: String,
    pub attributes: BTreeMap<String, String>,
    pub bbox: BBox,
}

impl ElementDescriptor {
    /// Single-line pseudo-HTML rendering, e.g. `<a>Login</a>`.
    pub fn pseudo_html(&self) -> String {
        let mut attrs = String::new();
        for (k, v) in &self.attributes {
            attrs.push_str(&format!(" {k}=\"{v}\""));
        }
        format!(
            "<{tag}{attrs}>{text}</{tag}>",
            tag = self.role.tag(),
            text = self.text
        )
    }
}

/// Screenshot channel of an observation: real drivers capture an image,
/// the simulator produces a structured textual rendering of the page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScreenshotArtifact {
    Image(#[serde(with = "base64_bytes")] Vec<u8>),
    TextRender(String),
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        STANDARD.encode(bytes).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(de)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

/// The agent's view of the application at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageObservation {
    pub url: String,
    pub title: String,
    /// Simplified DOM: one pseudo-HTML line per element, prefixed with its
    /// `[n]` mark token, truncated to a token budget.
    pub dom_snapshot: String,
    pub elements: Vec<ElementDescriptor>,
    pub screenshot: ScreenshotArtifact,
}

impl PageObservation {
    /// Stable content hash of the observation, used for determinism checks
    /// and trace records.
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.url.as_bytes());
        hasher.update([0]);
        hasher.update(self.title.as_bytes());
        hasher.update([0]);
        hasher.update(self.dom_snapshot.as_bytes());
        hasher.update([0]);
        for element in &self.elements {
            hasher.update(serde_json::to_vec(element).expect("element serializes"));
            hasher.update([0]);
        }
        match &self.screenshot {
            ScreenshotArtifact::Image(bytes) => hasher.update(bytes),
            ScreenshotArtifact::TextRender(text) => hasher.update(text.as_bytes()),
        }
        hex::encode(hasher.finalize())
    }

    /// Check that every `[n]` mark token in the DOM snapshot refers to an
    /// element present in `elements`.
    pub fn mark_tokens_resolve(&self) -> bool {
        let known: std::collections::BTreeSet<u32> =
            self.elements.iter().map(|e| e.mark_id).collect();
        for line in self.dom_snapshot.lines() {
            let trimmed = line.trim_start();
            if let Some(rest) = trimmed.strip_prefix('[') {
                if let Some(end) = rest.find(']') {
                    if let Ok(id) = rest[..end].parse::<u32>() {
                        if !known.contains(&id) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Target of a browser command: a Set-of-Marks label or raw coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandTarget {
    Mark(u32),
    Point { x: u32, y: u32 },
}

impl fmt::Display for CommandTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandTarget::Mark(id) => write!(f, "mark {id}"),
            CommandTarget::Point { x, y } => write!(f, "point ({x}, {y})"),
        }
    }
}

/// Browser-level command kinds. Agent-level decisions such as TERMINATE or
/// NONE never reach the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandKind {
    Navigate,
    Click,
    Type,
    Select,
    PressEnter,
    Scroll,
    Noop,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CommandKind::Navigate => "NAVIGATE",
            CommandKind::Click => "CLICK",
            CommandKind::Type => "TYPE",
            CommandKind::Select => "SELECT",
            CommandKind::PressEnter => "PRESS_ENTER",
            CommandKind::Scroll => "SCROLL",
            CommandKind::Noop => "NOOP",
        };
        write!(f, "{name}")
    }
}

/// A concrete command for the driver.
///
/// Invariants: CLICK/TYPE/SELECT require a target, NAVIGATE requires a
/// value, PRESS_ENTER/SCROLL/NOOP require neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserCommand {
    pub kind: CommandKind,
    pub target: Option<CommandTarget>,
    pub value: Option<String>,
}

impl BrowserCommand {
    pub fn navigate(url: impl Into<String>) -> Self {
        BrowserCommand {
            kind: CommandKind::Navigate,
            target: None,
            value: Some(url.into()),
        }
    }

    pub fn click(target: CommandTarget) -> Self {
        BrowserCommand {
            kind: CommandKind::Click,
            target: Some(target),
            value: None,
        }
    }

    pub fn type_text(target: CommandTarget, value: impl Into<String>) -> Self {
        BrowserCommand {
            kind: CommandKind::Type,
            target: Some(target),
            value: Some(value.into()),
        }
    }

    pub fn select(target: CommandTarget, value: impl Into<String>) -> Self {
        BrowserCommand {
            kind: CommandKind::Select,
            target: Some(target),
            value: Some(value.into()),
        }
    }

    pub fn press_enter() -> Self {
        BrowserCommand {
            kind: CommandKind::PressEnter,
            target: None,
            value: None,
        }
    }

    pub fn scroll() -> Self {
        BrowserCommand {
            kind: CommandKind::Scroll,
            target: None,
            value: None,
        }
    }

    pub fn noop() -> Self {
        BrowserCommand {
            kind: CommandKind::Noop,
            target: None,
            value: None,
        }
    }

    /// Validate the kind/target/value invariants.
    pub fn validate(&self) -> Result<(), DriverError> {
        let need_target = matches!(
            self.kind,
            CommandKind::Click | CommandKind::Type | CommandKind::Select
        );
        if need_target && self.target.is_none() {
            return Err(DriverError::InvalidCommand(format!(
                "{} requires a target",
                self.kind
            )));
        }
        if matches!(
            self.kind,
            CommandKind::Type | CommandKind::Select | CommandKind::Navigate
        ) && self.value.as_deref().is_none_or(str::is_empty)
        {
            return Err(DriverError::InvalidCommand(format!(
                "{} requires a value",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut out = self.kind.to_string();
        if let Some(target) = &self.target {
            out.push_str(&format!(" on {target}"));
        }
        if let Some(value) = &self.value {
            out.push_str(&format!(" with value \"{value}\""));
        }
        out
    }
}

/// Result status of a command. `TargetNotFound` and `Rejected` are results,
/// not errors: the driver stays usable and the page state is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandStatus {
    Ok,
    TargetNotFound,
    Rejected,
}

impl fmt::Display for CommandStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CommandStatus::Ok => "OK",
            CommandStatus::TargetNotFound => "TARGET_NOT_FOUND",
            CommandStatus::Rejected => "REJECTED",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandResult {
    pub status: CommandStatus,
    pub note: String,
}

impl CommandResult {
    pub fn ok(note: impl Into<String>) -> Self {
        CommandResult {
            status: CommandStatus::Ok,
            note: note.into(),
        }
    }

    pub fn target_not_found(note: impl Into<String>) -> Self {
        CommandResult {
            status: CommandStatus::TargetNotFound,
            note: note.into(),
        }
    }

    pub fn rejected(note: impl Into<String>) -> Self {
        CommandResult {
            status: CommandStatus::Rejected,
            note: note.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("driver disconnected: {0}")]
    Disconnected(String),
    #[error("page not loaded: {0}")]
    PageNotLoaded(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("unknown application id `{0}`")]
    UnknownApp(String),
    #[error("fixture error: {0}")]
    Fixture(#[from] FixtureError),
    #[error("reset hook failed: {0}")]
    ResetHook(String),
    #[error("remote driver error: {0}")]
    Remote(String),
}

/// A single-owner browser session. Not safe for concurrent use; distinct
/// sessions are independent.
pub trait Driver {
    /// Capture the current page state. Repeated calls without an
    /// intervening `execute` observe the same state.
    fn observe(&mut self) -> Result<PageObservation, DriverError>;

    /// Execute one command. Non-OK statuses leave the page state unchanged.
    fn execute(&mut self, cmd: &BrowserCommand) -> Result<CommandResult, DriverError>;

    /// Close the session; subsequent calls fail with `Disconnected`.
    fn close(&mut self);
}

/// Configuration for the real-browser driver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealDriverConfig {
    /// WebDriver endpoint, e.g. `http://localhost:4444`.
    pub webdriver_url: String,
    /// Application base URL each session starts from.
    pub base_url: String,
    /// Optional hook invoked on reset to restore pristine application
    /// state (GET request; non-2xx is a reset failure).
    pub reset_hook_url: Option<String>,
    /// Navigation timeout in milliseconds.
    pub navigation_timeout_ms: u64,
}

/// Session factory: either a registry of simulator fixtures or a real
/// driver configuration.
pub enum Environment {
    Simulator(FixtureRegistry),
    #[allow(dead_code)]
    Real(RealDriverConfig),
}

impl Environment {
    /// Open a fresh session for `app_id`, reset to its initial state.
    pub fn reset(&self, app_id: &str) -> Result<Box<dyn Driver>, DriverError> {
        match self {
            Environment::Simulator(registry) => {
                let fixture = registry
                    .get(app_id)
                    .ok_or_else(|| DriverError::UnknownApp(app_id.to_string()))?;
                Ok(Box::new(SimulatorDriver::new(fixture)))
            }
            #[cfg(feature = "remote-driver")]
            Environment::Real(config) => Ok(Box::new(remote::RemoteDriver::connect(config)?)),
            #[cfg(not(feature = "remote-driver"))]
            Environment::Real(_) => Err(DriverError::Remote(
                "built without the remote-driver feature".to_string(),
            )),
        }
    }
}

/// Named collection of simulator fixtures, keyed by application id.
#[derive(Default)]
pub struct FixtureRegistry {
    fixtures: BTreeMap<String, Arc<Fixture>>,
}

impl FixtureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, fixture: Fixture) {
        self.fixtures
            .insert(fixture.app_id.clone(), Arc::new(fixture));
    }

    pub fn get(&self, app_id: &str) -> Option<Arc<Fixture>> {
        self.fixtures.get(app_id).cloned()
    }

    pub fn app_ids(&self) -> Vec<String> {
        self.fixtures.keys().cloned().collect()
    }
}
