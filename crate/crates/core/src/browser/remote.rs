//! Thin real-browser driver speaking the W3C WebDriver wire protocol.
//!
//! This client covers exactly the surface the agents need: session
//! lifecycle, navigation, element discovery, click/type, and screenshots.
//! It is never exercised by the deterministic test suite; enable the
//! `remote-driver` feature and point it at a running WebDriver endpoint
//! (geckodriver, chromedriver) to drive a real browser.

use std::collections::BTreeMap;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use super::{
    BBox, BrowserCommand, CommandKind, CommandResult, CommandTarget, Driver, DriverError,
    ElementDescriptor, ElementRole, PageObservation, RealDriverConfig, ScreenshotArtifact,
    DEFAULT_DOM_TOKEN_BUDGET,
};
use crate::tokens::truncate_to_tokens;

const INTERACTIVE_SELECTOR: &str = "a, button, input, select, textarea, [role='button']";
const ELEMENT_KEY: &str = "element-6066-11e4-a52e-4f735466cecf";

pub struct RemoteDriver {
    http: reqwest::blocking::Client,
    endpoint: String,
    session_id: String,
    config: RealDriverConfig,
    /// WebDriver element ids for the marks of the last observation.
    element_handles: Vec<String>,
    open: bool,
}

impl RemoteDriver {
    pub fn connect(config: &RealDriverConfig) -> Result<Self, DriverError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(
                config.navigation_timeout_ms.max(1000),
            ))
            .build()
            .map_err(|e| DriverError::Remote(e.to_string()))?;

        if let Some(hook) = &config.reset_hook_url {
            let response = http
                .get(hook)
                .send()
                .map_err(|e| DriverError::ResetHook(e.to_string()))?;
            if !response.status().is_success() {
                return Err(DriverError::ResetHook(format!(
                    "reset hook returned {}",
                    response.status()
                )));
            }
        }

        let endpoint = config.webdriver_url.trim_end_matches('/').to_string();
        let body = json!({
            "capabilities": { "alwaysMatch": { } }
        });
        let value: Value = http
            .post(format!("{endpoint}/session"))
            .json(&body)
            .send()
            .map_err(|e| DriverError::Remote(e.to_string()))?
            .json()
            .map_err(|e| DriverError::Remote(e.to_string()))?;
        let session_id = value["value"]["sessionId"]
            .as_str()
            .ok_or_else(|| DriverError::Remote("no sessionId in response".to_string()))?
            .to_string();

        let driver = RemoteDriver {
            http,
            endpoint,
            session_id,
            config: config.clone(),
            element_handles: Vec::new(),
            open: true,
        };
        driver.command(
            "POST",
            "url",
            Some(json!({ "url": driver.config.base_url })),
        )?;
        Ok(driver)
    }

    fn ensure_open(&self) -> Result<(), DriverError> {
        if self.open {
            Ok(())
        } else {
            Err(DriverError::Disconnected("session closed".to_string()))
        }
    }

    fn command(&self, method: &str, path: &str, body: Option<Value>) -> Result<Value, DriverError> {
        let url = if path.is_empty() {
            format!("{}/session/{}", self.endpoint, self.session_id)
        } else {
            format!("{}/session/{}/{}", self.endpoint, self.session_id, path)
        };
        let request = match method {
            "POST" => self.http.post(&url).json(&body.unwrap_or(json!({}))),
            "DELETE" => self.http.delete(&url),
            _ => self.http.get(&url),
        };
        let response = request
            .send()
            .map_err(|e| DriverError::Remote(e.to_string()))?;
        let status = response.status();
        let value: Value = response
            .json()
            .map_err(|e| DriverError::Remote(e.to_string()))?;
        if !status.is_success() {
            return Err(DriverError::Remote(format!(
                "{path}: {}",
                value["value"]["message"]
                    .as_str()
                    .unwrap_or("request failed")
            )));
        }
        Ok(value["value"].clone())
    }

    fn element_command(
        &self,
        handle: &str,
        method: &str,
        tail: &str,
        body: Option<Value>,
    ) -> Result<Value, DriverError> {
        let path = if tail.is_empty() {
            format!("element/{handle}")
        } else {
            format!("element/{handle}/{tail}")
        };
        self.command(method, &path, body)
    }

    fn role_for(tag: &str, type_attr: Option<&str>) -> ElementRole {
        match tag {
            "a" => ElementRole::Link,
            "button" => ElementRole::Button,
            "select" => ElementRole::Select,
            "input" => match type_attr {
                Some("checkbox") => ElementRole::Checkbox,
                Some("button") | Some("submit") => ElementRole::Button,
                _ => ElementRole::Input,
            },
            "textarea" => ElementRole::Input,
            _ => ElementRole::Other,
        }
    }

    fn resolve_handle(&self, target: &CommandTarget) -> Option<String> {
        match target {
            CommandTarget::Mark(id) => self
                .element_handles
                .get((*id as usize).checked_sub(1)?)
                .cloned(),
            // Raw coordinates have no element handle; the caller falls back
            // to an actions-based click.
            CommandTarget::Point { .. } => None,
        }
    }

    fn pointer_click(&self, x: u32, y: u32) -> Result<(), DriverError> {
        let actions = json!({
            "actions": [{
                "type": "pointer",
                "id": "mouse",
                "actions": [
                    { "type": "pointerMove", "x": x, "y": y, "origin": "viewport" },
                    { "type": "pointerDown", "button": 0 },
                    { "type": "pointerUp", "button": 0 }
                ]
            }]
        });
        self.command("POST", "actions", Some(actions)).map(|_| ())
    }
}

impl Driver for RemoteDriver {
    fn observe(&mut self) -> Result<PageObservation, DriverError> {
        self.ensure_open()?;
        let url = self
            .command("GET", "url", None)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let title = self
            .command("GET", "title", None)?
            .as_str()
            .unwrap_or_default()
            .to_string();

        let found = self.command(
            "POST",
            "elements",
            Some(json!({ "using": "css selector", "value": INTERACTIVE_SELECTOR })),
        )?;
        let mut elements = Vec::new();
        self.element_handles.clear();
        for (i, entry) in found.as_array().into_iter().flatten().enumerate() {
            let Some(handle) = entry[ELEMENT_KEY].as_str() else {
                continue;
            };
            let tag = self
                .element_command(handle, "GET", "name", None)?
                .as_str()
                .unwrap_or("div")
                .to_lowercase();
            let text = self
                .element_command(handle, "GET", "text", None)?
                .as_str()
                .unwrap_or_default()
                .trim()
                .to_string();
            let type_attr = self
                .element_command(handle, "GET", "attribute/type", None)?
                .as_str()
                .map(str::to_string);
            let rect = self.element_command(handle, "GET", "rect", None)?;
            let bbox = BBox {
                x: rect["x"].as_f64().unwrap_or(0.0).max(0.0) as u32,
                y: rect["y"].as_f64().unwrap_or(0.0).max(0.0) as u32,
                width: rect["width"].as_f64().unwrap_or(0.0).max(0.0) as u32,
                height: rect["height"].as_f64().unwrap_or(0.0).max(0.0) as u32,
            };
            let mut attributes = BTreeMap::new();
            if let Some(t) = &type_attr {
                attributes.insert("type".to_string(), t.clone());
            }
            elements.push(ElementDescriptor {
                mark_id: i as u32 + 1,
                role: Self::role_for(&tag, type_attr.as_deref()),
                text,
                attributes,
                bbox,
            });
            self.element_handles.push(handle.to_string());
        }

        let mut dom = String::new();
        for element in &elements {
            dom.push_str(&format!(
                "[{}] {}\n",
                element.mark_id,
                element.pseudo_html()
            ));
        }
        let dom_snapshot = truncate_to_tokens(dom.trim_end(), DEFAULT_DOM_TOKEN_BUDGET);

        let screenshot_b64 = self
            .command("GET", "screenshot", None)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let screenshot = ScreenshotArtifact::Image(
            BASE64
                .decode(screenshot_b64.as_bytes())
                .map_err(|e| DriverError::Remote(format!("bad screenshot payload: {e}")))?,
        );

        Ok(PageObservation {
            url,
            title,
            dom_snapshot,
            elements,
            screenshot,
        })
    }

    fn execute(&mut self, cmd: &BrowserCommand) -> Result<CommandResult, DriverError> {
        self.ensure_open()?;
        cmd.validate()?;
        match cmd.kind {
            CommandKind::Noop => Ok(CommandResult::ok("no-op")),
            CommandKind::Scroll => {
                self.command(
                    "POST",
                    "execute/sync",
                    Some(json!({
                        "script": "window.scrollBy(0, window.innerHeight);",
                        "args": []
                    })),
                )?;
                Ok(CommandResult::ok("scrolled"))
            }
            CommandKind::Navigate => {
                let url = cmd.value.clone().expect("validated");
                self.command("POST", "url", Some(json!({ "url": url })))?;
                Ok(CommandResult::ok("navigated"))
            }
            CommandKind::PressEnter => {
                self.command(
                    "POST",
                    "actions",
                    Some(json!({
                        "actions": [{
                            "type": "key",
                            "id": "kbd",
                            "actions": [
                                { "type": "keyDown", "value": "\u{e007}" },
                                { "type": "keyUp", "value": "\u{e007}" }
                            ]
                        }]
                    })),
                )?;
                Ok(CommandResult::ok("enter pressed"))
            }
            CommandKind::Click => {
                let target = cmd.target.as_ref().expect("validated");
                match self.resolve_handle(target) {
                    Some(handle) => {
                        self.element_command(&handle, "POST", "click", Some(json!({})))?;
                        Ok(CommandResult::ok(format!("clicked {target}")))
                    }
                    None => match target {
                        CommandTarget::Point { x, y } => {
                            self.pointer_click(*x, *y)?;
                            Ok(CommandResult::ok(format!("clicked at ({x}, {y})")))
                        }
                        CommandTarget::Mark(_) => Ok(CommandResult::target_not_found(format!(
                            "no element at {target}"
                        ))),
                    },
                }
            }
            CommandKind::Type | CommandKind::Select => {
                let target = cmd.target.as_ref().expect("validated");
                let value = cmd.value.clone().expect("validated");
                let Some(handle) = self.resolve_handle(target) else {
                    return Ok(CommandResult::target_not_found(format!(
                        "no element at {target}"
                    )));
                };
                if cmd.kind == CommandKind::Type {
                    self.element_command(&handle, "POST", "clear", Some(json!({})))?;
                }
                self.element_command(&handle, "POST", "value", Some(json!({ "text": value })))?;
                Ok(CommandResult::ok(format!("sent keys to {target}")))
            }
        }
    }

    fn close(&mut self) {
        if self.open {
            let _ = self.command("DELETE", "", None);
            self.open = false;
        }
    }
}

impl Drop for RemoteDriver {
    fn drop(&mut self) {
        self.close();
    }
}
