//! Versioned prompt templates and placeholder substitution.
//!
//! Templates ship embedded in the binary (`templates/*_v1.txt`) and can be
//! overridden per run from files, so prompt experiments never require a
//! rebuild. Placeholders are `{{NAME}}` tokens substituted verbatim; an
//! unreplaced placeholder in a built prompt is a bug, so rendering checks
//! for leftovers.

use std::path::Path;

use thiserror::Error;

/// Shared profile preamble for the multi-agent components. Each component
/// prompt starts with this line followed by its role-specific sentence.
pub const MULTI_AGENT_PROFILE: &str = "You are part of a multi-agent system acting as a professional manual tester executing an end-to-end web test case.";

pub const SEEACT_TEMPLATE_V1: &str = include_str!("../templates/seeact_v1.txt");
pub const PINATA_ACTOR_TEMPLATE_V1: &str = include_str!("../templates/pinata_actor_v1.txt");
pub const PINATA_JUDGE_TEMPLATE_V1: &str = include_str!("../templates/pinata_judge_v1.txt");
pub const PINATA_ASSERTOR_TEMPLATE_V1: &str = include_str!("../templates/pinata_assertor_v1.txt");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template left placeholder {0} unsubstituted")]
    Unsubstituted(String),
}

/// Substitute `{{NAME}}` placeholders. Every placeholder occurring in the
/// template must have a binding; leftovers are reported as errors.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = template.to_string();
    for (name, value) in bindings {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    if let Some(start) = out.find("{{") {
        let end = out[start..]
            .find("}}")
            .map(|e| start + e + 2)
            .unwrap_or(out.len());
        return Err(TemplateError::Unsubstituted(out[start..end].to_string()));
    }
    Ok(out)
}

/// Load a template override from disk, or fall back to the embedded one.
pub fn load_or_default(path: Option<&Path>, default: &str) -> Result<String, TemplateError> {
    match path {
        Some(path) => std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => Ok(default.to_string()),
    }
}
