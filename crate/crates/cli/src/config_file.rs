//! TOML config file: provides defaults for any flag left unset on the
//! command line. Flags always win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub limits: Option<LimitsSection>,
    #[serde(default)]
    pub orchestrator: Option<OrchestratorSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub suite: Option<PathBuf>,
    pub agent: Option<String>,
    pub out: Option<PathBuf>,
    pub parallel: Option<u32>,
    pub macro_average: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub provider: Option<String>,
    pub model: Option<String>,
    pub mode: Option<String>,
    pub cassettes: Option<PathBuf>,
    pub scripts: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default)]
    pub fixtures: Vec<PathBuf>,
    pub base_url: Option<String>,
    pub webdriver_url: Option<String>,
    pub reset_hook_url: Option<String>,
    pub navigation_timeout_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub max_iterations: Option<u32>,
    pub parse_retries: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorSection {
    pub max_retries: Option<u32>,
    pub memory_budget_tokens: Option<usize>,
    pub model_orchestrator: Option<String>,
    pub model_actor: Option<String>,
    pub model_assertor: Option<String>,
    pub actor_template: Option<PathBuf>,
    pub judge_template: Option<PathBuf>,
    pub assertor_template: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&raw).with_context(|| format!("parsing config file {}", path.display()))
}

/// Template overrides are stored as paths in the config file and loaded
/// into memory here.
pub fn load_template(path: &Option<PathBuf>) -> Result<Option<String>> {
    match path {
        Some(path) => {
            Ok(Some(std::fs::read_to_string(path).with_context(|| {
                format!("reading template {}", path.display())
            })?))
        }
        None => Ok(None),
    }
}
