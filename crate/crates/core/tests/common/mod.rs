//! Shared helpers for the integration suites: canonical paths to the
//! shipped assets and a baseline replay configuration.
#![allow(dead_code)] // each test binary uses a different subset

use std::path::{Path, PathBuf};

use ata_core::harness::{AgentKind, BackendSpec, EnvironmentSpec, ProviderKind, RunConfig};
use ata_core::llm::Mode;
use ata_core::pinata::OrchestratorConfig;
use ata_core::seeact::RunLimits;
use ata_core::testcase::{parse_suite, Suite};

pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn sample_suite_path() -> PathBuf {
    assets_dir().join("suites/sample.suite")
}

pub fn table1_suite_path() -> PathBuf {
    assets_dir().join("suites/table1.suite")
}

pub fn classified_fixture_path() -> PathBuf {
    assets_dir().join("fixtures/classified.fixture")
}

pub fn cassettes_dir() -> PathBuf {
    assets_dir().join("cassettes")
}

pub fn scripts_dir() -> PathBuf {
    assets_dir().join("scripts")
}

pub fn load_sample_suite() -> Suite {
    let raw = std::fs::read_to_string(sample_suite_path()).expect("sample suite readable");
    parse_suite(&raw).expect("sample suite valid")
}

/// Baseline config: replay the shipped cassettes for `agent` against the
/// shipped simulator fixture, writing artifacts under `out_dir`.
pub fn replay_config(agent: AgentKind, out_dir: &Path) -> RunConfig {
    RunConfig {
        suite_path: sample_suite_path(),
        agent,
        backend: BackendSpec {
            provider: ProviderKind::Deny,
            model_id: "gpt-4o".to_string(),
            mode: Mode::Replay,
            cassette_dir: Some(cassettes_dir()),
            scripts_dir: None,
            timeout_secs: 120,
        },
        environment: EnvironmentSpec::Simulator {
            fixture_paths: vec![classified_fixture_path()],
        },
        limits: RunLimits::default(),
        orchestrator: OrchestratorConfig::new("gpt-4o"),
        out_dir: out_dir.to_path_buf(),
        parallelism: 1,
        macro_average: false,
    }
}
