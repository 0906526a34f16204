//! The suite runner: resets the environment per case, runs the selected
//! agent, persists traces, and scores the outcome.
//!
//! Agent FAIL verdicts are data. Only infrastructure faults — unreadable
//! fixtures, missing or mismatching cassettes, denied sockets — mark a
//! case INFRA_ERROR; such cases are excluded from scoring and listed
//! separately in the report.

pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::browser::{Environment, Fixture, FixtureError, FixtureRegistry, RealDriverConfig};
use crate::llm::{
    AnthropicProvider, Backend, Cassette, DenyAllProvider, GeminiProvider, LlmError, Mode,
    OpenAiProvider, Provider, ScriptedProvider,
};
use crate::metrics::{
    aggregate, compute, GroundVerdict, MetricValue, MetricsError, MetricsReport, ResultPair,
};
use crate::pinata::{orchestrate, ComponentBackends, OrchestratorConfig};
use crate::seeact::{AgentError, RunLimits, SeeActConfig};
use crate::testcase::{parse_suite, Suite, SuiteError, TestCase};
use crate::trace::{ExecutionTrace, StepTag, TraceEventBody};
use crate::verdict::AgentVerdict;

pub use report::{emit_report, ReportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Seeact,
    Pinata,
}

impl AgentKind {
    pub fn components(&self) -> &'static [&'static str] {
        match self {
            AgentKind::Seeact => &["seeact"],
            AgentKind::Pinata => &["orchestrator", "actor", "assertor"],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AgentKind::Seeact => "seeact",
            AgentKind::Pinata => "pinata",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    OpenAi,
    Anthropic,
    Gemini,
    Scripted,
    Deny,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendSpec {
    pub provider: ProviderKind,
    pub model_id: String,
    pub mode: Mode,
    /// Cassette directory; required for RECORD and REPLAY.
    pub cassette_dir: Option<PathBuf>,
    /// Response-script directory for the scripted provider.
    pub scripts_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvironmentSpec {
    Simulator { fixture_paths: Vec<PathBuf> },
    Real(RealDriverConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub suite_path: PathBuf,
    pub agent: AgentKind,
    pub backend: BackendSpec,
    pub environment: EnvironmentSpec,
    pub limits: RunLimits,
    pub orchestrator: OrchestratorConfig,
    pub out_dir: PathBuf,
    pub parallelism: u32,
    pub macro_average: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if matches!(self.backend.mode, Mode::Record | Mode::Replay)
            && self.backend.cassette_dir.is_none()
        {
            return Err(HarnessError::Config(format!(
                "{} mode requires a cassette directory",
                self.backend.mode
            )));
        }
        if self.backend.mode == Mode::Record
            && self.backend.provider == ProviderKind::Scripted
            && self.backend.scripts_dir.is_none()
        {
            return Err(HarnessError::Config(
                "scripted provider requires a scripts directory".to_string(),
            ));
        }
        if self.parallelism == 0 {
            return Err(HarnessError::Config("parallelism must be >= 1".to_string()));
        }
        if self.parallelism > 1 && !matches!(self.environment, EnvironmentSpec::Simulator { .. }) {
            return Err(HarnessError::Config(
                "parallel execution is only allowed for simulator environments".to_string(),
            ));
        }
        Ok(())
    }

    /// Canonical JSON snapshot of the configuration; embedded in reports.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn snapshot_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.snapshot().as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("suite error: {0}")]
    Suite(#[from] SuiteError),
    #[error("fixture error: {0}")]
    Fixture(#[from] FixtureError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("metrics error: {0}")]
    Metrics(#[from] MetricsError),
    #[error("results reference unknown case id {0}")]
    UnknownCase(String),
    #[error("no result for suite cases: {0:?}")]
    MissingResults(Vec<String>),
    #[error("result for {0} disagrees with the suite ground truth")]
    GroundMismatch(String),
    #[error("malformed result record {path}: {message}")]
    MalformedRecord { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Outcome of one case: a scored verdict, or an infrastructure error that
/// excludes the case from scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseOutcome {
    Verdict(AgentVerdict),
    InfraError { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub app_id: String,
    pub ground: GroundVerdict,
    pub outcome: CaseOutcome,
    pub trace_file: String,
}

/// Macro-averaged metrics over applications (mean of per-application
/// values, skipping UNDEFINED ones).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: MetricValue,
    pub specificity: MetricValue,
    pub sensitivity: MetricValue,
    pub aer: MetricValue,
    pub her: MetricValue,
    pub smer: MetricValue,
    pub truacc: MetricValue,
}

/// Scored view of a set of case records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredReport {
    pub per_app: BTreeMap<String, MetricsReport>,
    pub overall: MetricsReport,
    pub macro_overall: Option<MacroMetrics>,
    pub infra_errors: Vec<(String, String)>,
}

/// The full output of a suite run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub suite_name: String,
    pub agent: AgentKind,
    pub config_snapshot: String,
    pub config_hash: String,
    pub cases: Vec<CaseRecord>,
    pub scored: ScoredReport,
    pub wall_ms: u64,
}

/// Execute every case of the suite per the configuration.
pub fn run_suite(config: &RunConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let raw = fs::read_to_string(&config.suite_path).map_err(io_err(&config.suite_path))?;
    let suite = parse_suite(&raw)?;
    let environment = build_environment(&config.environment)?;

    let trace_dir = config.out_dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;

    let workers = (config.parallelism as usize).min(suite.cases.len().max(1));
    let records: Vec<CaseRecord> = if workers <= 1 {
        suite
            .cases
            .iter()
            .map(|case| run_case(config, &environment, case, &trace_dir))
            .collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<CaseRecord>>> = Mutex::new(vec![None; suite.cases.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(case) = suite.cases.get(index) else {
                        break;
                    };
                    let record = run_case(config, &environment, case, &trace_dir);
                    slots.lock().expect("slot lock")[index] = Some(record);
                });
            }
        });
        slots
            .into_inner()
            .expect("slot lock")
            .into_iter()
            .map(|slot| slot.expect("every case ran"))
            .collect()
    };

    let scored = score_records(&records, config.macro_average)?;
    Ok(RunReport {
        suite_name: suite.name.clone(),
        agent: config.agent,
        config_snapshot: config.snapshot(),
        config_hash: config.snapshot_hash(),
        cases: records,
        scored,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

fn build_environment(spec: &EnvironmentSpec) -> Result<Environment, HarnessError> {
    match spec {
        EnvironmentSpec::Simulator { fixture_paths } => {
            let mut registry = FixtureRegistry::new();
            for path in fixture_paths {
                let raw = fs::read_to_string(path).map_err(io_err(path))?;
                registry.register(Fixture::parse(&raw)?);
            }
            Ok(Environment::Simulator(registry))
        }
        EnvironmentSpec::Real(config) => Ok(Environment::Real(config.clone())),
    }
}

fn ground_of(case: &TestCase) -> GroundVerdict {
    GroundVerdict {
        outcome: case.ground_truth,
        failure_step: case.expected_failure_step,
    }
}

fn run_case(
    config: &RunConfig,
    environment: &Environment,
    case: &TestCase,
    trace_dir: &Path,
) -> CaseRecord {
    let trace_path = trace_dir.join(format!("{}.trace.jsonl", case.id));
    let trace_file = trace_path.display().to_string();
    let ground = ground_of(case);
    let infra = |message: String| CaseRecord {
        case_id: case.id.clone(),
        app_id: case.app_id.clone(),
        ground,
        outcome: CaseOutcome::InfraError { message },
        trace_file: trace_file.clone(),
    };

    let mut trace = match ExecutionTrace::with_file(&case.id, &trace_path) {
        Ok(trace) => trace,
        Err(error) => return infra(format!("cannot open trace file: {error}")),
    };

    let mut driver = match environment.reset(&case.app_id) {
        Ok(driver) => driver,
        Err(error) => return infra(format!("reset failed: {error}")),
    };
    match driver.observe() {
        Ok(observation) => trace.append(
            StepTag::Preamble,
            TraceEventBody::ObservationHash {
                hash: observation.state_hash(),
            },
        ),
        Err(error) => return infra(format!("initial observation failed: {error}")),
    }

    let outcome = match config.agent {
        AgentKind::Seeact => {
            let backend = match build_backend(config, case, "seeact") {
                Ok(backend) => backend,
                Err(error) => return infra(error.to_string()),
            };
            let seeact_config = SeeActConfig {
                model_id: config.backend.model_id.clone(),
                limits: config.limits,
                template: None,
            };
            let outcome =
                crate::seeact::run(case, driver.as_mut(), &backend, &seeact_config, &mut trace);
            if let Err(error) = backend.persist() {
                return infra(error.to_string());
            }
            outcome
        }
        AgentKind::Pinata => {
            let backends = match build_component_backends(config, case) {
                Ok(backends) => backends,
                Err(error) => return infra(error.to_string()),
            };
            let mut orchestrator = config.orchestrator.clone();
            if orchestrator.model_orchestrator.is_empty() {
                orchestrator.model_orchestrator = config.backend.model_id.clone();
            }
            if orchestrator.model_actor.is_empty() {
                orchestrator.model_actor = config.backend.model_id.clone();
            }
            if orchestrator.model_assertor.is_empty() {
                orchestrator.model_assertor = config.backend.model_id.clone();
            }
            let outcome = orchestrate(case, driver.as_mut(), &backends, &orchestrator, &mut trace)
                .map(|(verdict, _progress)| verdict);
            for backend in [&backends.orchestrator, &backends.actor, &backends.assertor] {
                if let Err(error) = backend.persist() {
                    return infra(error.to_string());
                }
            }
            outcome
        }
    };
    driver.close();

    match outcome {
        Ok(verdict) => CaseRecord {
            case_id: case.id.clone(),
            app_id: case.app_id.clone(),
            ground,
            outcome: CaseOutcome::Verdict(verdict),
            trace_file,
        },
        Err(AgentError::Infra(message)) => infra(message),
        Err(other) => infra(other.to_string()),
    }
}

fn cassette_path(config: &RunConfig, case: &TestCase, component: &str) -> Option<PathBuf> {
    config.backend.cassette_dir.as_ref().map(|dir| {
        dir.join(config.agent.label())
            .join(format!("{}.{component}.json", case.id))
    })
}

fn build_backend(
    config: &RunConfig,
    case: &TestCase,
    component: &str,
) -> Result<Backend, LlmError> {
    match config.backend.mode {
        Mode::Replay => {
            let path = cassette_path(config, case, component)
                .ok_or_else(|| LlmError::CassetteIo("no cassette directory".to_string()))?;
            let cassette = Cassette::load(&path)?;
            Ok(Backend::replay(Box::new(DenyAllProvider), cassette))
        }
        Mode::Record => {
            let path = cassette_path(config, case, component)
                .ok_or_else(|| LlmError::CassetteIo("no cassette directory".to_string()))?;
            let provider = build_provider(config, case, component)?;
            Ok(Backend::record(provider, path))
        }
        Mode::Live => {
            let provider = build_provider(config, case, component)?;
            Ok(Backend::live(provider))
        }
    }
}

fn build_provider(
    config: &RunConfig,
    case: &TestCase,
    component: &str,
) -> Result<Box<dyn Provider>, LlmError> {
    let timeout = config.backend.timeout_secs;
    Ok(match config.backend.provider {
        ProviderKind::OpenAi => Box::new(OpenAiProvider::from_env(timeout)?),
        ProviderKind::Anthropic => Box::new(AnthropicProvider::from_env(timeout)?),
        ProviderKind::Gemini => Box::new(GeminiProvider::from_env(timeout)?),
        ProviderKind::Deny => Box::new(DenyAllProvider),
        ProviderKind::Scripted => {
            let dir = config.backend.scripts_dir.as_ref().ok_or_else(|| {
                LlmError::Provider("scripted provider requires a scripts directory".to_string())
            })?;
            let path = dir
                .join(config.agent.label())
                .join(format!("{}.{component}.json", case.id));
            let raw = fs::read_to_string(&path).map_err(|e| {
                LlmError::Provider(format!("cannot read script {}: {e}", path.display()))
            })?;
            let responses: Vec<String> = serde_json::from_str(&raw).map_err(|e| {
                LlmError::Provider(format!("malformed script {}: {e}", path.display()))
            })?;
            Box::new(ScriptedProvider::new(responses))
        }
    })
}

fn build_component_backends(
    config: &RunConfig,
    case: &TestCase,
) -> Result<ComponentBackends, LlmError> {
    Ok(ComponentBackends {
        orchestrator: build_backend(config, case, "orchestrator")?,
        actor: build_backend(config, case, "actor")?,
        assertor: build_backend(config, case, "assertor")?,
    })
}

/// Score a record list: per-application metrics plus pooled overall
/// counts. Infra-error cases are excluded and listed separately.
pub fn score_records(
    records: &[CaseRecord],
    macro_average: bool,
) -> Result<ScoredReport, HarnessError> {
    let mut per_app_pairs: BTreeMap<String, Vec<ResultPair>> = BTreeMap::new();
    let mut infra_errors = Vec::new();
    for record in records {
        match &record.outcome {
            CaseOutcome::Verdict(verdict) => {
                per_app_pairs
                    .entry(record.app_id.clone())
                    .or_default()
                    .push(ResultPair {
                        case_id: record.case_id.clone(),
                        ground: record.ground,
                        agent: verdict.clone(),
                    });
            }
            CaseOutcome::InfraError { message } => {
                infra_errors.push((record.case_id.clone(), message.clone()));
            }
        }
    }

    let mut per_app = BTreeMap::new();
    let mut pooled = crate::metrics::ConfusionCounts::default();
    for (app, pairs) in &per_app_pairs {
        let counts = aggregate(pairs)?;
        pooled.merge(&counts);
        per_app.insert(app.clone(), compute(&counts));
    }
    let overall = compute(&pooled);
    let macro_overall = macro_average.then(|| macro_of(&per_app));

    Ok(ScoredReport {
        per_app,
        overall,
        macro_overall,
        infra_errors,
    })
}

fn macro_of(per_app: &BTreeMap<String, MetricsReport>) -> MacroMetrics {
    let mean = |pick: fn(&MetricsReport) -> MetricValue| -> MetricValue {
        let defined: Vec<Ratio<u64>> = per_app
            .values()
            .filter_map(|report| pick(report).as_ratio())
            .collect();
        if defined.is_empty() {
            MetricValue::Undefined
        } else {
            let sum: Ratio<u64> = defined.iter().copied().sum();
            MetricValue::Defined(sum / Ratio::new(defined.len() as u64, 1u64))
        }
    };
    MacroMetrics {
        accuracy: mean(|r| r.accuracy),
        specificity: mean(|r| r.specificity),
        sensitivity: mean(|r| r.sensitivity),
        aer: mean(|r| r.aer),
        her: mean(|r| r.her),
        smer: mean(|r| r.smer),
        truacc: mean(|r| r.truacc),
    }
}

/// Re-score stored run artifacts against a suite. `results_path` is the
/// records directory (or a JSONL file) produced by `emit_report`.
pub fn score_results(
    suite: &Suite,
    results_path: &Path,
    macro_average: bool,
) -> Result<ScoredReport, HarnessError> {
    let records = load_records(results_path)?;

    let by_id: BTreeMap<&str, &TestCase> = suite.cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut seen: Vec<&str> = Vec::new();
    for record in &records {
        let case = by_id
            .get(record.case_id.as_str())
            .ok_or_else(|| HarnessError::UnknownCase(record.case_id.clone()))?;
        if ground_of(case) != record.ground {
            return Err(HarnessError::GroundMismatch(record.case_id.clone()));
        }
        seen.push(record.case_id.as_str());
    }
    let missing: Vec<String> = suite
        .cases
        .iter()
        .filter(|case| !seen.contains(&case.id.as_str()))
        .map(|case| case.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingResults(missing));
    }

    score_records(&records, macro_average)
}

fn load_records(path: &Path) -> Result<Vec<CaseRecord>, HarnessError> {
    let mut records = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|ext| ext == "json")
                    && p.file_name().is_some_and(|name| name != "summary.json")
            })
            .collect();
        entries.sort();
        for entry in entries {
            let raw = fs::read_to_string(&entry).map_err(io_err(&entry))?;
            let record: report::PerCaseRecord =
                serde_json::from_str(&raw).map_err(|e| HarnessError::MalformedRecord {
                    path: entry.display().to_string(),
                    message: e.to_string(),
                })?;
            records.push(record.into_case_record());
        }
    } else {
        let raw = fs::read_to_string(path).map_err(io_err(path))?;
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: report::PerCaseRecord =
                serde_json::from_str(line).map_err(|e| HarnessError::MalformedRecord {
                    path: format!("{}:{}", path.display(), i + 1),
                    message: e.to_string(),
                })?;
            records.push(record.into_case_record());
        }
    }
    Ok(records)
}
