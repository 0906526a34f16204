//! Command-line runner for the test-agent harness.
//!
//! Subcommands:
//! - `run` — execute a suite with the selected agent and emit reports
//! - `score` — re-score stored run records against a suite
//! - `validate-suite` — parse a suite file and report violations
//! - `record-cassettes` — run in RECORD mode to produce replay cassettes
//!
//! Exit code 0 means no infrastructure errors; agent FAIL verdicts are
//! data, not errors. Provider credentials come only from environment
//! variables, never from flags.

mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ata_core::browser::RealDriverConfig;
use ata_core::harness::{
    emit_report, run_suite, score_results, AgentKind, BackendSpec, EnvironmentSpec, ProviderKind,
    ReportFormat, RunConfig,
};
use ata_core::llm::Mode;
use ata_core::pinata::OrchestratorConfig;
use ata_core::seeact::RunLimits;
use ata_core::testcase::{parse_suite, validate_case};

#[derive(Parser)]
#[command(name = "ata", version, about = "Autonomous test agent harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite with the selected agent.
    Run(RunArgs),
    /// Score stored result records against a suite.
    Score(ScoreArgs),
    /// Validate a suite file.
    ValidateSuite(ValidateArgs),
    /// Run in RECORD mode to produce replay cassettes.
    RecordCassettes(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Seeact,
    Pinata,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Openai,
    Anthropic,
    Gemini,
    Scripted,
    Deny,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Simulator,
    Real,
}

#[derive(Args)]
struct RunArgs {
    /// Suite file to execute.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    /// Model id passed to the provider (per-component overrides live in
    /// the config file).
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Cassette directory (one file per case per component).
    #[arg(long)]
    cassettes: Option<PathBuf>,
    /// Response-script directory for the scripted provider.
    #[arg(long)]
    scripts: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    /// Simulator fixture file(s); repeatable.
    #[arg(long)]
    fixture: Vec<PathBuf>,
    /// Base URL for the real-browser environment.
    #[arg(long)]
    base_url: Option<String>,
    /// WebDriver endpoint for the real-browser environment.
    #[arg(long)]
    webdriver_url: Option<String>,
    /// Retry budget per step (orchestrated agent).
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-LLM-call timeout for live providers, in seconds.
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Output directory for traces, records and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<u32>,
    /// Also emit a macro-averaged row (mean over applications).
    #[arg(long)]
    macro_average: bool,
    /// TOML config file providing defaults for any omitted flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Records directory (or JSONL file) from a previous run.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    macro_average: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    suite: PathBuf,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args, None),
        Command::RecordCassettes(args) => run(args, Some(Mode::Record)),
        Command::Score(args) => score(args),
        Command::ValidateSuite(args) => validate(args),
    }
}

fn run(args: RunArgs, forced_mode: Option<Mode>) -> Result<ExitCode> {
    let mut config = build_run_config(&args)?;
    if let Some(mode) = forced_mode {
        config.backend.mode = mode;
    }
    let report = run_suite(&config)?;
    emit_report(&report, ReportFormat::Text, &config.out_dir)?;
    emit_report(&report, ReportFormat::Records, &config.out_dir)?;
    print!("{}", ata_core::harness::report::render_text(&report));
    if report.scored.infra_errors.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn score(args: ScoreArgs) -> Result<ExitCode> {
    let raw = std::fs::read_to_string(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?;
    let suite = parse_suite(&raw)?;
    let scored = score_results(&suite, &args.results, args.macro_average)?;
    let rendered = serde_json::to_string_pretty(&scored)?;
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        std::fs::write(out.join("score.json"), &rendered)?;
    }
    println!("{rendered}");
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> Result<ExitCode> {
    let raw = std::fs::read_to_string(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?;
    match parse_suite(&raw) {
        Ok(suite) => {
            let mut violations = 0;
            for case in &suite.cases {
                for violation in validate_case(case) {
                    println!("{}: {violation}", case.id);
                    violations += 1;
                }
            }
            if violations == 0 {
                println!(
                    "suite `{}` is valid: {} cases across {} applications",
                    suite.name,
                    suite.cases.len(),
                    suite.manifest.len()
                );
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Err(error) => {
            println!("invalid suite: {error}");
            Ok(ExitCode::from(1))
        }
    }
}

fn build_run_config(args: &RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => config_file::load(path)?,
        None => config_file::FileConfig::default(),
    };

    let suite_path = args
        .suite
        .clone()
        .or(file.run.suite)
        .context("--suite is required")?;
    let agent = match args.agent {
        Some(AgentArg::Seeact) => AgentKind::Seeact,
        Some(AgentArg::Pinata) => AgentKind::Pinata,
        None => match file.run.agent.as_deref() {
            Some("seeact") => AgentKind::Seeact,
            Some("pinata") => AgentKind::Pinata,
            Some(other) => bail!("unknown agent `{other}` in config file"),
            None => bail!("--agent is required"),
        },
    };
    let provider = match args.provider {
        Some(ProviderArg::Openai) => ProviderKind::OpenAi,
        Some(ProviderArg::Anthropic) => ProviderKind::Anthropic,
        Some(ProviderArg::Gemini) => ProviderKind::Gemini,
        Some(ProviderArg::Scripted) => ProviderKind::Scripted,
        Some(ProviderArg::Deny) => ProviderKind::Deny,
        None => match file.backend.provider.as_deref() {
            Some("openai") => ProviderKind::OpenAi,
            Some("anthropic") => ProviderKind::Anthropic,
            Some("gemini") => ProviderKind::Gemini,
            Some("scripted") => ProviderKind::Scripted,
            Some("deny") | None => ProviderKind::Deny,
            Some(other) => bail!("unknown provider `{other}` in config file"),
        },
    };
    let mode = match args.mode {
        Some(ModeArg::Live) => Mode::Live,
        Some(ModeArg::Record) => Mode::Record,
        Some(ModeArg::Replay) => Mode::Replay,
        None => match file.backend.mode.as_deref() {
            Some("live") => Mode::Live,
            Some("record") => Mode::Record,
            Some("replay") | None => Mode::Replay,
            Some(other) => bail!("unknown mode `{other}` in config file"),
        },
    };
    let model_id = args
        .model
        .clone()
        .or(file.backend.model)
        .unwrap_or_else(|| "gpt-4o".to_string());

    let environment = match args.env {
        Some(EnvArg::Simulator) | None => {
            let fixture_paths = if args.fixture.is_empty() {
                file.environment.fixtures.clone()
            } else {
                args.fixture.clone()
            };
            if fixture_paths.is_empty() {
                bail!("simulator environment needs at least one --fixture");
            }
            EnvironmentSpec::Simulator { fixture_paths }
        }
        Some(EnvArg::Real) => {
            let base_url = args
                .base_url
                .clone()
                .or(file.environment.base_url.clone())
                .context("--base-url is required for the real environment")?;
            let webdriver_url = args
                .webdriver_url
                .clone()
                .or(file.environment.webdriver_url.clone())
                .unwrap_or_else(|| "http://localhost:4444".to_string());
            EnvironmentSpec::Real(RealDriverConfig {
                webdriver_url,
                base_url,
                reset_hook_url: file.environment.reset_hook_url.clone(),
                navigation_timeout_ms: file.environment.navigation_timeout_ms.unwrap_or(30_000),
            })
        }
    };

    let mut orchestrator = OrchestratorConfig::new(model_id.clone());
    if let Some(section) = &file.orchestrator {
        if let Some(v) = section.max_retries {
            orchestrator.max_retries = v;
        }
        if let Some(v) = section.memory_budget_tokens {
            orchestrator.memory_budget_tokens = v;
        }
        if let Some(v) = &section.model_orchestrator {
            orchestrator.model_orchestrator = v.clone();
        }
        if let Some(v) = &section.model_actor {
            orchestrator.model_actor = v.clone();
        }
        if let Some(v) = &section.model_assertor {
            orchestrator.model_assertor = v.clone();
        }
        orchestrator.actor_template = config_file::load_template(&section.actor_template)?;
        orchestrator.judge_template = config_file::load_template(&section.judge_template)?;
        orchestrator.assertor_template = config_file::load_template(&section.assertor_template)?;
    }
    if let Some(max_retries) = args.max_retries {
        orchestrator.max_retries = max_retries;
    }

    let mut limits = RunLimits::default();
    if let Some(section) = &file.limits {
        limits.max_iterations = section.max_iterations;
        if let Some(v) = section.parse_retries {
            limits.parse_retries = v;
        }
    }

    Ok(RunConfig {
        suite_path,
        agent,
        backend: BackendSpec {
            provider,
            model_id,
            mode,
            cassette_dir: args.cassettes.clone().or(file.backend.cassettes),
            scripts_dir: args.scripts.clone().or(file.backend.scripts),
            timeout_secs: args
                .timeout_secs
                .or(file.backend.timeout_secs)
                .unwrap_or(120),
        },
        environment,
        limits,
        orchestrator,
        out_dir: args
            .out
            .clone()
            .or(file.run.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        parallelism: args.parallel.or(file.run.parallel).unwrap_or(1),
        macro_average: args.macro_average || file.run.macro_average.unwrap_or(false),
    })
}
