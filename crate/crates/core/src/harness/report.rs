//! Report emission: an aligned text grid and machine-readable per-case
//! records. Emitting the same report twice produces byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{GroundVerdict, MetricsReport};
use crate::verdict::AgentVerdict;

use super::{CaseOutcome, CaseRecord, HarnessError, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Records,
}

/// One machine-readable result record, as written to
/// `records/<case_id>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerCaseRecord {
    pub case_id: String,
    pub app_id: String,
    pub ground: GroundVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infra_error: Option<String>,
    pub trace: String,
    pub config_hash: String,
}

impl PerCaseRecord {
    fn from_case(record: &CaseRecord, config_hash: &str) -> Self {
        let (agent, infra_error) = match &record.outcome {
            CaseOutcome::Verdict(verdict) => (Some(verdict.clone()), None),
            CaseOutcome::InfraError { message } => (None, Some(message.clone())),
        };
        PerCaseRecord {
            case_id: record.case_id.clone(),
            app_id: record.app_id.clone(),
            ground: record.ground,
            agent,
            infra_error,
            trace: record.trace_file.clone(),
            config_hash: config_hash.to_string(),
        }
    }

    pub(super) fn into_case_record(self) -> CaseRecord {
        let outcome = match (self.agent, self.infra_error) {
            (Some(verdict), _) => CaseOutcome::Verdict(verdict),
            (None, Some(message)) => CaseOutcome::InfraError { message },
            (None, None) => CaseOutcome::InfraError {
                message: "record carries neither verdict nor error".to_string(),
            },
        };
        CaseRecord {
            case_id: self.case_id,
            app_id: self.app_id,
            ground: self.ground,
            outcome,
            trace_file: self.trace,
        }
    }
}

const METRIC_HEADER: [&str; 7] = ["Acc", "Spec", "Sens", "AER", "HER", "SMER", "TruAcc"];

fn metric_cells(report: &MetricsReport) -> [String; 7] {
    [
        report.accuracy.render(),
        report.specificity.render(),
        report.sensitivity.render(),
        report.aer.render(),
        report.her.render(),
        report.smer.render(),
        report.truacc.render(),
    ]
}

/// Render the metrics grid: one row per application plus an Average row
/// over pooled counts (and a macro row when enabled).
pub fn render_text(report: &RunReport) -> String {
    let mut rows: Vec<(String, [String; 7])> = report
        .scored
        .per_app
        .iter()
        .map(|(app, metrics)| (app.clone(), metric_cells(metrics)))
        .collect();
    rows.push(("Average".to_string(), metric_cells(&report.scored.overall)));
    if let Some(macro_overall) = &report.scored.macro_overall {
        rows.push((
            "Average (macro)".to_string(),
            [
                macro_overall.accuracy.render(),
                macro_overall.specificity.render(),
                macro_overall.sensitivity.render(),
                macro_overall.aer.render(),
                macro_overall.her.render(),
                macro_overall.smer.render(),
                macro_overall.truacc.render(),
            ],
        ));
    }

    let name_width = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain(["Application".len()])
        .max()
        .unwrap_or(11);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "Suite: {}  Agent: {}",
        report.suite_name,
        report.agent.label()
    );
    let _ = writeln!(out, "Config: {}", report.config_hash);
    let _ = writeln!(out, "Wall time: {} ms", report.wall_ms);
    out.push('\n');
    let _ = write!(out, "{:<name_width$}", "Application");
    for header in METRIC_HEADER {
        let _ = write!(out, "  {header:>6}");
    }
    out.push('\n');
    for (name, cells) in &rows {
        let _ = write!(out, "{name:<name_width$}");
        for cell in cells {
            let _ = write!(out, "  {cell:>6}");
        }
        out.push('\n');
    }

    let counts = &report.scored.overall.counts;
    out.push('\n');
    let _ = writeln!(
        out,
        "Counts: TP={} TN={} FP={} FN={} | AFB={} AFA={} AFC={} | scored={} of {}",
        counts.tp,
        counts.tn,
        counts.fp,
        counts.fn_,
        counts.afb,
        counts.afa,
        counts.afc,
        counts.total(),
        report.cases.len()
    );

    out.push('\n');
    let _ = writeln!(out, "Per-case verdicts:");
    for case in &report.cases {
        match &case.outcome {
            CaseOutcome::Verdict(verdict) => {
                let ground = match case.ground.failure_step {
                    Some(step) => format!("{} at step {step}", case.ground.outcome),
                    None => case.ground.outcome.to_string(),
                };
                let _ = writeln!(
                    out,
                    "  {} [{}] ground {} -> agent {}",
                    case.case_id, case.app_id, ground, verdict
                );
            }
            CaseOutcome::InfraError { .. } => {}
        }
    }

    if !report.scored.infra_errors.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "Infrastructure errors (excluded from scoring):");
        for (case_id, message) in &report.scored.infra_errors {
            let _ = writeln!(out, "  {case_id}: {message}");
        }
    }
    out
}

/// Write the report in the requested format, returning the files written.
pub fn emit_report(
    report: &RunReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let write = |path: &Path, contents: &str| -> Result<(), HarnessError> {
        fs::write(path, contents).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    match format {
        ReportFormat::Text => {
            let path = out_dir.join("report.txt");
            write(&path, &render_text(report))?;
            Ok(vec![path])
        }
        ReportFormat::Records => {
            let records_dir = out_dir.join("records");
            fs::create_dir_all(&records_dir).map_err(|source| HarnessError::Io {
                path: records_dir.display().to_string(),
                source,
            })?;
            let mut written = Vec::new();
            for case in &report.cases {
                let record = PerCaseRecord::from_case(case, &report.config_hash);
                let path = records_dir.join(format!("{}.json", case.case_id));
                write(
                    &path,
                    &serde_json::to_string_pretty(&record).expect("record serializes"),
                )?;
                written.push(path);
            }
            let summary_path = records_dir.join("summary.json");
            let summary = serde_json::json!({
                "suite": report.suite_name,
                "agent": report.agent.label(),
                "config_hash": report.config_hash,
                "scored": report.scored,
                "wall_ms": report.wall_ms,
            });
            write(
                &summary_path,
                &serde_json::to_string_pretty(&summary).expect("summary serializes"),
            )?;
            written.push(summary_path);
            Ok(written)
        }
    }
}
