//! Scoring agent verdicts against human ground truth.
//!
//! Verdict alignment treats the run as binary classification with FAIL as
//! the positive class. Step alignment decomposes the true positives by
//! comparing the agent's failed step to the human-annotated one: the agent
//! failed before (AFB), after (AFA), or at the same step (AFC). From the
//! counts come seven metrics: accuracy, specificity, sensitivity, the
//! automation error rate AER = AFB/TP, the hallucination error rate
//! HER = AFA/TP, the step-mismatch error rate SMER = AER + HER, and the
//! true accuracy TruAcc = (AFC + TN) / total, which credits only
//! step-exact failure detections.
//!
//! All arithmetic is exact rational; rounding to two decimals happens only
//! when a report is rendered. A zero denominator yields UNDEFINED, never a
//! number by convention.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::{AgentVerdict, Outcome};

/// Human ground truth for one case: the verdict and, for failing cases,
/// the annotated failure step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundVerdict {
    pub outcome: Outcome,
    pub failure_step: Option<u32>,
}

impl GroundVerdict {
    pub fn pass() -> Self {
        GroundVerdict {
            outcome: Outcome::Pass,
            failure_step: None,
        }
    }

    pub fn fail(step: u32) -> Self {
        GroundVerdict {
            outcome: Outcome::Fail,
            failure_step: Some(step),
        }
    }
}

/// One scored pair: ground truth versus the agent's verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultPair {
    pub case_id: String,
    pub ground: GroundVerdict,
    pub agent: AgentVerdict,
}

/// Step-alignment bucket for a true positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepAlignment {
    /// Agent failed at an earlier step than the human.
    Before,
    /// Agent failed at a later step than the human.
    After,
    /// Agent failed at the same step as the human.
    Correct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    TruePositive(StepAlignment),
    TrueNegative,
    FalsePositive,
    FalseNegative,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("case {0}: ground FAIL without a failure step")]
    MalformedGround(String),
    #[error("case {0}: agent FAIL without a failed step")]
    MalformedAgent(String),
    #[error("duplicate case id {0}")]
    DuplicateCaseId(String),
}

/// Confusion counts plus the true-positive step-alignment decomposition.
/// Invariants: `afb + afa + afc == tp` and `tp + tn + fp + fn == total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub afb: u64,
    pub afa: u64,
    pub afc: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn is_well_formed(&self) -> bool {
        self.afb + self.afa + self.afc == self.tp
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.afb += other.afb;
        self.afa += other.afa;
        self.afc += other.afc;
    }
}

/// A metric value: an exact rational in [0, 1], or UNDEFINED when its
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricValue {
    Defined(Ratio<u64>),
    Undefined,
}

impl MetricValue {
    fn ratio(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            MetricValue::Undefined
        } else {
            MetricValue::Defined(Ratio::new(numerator, denominator))
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, MetricValue::Defined(_))
    }

    pub fn as_ratio(&self) -> Option<Ratio<u64>> {
        match self {
            MetricValue::Defined(r) => Some(*r),
            MetricValue::Undefined => None,
        }
    }

    /// Sum, propagating UNDEFINED through either addend.
    pub fn checked_add(self, other: MetricValue) -> MetricValue {
        match (self, other) {
            (MetricValue::Defined(a), MetricValue::Defined(b)) => MetricValue::Defined(a + b),
            _ => MetricValue::Undefined,
        }
    }

    /// Two-decimal rendering, round half up; UNDEFINED renders as `n/a`.
    pub fn render(&self) -> String {
        match self {
            MetricValue::Undefined => "n/a".to_string(),
            MetricValue::Defined(r) => {
                let scaled = r * Ratio::new(100u64, 1u64);
                // round half up: floor(x + 1/2)
                let rounded = (scaled + Ratio::new(1u64, 2u64)).floor().to_integer();
                format!("{}.{:02}", rounded / 100, rounded % 100)
            }
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

impl Serialize for MetricValue {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            MetricValue::Undefined => {
                let mut map = ser.serialize_map(Some(1))?;
                map.serialize_entry("kind", "undefined")?;
                map.end()
            }
            MetricValue::Defined(r) => {
                let mut map = ser.serialize_map(Some(4))?;
                map.serialize_entry("kind", "defined")?;
                map.serialize_entry("numerator", r.numer())?;
                map.serialize_entry("denominator", r.denom())?;
                map.serialize_entry("rounded", &self.render())?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            kind: String,
            #[serde(default)]
            numerator: u64,
            #[serde(default)]
            denominator: u64,
        }
        let raw = Raw::deserialize(de)?;
        match raw.kind.as_str() {
            "undefined" => Ok(MetricValue::Undefined),
            "defined" if raw.denominator != 0 => Ok(MetricValue::Defined(Ratio::new(
                raw.numerator,
                raw.denominator,
            ))),
            _ => Err(serde::de::Error::custom("malformed metric value")),
        }
    }
}

/// The seven derived metrics plus the counts they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: MetricValue,
    pub specificity: MetricValue,
    pub sensitivity: MetricValue,
    pub aer: MetricValue,
    pub her: MetricValue,
    pub smer: MetricValue,
    pub truacc: MetricValue,
    pub counts: ConfusionCounts,
}

/// Classify one pair. FAIL is the positive class; true positives are
/// sub-classified by comparing the agent's failed step to the annotated
/// one.
pub fn classify(pair: &ResultPair) -> Result<Classification, MetricsError> {
    match (pair.ground.outcome, pair.agent.outcome) {
        (Outcome::Fail, Outcome::Fail) => {
            let ground_step = pair
                .ground
                .failure_step
                .ok_or_else(|| MetricsError::MalformedGround(pair.case_id.clone()))?;
            let agent_step = pair
                .agent
                .failed_step
                .ok_or_else(|| MetricsError::MalformedAgent(pair.case_id.clone()))?;
            let alignment = match agent_step.cmp(&ground_step) {
                std::cmp::Ordering::Less => StepAlignment::Before,
                std::cmp::Ordering::Greater => StepAlignment::After,
                std::cmp::Ordering::Equal => StepAlignment::Correct,
            };
            Ok(Classification::TruePositive(alignment))
        }
        (Outcome::Pass, Outcome::Pass) => Ok(Classification::TrueNegative),
        (Outcome::Pass, Outcome::Fail) => Ok(Classification::FalsePositive),
        (Outcome::Fail, Outcome::Pass) => Ok(Classification::FalseNegative),
    }
}

/// Tabulate a pair list into confusion counts. Case ids must be unique;
/// the result is independent of pair order.
pub fn aggregate(pairs: &[ResultPair]) -> Result<ConfusionCounts, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut counts = ConfusionCounts::default();
    for pair in pairs {
        if !seen.insert(pair.case_id.as_str()) {
            return Err(MetricsError::DuplicateCaseId(pair.case_id.clone()));
        }
        match classify(pair)? {
            Classification::TruePositive(alignment) => {
                counts.tp += 1;
                match alignment {
                    StepAlignment::Before => counts.afb += 1,
                    StepAlignment::After => counts.afa += 1,
                    StepAlignment::Correct => counts.afc += 1,
                }
            }
            Classification::TrueNegative => counts.tn += 1,
            Classification::FalsePositive => counts.fp += 1,
            Classification::FalseNegative => counts.fn_ += 1,
        }
    }
    debug_assert!(counts.is_well_formed());
    Ok(counts)
}

/// Derive the seven metrics from counts, in exact rational arithmetic.
pub fn compute(counts: &ConfusionCounts) -> MetricsReport {
    let total = counts.total();
    let aer = MetricValue::ratio(counts.afb, counts.tp);
    let her = MetricValue::ratio(counts.afa, counts.tp);
    MetricsReport {
        accuracy: MetricValue::ratio(counts.tp + counts.tn, total),
        specificity: MetricValue::ratio(counts.tn, counts.tn + counts.fp),
        sensitivity: MetricValue::ratio(counts.tp, counts.tp + counts.fn_),
        aer,
        her,
        smer: aer.checked_add(her),
        truacc: MetricValue::ratio(counts.afc + counts.tn, total),
        counts: *counts,
    }
}
