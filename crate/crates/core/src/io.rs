//! Study files, cohort tables and reports.
//!
//! # Study file (JSON)
//!
//! ```json
//! {
//!   "version": 1,
//!   "strata": [
//!     { "name": "male",
//!       "experimental": { "treated": {"survived": 490, "died": 510},
//!                         "control": {"survived": 210, "died": 790} },
//!       "observational": { "chose_treatment": {"survived": 980, "died": 420},
//!                          "chose_control": {"survived": 420, "died": 180} } },
//!     { "name": "direct",
//!       "probabilities": { "p_yt": 0.49, "p_yc": 0.21, "p_t": 0.7,
//!                          "p_y_given_t": 0.7, "p_y_given_c": "7/10" } }
//!   ]
//! }
//! ```
//!
//! A stratum carries counts (either study may be left out) or probabilities,
//! never both. Probabilities are exact: numbers are read as the decimal they
//! spell, strings may also be `"p/q"`. An optional top-level `description`
//! string is kept verbatim.
//!
//! # Cohort table (CSV)
//!
//! One row per unit. Required columns `source` (`experimental`/`exp`/`rct`
//! or `observational`/`obs`), `exposure` (`t`/`treated`/`treatment`/`1` or
//! `c`/`control`/`0`) and `outcome` (`y`/`survived`/`1` or `y'`/`died`/`0`).
//! Every other column is a categorical covariate.
//!
//! # Reports
//!
//! [`ReportDocument`] is the machine form: every number carries its exact
//! value (`"p/q"`), an `f64` and a display string. Output is deterministic and
//! re-parsing then re-emitting it is byte-identical. [`render_text`] gives
//! the human form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{BoundDerivation, EvidenceScope};
use crate::decision::{Monotonicity, Nnt, NntInterval};
use crate::error::{Error, Result};
use crate::num::{display, parse_exact, serde_exact, to_exact_string, to_f64, Rational};
use crate::sim::ScenarioSpec;
use crate::strata::{
    analyze_counts, analyze_probabilities, CohortDataset, CohortRecord, Exposure,
    FeatureScreenResult, ScopeBounds, Source, StratumReport,
};
use crate::study::{
    ArmCounts, ExperimentalRates, ExperimentalSummary, ObservationalRates, ObservationalSummary,
    StudyProbabilities,
};

pub const FORMAT_VERSION: u64 = 1;
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn json_error(err: serde_json::Error) -> Error {
    use serde_json::error::Category;
    let (line, column) = (err.line(), err.column());
    let full = err.to_string();
    let message = full
        .strip_suffix(&format!(" at line {line} column {column}"))
        .unwrap_or(&full)
        .to_string();
    match err.classify() {
        Category::Io => Error::Io(message),
        Category::Data
            if message.starts_with("missing field") || message.starts_with("unknown field") =>
        {
            Error::Schema(format!("{message} (line {line}, column {column})"))
        }
        _ => Error::Parse {
            line,
            column,
            message,
        },
    }
}

/// Parses a versioned JSON document: syntax first, then the version, then
/// the typed body.
fn parse_versioned<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(json_error)?;
    match value.get("version") {
        None => return Err(Error::Schema("missing field `version`".into())),
        Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::Schema(format!("unsupported version {v}"))),
    }
    serde_json::from_slice(bytes).map_err(json_error)
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("document serializes");
    out.push('\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------------------
// Study files

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmDoc {
    survived: i64,
    died: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentalDoc {
    treated: ArmDoc,
    control: ArmDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationalDoc {
    chose_treatment: ArmDoc,
    chose_control: ArmDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
struct Exact(#[serde(with = "serde_exact")] Rational);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbabilitiesDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_yt: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_yc: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_t: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_y_given_t: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_y_given_c: Option<Exact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StratumDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    experimental: Option<ExperimentalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observational: Option<ObservationalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probabilities: Option<ProbabilitiesDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyDoc {
    version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    strata: Vec<StratumDoc>,
}

/// What one stratum of a study file supplies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StratumInput {
    Counts {
        experimental: Option<ExperimentalSummary>,
        observational: Option<ObservationalSummary>,
    },
    Probabilities(StudyProbabilities),
}

impl StratumInput {
    pub fn probabilities(&self) -> Result<StudyProbabilities> {
        match self {
            StratumInput::Counts {
                experimental,
                observational,
            } => StudyProbabilities::from_optional_counts(experimental.as_ref(), observational.as_ref()),
            StratumInput::Probabilities(p) => Ok(p.clone()),
        }
    }

    /// Full analysis of this stratum.
    pub fn analyze(&self, label: &str) -> Result<StratumReport> {
        match self {
            StratumInput::Counts {
                experimental,
                observational,
            } => analyze_counts(experimental.as_ref(), observational.as_ref(), label),
            StratumInput::Probabilities(p) => analyze_probabilities(label, p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StudyFile {
    pub description: Option<String>,
    pub strata: BTreeMap<String, StratumInput>,
}

fn count(path: &str, value: i64) -> Result<u64> {
    u64::try_from(value).map_err(|_| Error::Value {
        field: path.to_string(),
        message: format!("count {value} is negative"),
    })
}

fn arm_from_doc(path: &str, doc: &ArmDoc) -> Result<ArmCounts> {
    Ok(ArmCounts::new(
        count(&format!("{path}.survived"), doc.survived)?,
        count(&format!("{path}.died"), doc.died)?,
    ))
}

fn arm_to_doc(arm: &ArmCounts) -> ArmDoc {
    // Counts are far below i64::MAX in any real study.
    ArmDoc {
        survived: arm.survivors as i64,
        died: arm.deaths as i64,
    }
}

fn prefix_error(path: &str, err: Error) -> Error {
    match err {
        Error::Value { field, message } => Error::Value {
            field: format!("{path}.{field}"),
            message,
        },
        Error::MissingField(field) => Error::Schema(format!("{path}: missing field `{field}`")),
        other => other,
    }
}

fn probabilities_from_doc(path: &str, doc: &ProbabilitiesDoc) -> Result<StudyProbabilities> {
    let get = |x: &Option<Exact>| x.as_ref().map(|e| e.0.clone());
    let experimental = match (get(&doc.p_yt), get(&doc.p_yc)) {
        (Some(yt), Some(yc)) => Some(ExperimentalRates::new(yt, yc)),
        (None, None) => None,
        _ => {
            return Err(Error::Schema(format!(
                "{path}: p_yt and p_yc must be given together"
            )))
        }
    };
    let observational = match get(&doc.p_t) {
        Some(p_t) => Some(ObservationalRates::new(
            p_t,
            get(&doc.p_y_given_t),
            get(&doc.p_y_given_c),
        )),
        None if doc.p_y_given_t.is_some() || doc.p_y_given_c.is_some() => {
            return Err(Error::Schema(format!(
                "{path}: conditional survival rates need p_t"
            )))
        }
        None => None,
    };
    let experimental = experimental.transpose().map_err(|e| prefix_error(path, e))?;
    let observational = observational.transpose().map_err(|e| prefix_error(path, e))?;
    StudyProbabilities::from_parts(experimental, observational).map_err(|_| {
        Error::Schema(format!("{path}: no probabilities given"))
    })
}

fn probabilities_to_doc(p: &StudyProbabilities) -> ProbabilitiesDoc {
    let exact = |x: &Rational| Some(Exact(x.clone()));
    let mut doc = ProbabilitiesDoc::default();
    if let Some(e) = p.experimental() {
        doc.p_yt = exact(&e.p_yt);
        doc.p_yc = exact(&e.p_yc);
    }
    if let Some(o) = p.observational() {
        doc.p_t = exact(&o.p_t);
        doc.p_y_given_t = o.p_y_given_t.as_ref().and_then(exact);
        doc.p_y_given_c = o.p_y_given_c.as_ref().and_then(exact);
    }
    doc
}

impl StudyFile {
    pub fn from_counts(
        strata: impl IntoIterator<Item = (String, ExperimentalSummary, ObservationalSummary)>,
    ) -> Self {
        Self {
            description: None,
            strata: strata
                .into_iter()
                .map(|(name, e, o)| {
                    (
                        name,
                        StratumInput::Counts {
                            experimental: Some(e),
                            observational: Some(o),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Canonical JSON: strata sorted by name, two-space indentation.
    pub fn to_json(&self) -> String {
        let strata = self
            .strata
            .iter()
            .map(|(name, input)| match input {
                StratumInput::Counts {
                    experimental,
                    observational,
                } => StratumDoc {
                    name: name.clone(),
                    experimental: experimental.as_ref().map(|e| ExperimentalDoc {
                        treated: arm_to_doc(&e.treated),
                        control: arm_to_doc(&e.control),
                    }),
                    observational: observational.as_ref().map(|o| ObservationalDoc {
                        chose_treatment: arm_to_doc(&o.chose_treatment),
                        chose_control: arm_to_doc(&o.chose_control),
                    }),
                    probabilities: None,
                },
                StratumInput::Probabilities(p) => StratumDoc {
                    name: name.clone(),
                    experimental: None,
                    observational: None,
                    probabilities: Some(probabilities_to_doc(p)),
                },
            })
            .collect();
        to_pretty_json(&StudyDoc {
            version: FORMAT_VERSION,
            description: self.description.clone(),
            strata,
        })
    }
}

pub fn parse_study_file(bytes: &[u8]) -> Result<StudyFile> {
    let doc: StudyDoc = parse_versioned(bytes)?;
    let mut strata = BTreeMap::new();
    for (i, s) in doc.strata.iter().enumerate() {
        let path = format!("strata[{i}]");
        let has_counts = s.experimental.is_some() || s.observational.is_some();
        let input = match (&s.probabilities, has_counts) {
            (Some(_), true) => {
                return Err(Error::Schema(format!(
                    "{path} (`{}`): give counts or probabilities, not both",
                    s.name
                )))
            }
            (None, false) => {
                return Err(Error::Schema(format!(
                    "{path} (`{}`): no counts or probabilities",
                    s.name
                )))
            }
            (Some(p), false) => {
                StratumInput::Probabilities(probabilities_from_doc(&format!("{path}.probabilities"), p)?)
            }
            (None, true) => StratumInput::Counts {
                experimental: s
                    .experimental
                    .as_ref()
                    .map(|e| -> Result<_> {
                        Ok(ExperimentalSummary {
                            treated: arm_from_doc(&format!("{path}.experimental.treated"), &e.treated)?,
                            control: arm_from_doc(&format!("{path}.experimental.control"), &e.control)?,
                        })
                    })
                    .transpose()?,
                observational: s
                    .observational
                    .as_ref()
                    .map(|o| -> Result<_> {
                        Ok(ObservationalSummary {
                            chose_treatment: arm_from_doc(
                                &format!("{path}.observational.chose_treatment"),
                                &o.chose_treatment,
                            )?,
                            chose_control: arm_from_doc(
                                &format!("{path}.observational.chose_control"),
                                &o.chose_control,
                            )?,
                        })
                    })
                    .transpose()?,
            },
        };
        if strata.insert(s.name.clone(), input).is_some() {
            return Err(Error::Schema(format!("duplicate stratum name `{}`", s.name)));
        }
    }
    Ok(StudyFile {
        description: doc.description,
        strata,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    version: u64,
    scenario: ScenarioSpec,
}

/// Scenario specs share the study file envelope: `{"version": 1, "scenario": {...}}`.
pub fn parse_scenario_file(bytes: &[u8]) -> Result<ScenarioSpec> {
    let doc: ScenarioDoc = parse_versioned(bytes)?;
    doc.scenario.validate()?;
    Ok(doc.scenario)
}

pub fn scenario_to_json(spec: &ScenarioSpec) -> String {
    to_pretty_json(&ScenarioDoc {
        version: FORMAT_VERSION,
        scenario: spec.clone(),
    })
}

// ---------------------------------------------------------------------------
// Cohort CSV

const SOURCE: &str = "source";
const EXPOSURE: &str = "exposure";
const OUTCOME: &str = "outcome";

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        column: 0,
        message: err.to_string(),
    }
}

pub fn parse_cohort_csv(bytes: &[u8]) -> Result<CohortDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h) {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let position = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let (source_col, exposure_col, outcome_col) =
        (position(SOURCE)?, position(EXPOSURE)?, position(OUTCOME)?);
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![source_col, exposure_col, outcome_col].contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut cohort = CohortDataset::new(covariate_cols.iter().map(|(_, h)| h.clone()).collect());
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |col: usize, message: String| Error::Parse {
            line,
            column: col + 1,
            message,
        };
        let source = match &row[source_col] {
            "experimental" | "exp" | "rct" => Source::Experimental,
            "observational" | "obs" => Source::Observational,
            other => return Err(bad(source_col, format!("unknown source `{other}`"))),
        };
        let exposure = match &row[exposure_col] {
            "t" | "treated" | "treatment" | "1" => Exposure::Treatment,
            "c" | "control" | "0" => Exposure::Control,
            other => return Err(bad(exposure_col, format!("unknown exposure `{other}`"))),
        };
        let survived = match &row[outcome_col] {
            "y" | "survived" | "1" => true,
            "y'" | "died" | "0" => false,
            other => return Err(bad(outcome_col, format!("unknown outcome `{other}`"))),
        };
        let covariates = covariate_cols
            .iter()
            .map(|(i, h)| (h.clone(), row[*i].to_string()))
            .collect();
        cohort.push(CohortRecord {
            covariates,
            source,
            exposure,
            survived,
        })?;
    }
    Ok(cohort)
}

/// Canonical CSV: covariates in declared order, then `source,exposure,outcome`.
pub fn cohort_to_csv(cohort: &CohortDataset) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = cohort.covariates().iter().map(String::as_str).collect();
    header.extend([SOURCE, EXPOSURE, OUTCOME]);
    writer.write_record(&header).map_err(csv_error)?;
    for r in cohort.records() {
        let mut row: Vec<&str> = cohort
            .covariates()
            .iter()
            .map(|c| r.covariates[c].as_str())
            .collect();
        row.push(match r.source {
            Source::Experimental => "experimental",
            Source::Observational => "observational",
        });
        row.push(match r.exposure {
            Exposure::Treatment => "t",
            Exposure::Control => "c",
        });
        row.push(if r.survived { "y" } else { "y'" });
        writer.write_record(&row).map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

// ---------------------------------------------------------------------------
// Reports

/// A number in machine output: exact value, float and display form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Number {
    pub exact: String,
    pub value: f64,
    pub display: String,
}

impl Number {
    pub fn of(x: &Rational) -> Self {
        let value = to_f64(x);
        Self {
            exact: to_exact_string(x),
            value,
            display: display(value),
        }
    }

    pub fn rational(&self) -> Result<Rational> {
        parse_exact(&self.exact).ok_or_else(|| Error::Value {
            field: "exact".into(),
            message: format!("`{}` is not a rational", self.exact),
        })
    }

    fn percent(&self) -> String {
        format!("{:.1}%", self.value * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalDoc {
    pub lower: Number,
    pub upper: Number,
    pub point: bool,
}

impl IntervalDoc {
    fn display(&self) -> String {
        if self.point {
            self.lower.display.clone()
        } else {
            format!("[{}, {}]", self.lower.display, self.upper.display)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub label: String,
    pub value: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub scope: String,
    /// Absent when the studies are incompatible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalDoc>,
    /// Max/min of the arguments before any compatibility check.
    pub raw_lower: Number,
    pub raw_upper: Number,
    pub lower_terms: Vec<TermDoc>,
    pub upper_terms: Vec<TermDoc>,
    pub binding_lower: Vec<String>,
    pub binding_upper: Vec<String>,
}

impl BoundsDoc {
    fn of(b: &ScopeBounds) -> Self {
        let d: &BoundDerivation = &b.derivation;
        let terms = |ts: &[crate::bounds::BoundTerm]| {
            ts.iter()
                .map(|t| TermDoc {
                    label: t.label.to_string(),
                    value: Number::of(&t.value),
                })
                .collect()
        };
        Self {
            scope: d.scope.name().to_string(),
            interval: b.interval.as_ref().map(|i| IntervalDoc {
                lower: Number::of(i.lower()),
                upper: Number::of(i.upper()),
                point: i.is_point(),
            }),
            raw_lower: Number::of(&d.lower),
            raw_upper: Number::of(&d.upper),
            lower_terms: terms(&d.lower_terms),
            upper_terms: terms(&d.upper_terms),
            binding_lower: d.binding_lower().into_iter().map(String::from).collect(),
            binding_upper: d.binding_upper().into_iter().map(String::from).collect(),
        }
    }

    fn display(&self) -> String {
        self.interval
            .as_ref()
            .map(IntervalDoc::display)
            .unwrap_or_else(|| {
                format!(
                    "undefined (studies incompatible; raw max/min {}, {})",
                    self.raw_lower.display, self.raw_upper.display
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experimental: Option<ExperimentalSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observational: Option<ObservationalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityNumbers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yt: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yc: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_t: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y_given_t: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y_given_c: Option<Number>,
    /// Observational survival rate P(y).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y: Option<Number>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViolationDoc {
    pub constraint: String,
    pub shortfall: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatibilityDoc {
    pub compatible: bool,
    pub violations: Vec<ViolationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NecessaryDoc {
    pub passes: bool,
    /// P(y_t) - P(y)
    pub treated_margin: Number,
    /// P(y) - P(y_c)
    pub control_margin: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityDoc {
    /// `guaranteed`, `ruled_out` or `undetermined`.
    pub status: String,
    pub scope: String,
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub necessary: Option<NecessaryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NntValue {
    /// `"p/q"` or `"inf"`.
    pub exact: String,
    /// `None` when infinite.
    pub value: Option<f64>,
    pub display: String,
    /// Whole persons, rounded up.
    pub persons: Option<u64>,
}

impl NntValue {
    fn of(n: &Nnt) -> Self {
        Self {
            exact: n.exact_string(),
            value: match n {
                Nnt::Finite(_) => Some(n.to_f64()),
                Nnt::Infinite => None,
            },
            display: n.to_string(),
            persons: n.persons(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NntDoc {
    pub lower: NntValue,
    pub upper: NntValue,
    /// The classic `1 / CATE`, absent when CATE <= 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classic: Option<Number>,
}

impl NntDoc {
    fn of(n: &NntInterval, classic: Option<&Rational>) -> Self {
        Self {
            lower: NntValue::of(&n.lower),
            upper: NntValue::of(&n.upper),
            classic: classic.map(Number::of),
        }
    }

    fn display(&self) -> String {
        let persons = |v: &NntValue| {
            v.persons
                .map(|p| p.to_string())
                .unwrap_or_else(|| "no finite number of".into())
        };
        if self.lower.exact == self.upper.exact {
            format!("{} (treat {} persons to save one)", self.lower.display, persons(&self.lower))
        } else {
            format!(
                "[{}, {}] (treat {} to {} persons to save one)",
                self.lower.display,
                self.upper.display,
                persons(&self.lower),
                persons(&self.upper)
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub policy: String,
    /// `point`, `best_case` or `worst_case`.
    pub case: String,
    pub treated_fraction: Number,
    pub survival: Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit_per_treated: Option<Number>,
    pub harmed_avoided: Number,
    pub incremental_survival: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumDocument {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<CountsDoc>,
    pub probabilities: ProbabilityNumbers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compatibility: Option<CompatibilityDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cate: Option<Number>,
    /// Scope the headline `P(benefit)`/`P(harm)` lines use.
    pub headline_scope: String,
    pub benefit: Vec<BoundsDoc>,
    pub harm: Vec<BoundsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<MonotonicityDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nnt: Option<NntDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<PolicyDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub input_sha256: String,
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub version: u64,
    pub provenance: Provenance,
    pub strata: Vec<StratumDocument>,
}

/// How much of each stratum report goes into the document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// Bounds only, optionally restricted to one scope.
    Bounds(Option<EvidenceScope>),
    /// Everything: bounds, monotonicity, NNT and policies.
    Full,
}

impl ReportKind {
    fn command(self) -> &'static str {
        match self {
            ReportKind::Bounds(_) => "bounds",
            ReportKind::Full => "report",
        }
    }
}

fn monotonicity_status(m: Monotonicity) -> &'static str {
    match m {
        Monotonicity::Guaranteed => "guaranteed",
        Monotonicity::RuledOut => "ruled_out",
        Monotonicity::Undetermined => "undetermined",
    }
}

fn stratum_document(r: &StratumReport, kind: ReportKind) -> Result<StratumDocument> {
    let p = &r.probabilities;
    let num = |x: Option<&Rational>| x.map(Number::of);
    let keep = |b: &&ScopeBounds| match kind {
        ReportKind::Bounds(Some(scope)) => b.scope() == scope,
        _ => true,
    };
    let benefit: Vec<BoundsDoc> = r.benefit.iter().filter(keep).map(BoundsDoc::of).collect();
    let harm: Vec<BoundsDoc> = r.harm.iter().filter(keep).map(BoundsDoc::of).collect();
    let headline_scope = match kind {
        ReportKind::Bounds(Some(scope)) => {
            if benefit.is_empty() {
                return Err(Error::MissingField(if scope.uses_experimental() && !p.has_experimental() {
                    "experimental study"
                } else {
                    "observational study"
                }));
            }
            scope
        }
        _ => r.headline_scope,
    };
    let full = kind == ReportKind::Full;
    let counts = (r.experimental_counts.is_some() || r.observational_counts.is_some()).then_some({
        CountsDoc {
            experimental: r.experimental_counts,
            observational: r.observational_counts,
        }
    });
    let obs = p.observational();
    Ok(StratumDocument {
        key: r.key.clone(),
        counts,
        probabilities: ProbabilityNumbers {
            p_yt: num(p.experimental().map(|e| &e.p_yt)),
            p_yc: num(p.experimental().map(|e| &e.p_yc)),
            p_t: num(obs.map(|o| &o.p_t)),
            p_y_given_t: num(obs.and_then(|o| o.p_y_given_t.as_ref())),
            p_y_given_c: num(obs.and_then(|o| o.p_y_given_c.as_ref())),
            p_y: obs.map(|o| Number::of(&o.joint_cells().outcome())),
        },
        compatibility: (p.has_experimental() && p.has_observational()).then(|| CompatibilityDoc {
            compatible: r.compatibility.compatible,
            violations: r
                .compatibility
                .violations
                .iter()
                .map(|v| ViolationDoc {
                    constraint: v.constraint.label().to_string(),
                    shortfall: Number::of(&v.shortfall),
                })
                .collect(),
        }),
        cate: num(r.cate.as_ref()),
        headline_scope: headline_scope.name().to_string(),
        benefit,
        harm,
        monotonicity: full.then(|| MonotonicityDoc {
            status: monotonicity_status(r.monotonicity.status).to_string(),
            scope: r.monotonicity.scope.name().to_string(),
            evidence: r.monotonicity.evidence.iter().map(|e| e.to_string()).collect(),
            necessary: r.necessary.as_ref().map(|n| NecessaryDoc {
                passes: n.passes,
                treated_margin: Number::of(&n.treated_margin),
                control_margin: Number::of(&n.control_margin),
            }),
        }),
        nnt: if full {
            r.nnt.as_ref().map(|n| NntDoc::of(n, r.nnt_classic.as_ref()))
        } else {
            None
        },
        policies: if full {
            r.policies
                .iter()
                .map(|l| PolicyDoc {
                    policy: l.report.policy.name().to_string(),
                    case: serde_json::to_value(l.case)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                    treated_fraction: Number::of(&l.report.treated_fraction),
                    survival: Number::of(&l.report.survival),
                    benefit_per_treated: num(l.report.benefit_per_treated.as_ref()),
                    harmed_avoided: Number::of(&l.report.harmed_avoided),
                    incremental_survival: Number::of(&l.report.incremental_survival),
                })
                .collect()
        } else {
            Vec::new()
        },
    })
}

/// Assembles the machine-readable document; `input` is hashed for provenance.
pub fn build_report(reports: &[StratumReport], kind: ReportKind, input: &[u8]) -> Result<ReportDocument> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut sorted: Vec<&StratumReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let strata = sorted
        .into_iter()
        .map(|r| stratum_document(r, kind))
        .collect::<Result<Vec<_>>>()?;
    let used: BTreeSet<&str> = strata
        .iter()
        .flat_map(|s| s.benefit.iter().map(|b| b.scope.as_str()))
        .collect();
    let scopes = EvidenceScope::ALL
        .iter()
        .map(|s| s.name())
        .filter(|s| used.contains(s))
        .map(String::from)
        .collect();
    Ok(ReportDocument {
        version: FORMAT_VERSION,
        provenance: Provenance {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: kind.command().to_string(),
            input_sha256: sha256_hex(input),
            scopes,
        },
        strata,
    })
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        to_pretty_json(self)
    }

    pub fn stratum(&self, key: &str) -> Option<&StratumDocument> {
        self.strata.iter().find(|s| s.key == key)
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<ReportDocument> {
    parse_versioned(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

/// Builds and renders a report in one step.
pub fn emit_report(
    reports: &[StratumReport],
    kind: ReportKind,
    input: &[u8],
    format: OutputFormat,
) -> Result<String> {
    let doc = build_report(reports, kind, input)?;
    Ok(match format {
        OutputFormat::Json => doc.to_json(),
        OutputFormat::Text => render_text(&doc),
    })
}

fn arm_text(arm: &ArmCounts) -> String {
    format!("{}/{} survived", arm.survivors, arm.total())
}

fn render_stratum(out: &mut String, s: &StratumDocument) {
    let _ = writeln!(out, "== {} ==", s.key);
    if let Some(c) = &s.counts {
        if let Some(e) = &c.experimental {
            let _ = writeln!(
                out,
                "Trial: treated {}, control {}",
                arm_text(&e.treated),
                arm_text(&e.control)
            );
        }
        if let Some(o) = &c.observational {
            let _ = writeln!(
                out,
                "Observational: chose treatment {}, chose control {}",
                arm_text(&o.chose_treatment),
                arm_text(&o.chose_control)
            );
        }
    }
    let p = &s.probabilities;
    let rates: Vec<String> = [
        ("P(y_t)", &p.p_yt),
        ("P(y_c)", &p.p_yc),
        ("P(t)", &p.p_t),
        ("P(y|t)", &p.p_y_given_t),
        ("P(y|c)", &p.p_y_given_c),
        ("P(y)", &p.p_y),
    ]
    .into_iter()
    .filter_map(|(name, v)| v.as_ref().map(|v| format!("{name} = {}", v.display)))
    .collect();
    let _ = writeln!(out, "{}", rates.join(", "));
    if let Some(cate) = &s.cate {
        let _ = writeln!(out, "CATE: {}", cate.display);
    }
    if let Some(c) = &s.compatibility {
        if c.compatible {
            let _ = writeln!(out, "Studies: compatible");
        } else {
            let parts: Vec<String> = c
                .violations
                .iter()
                .map(|v| format!("{} violated by {}", v.constraint, v.shortfall.display))
                .collect();
            let _ = writeln!(out, "Studies: INCOMPATIBLE ({})", parts.join("; "));
        }
    }

    let headline = |list: &[BoundsDoc]| {
        list.iter()
            .find(|b| b.scope == s.headline_scope)
            .map(BoundsDoc::display)
            .unwrap_or_default()
    };
    let _ = writeln!(out, "P(benefit): {}", headline(&s.benefit));
    let _ = writeln!(out, "P(harm): {}", headline(&s.harm));

    let _ = writeln!(out, "Bounds by evidence scope:");
    for (b, h) in s.benefit.iter().zip(&s.harm) {
        let _ = writeln!(
            out,
            "  {:<20} benefit {:<24} harm {}",
            b.scope,
            b.display(),
            h.display()
        );
    }
    let _ = writeln!(out, "Binding arguments ({}):", s.headline_scope);
    for (name, list) in [("benefit", &s.benefit), ("harm", &s.harm)] {
        if let Some(b) = list.iter().find(|b| b.scope == s.headline_scope) {
            let _ = writeln!(
                out,
                "  {name} lower {} from {}; upper {} from {}",
                b.raw_lower.display,
                b.binding_lower.join(" = "),
                b.raw_upper.display,
                b.binding_upper.join(" = ")
            );
        }
    }

    if let Some(m) = &s.monotonicity {
        let _ = writeln!(out, "Monotonicity (no unit harmed): {}", m.status.replace('_', " "));
        if let Some(n) = &m.necessary {
            let _ = writeln!(
                out,
                "  P(y_t) >= P(y) >= P(y_c): {} (margins {}, {})",
                if n.passes { "holds" } else { "fails" },
                n.treated_margin.display,
                n.control_margin.display
            );
        }
        for e in &m.evidence {
            let _ = writeln!(out, "  - {e}");
        }
    }
    if let Some(n) = &s.nnt {
        let _ = writeln!(out, "NNT: {}", n.display());
        match &n.classic {
            Some(c) => {
                let _ = writeln!(out, "Classic 1/CATE: {}", c.display);
            }
            None => {
                let _ = writeln!(out, "Classic 1/CATE: undefined (CATE <= 0)");
            }
        }
    }
    let mut case = "";
    for pol in &s.policies {
        if pol.case != case {
            case = &pol.case;
            let _ = writeln!(out, "Policies ({}):", case.replace('_', " "));
        }
        let mut line = format!(
            "  {}: treats {}, survival {}, incremental survivors {}",
            pol.policy,
            pol.treated_fraction.percent(),
            pol.survival.percent(),
            pol.incremental_survival.percent()
        );
        if let Some(c) = &pol.benefit_per_treated {
            let _ = write!(line, ", cure rate among treated {}", c.percent());
        }
        if pol.harmed_avoided.value > 0.0 {
            let _ = write!(line, ", harm avoided {}", pol.harmed_avoided.percent());
        }
        let _ = writeln!(out, "{line}");
    }
}

/// Human-readable rendering.
pub fn render_text(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        doc.provenance.tool, doc.provenance.tool_version, doc.provenance.command
    );
    let _ = writeln!(out, "input sha256: {}", doc.provenance.input_sha256);
    let _ = writeln!(out, "scopes: {}", doc.provenance.scopes.join(", "));
    for s in &doc.strata {
        out.push('\n');
        render_stratum(&mut out, s);
    }
    out
}

// ---------------------------------------------------------------------------
// Screening output

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumWidth {
    pub key: String,
    pub benefit_width: Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit: Option<IntervalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harm: Option<IntervalDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDoc {
    pub feature: String,
    pub mean_width: Number,
    pub width_reduction: Number,
    pub max_harm_lower: (String, Number),
    pub min_harm_upper: (String, Number),
    pub strata: Vec<StratumWidth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkippedDoc {
    pub feature: String,
    pub undersized: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenDocument {
    pub version: u64,
    pub provenance: Provenance,
    pub min_arm: u64,
    pub pooled_width: Number,
    pub ranked: Vec<FeatureDoc>,
    pub skipped: Vec<SkippedDoc>,
}

fn interval_doc(i: &crate::bounds::Interval) -> IntervalDoc {
    IntervalDoc {
        lower: Number::of(i.lower()),
        upper: Number::of(i.upper()),
        point: i.is_point(),
    }
}

pub fn build_screen_document(result: &FeatureScreenResult, min_arm: u64, input: &[u8]) -> ScreenDocument {
    ScreenDocument {
        version: FORMAT_VERSION,
        provenance: Provenance {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: "screen".into(),
            input_sha256: sha256_hex(input),
            scopes: vec![EvidenceScope::Combined.name().to_string()],
        },
        min_arm,
        pooled_width: Number::of(&result.pooled_width),
        ranked: result
            .ranked
            .iter()
            .map(|f| FeatureDoc {
                feature: f.feature.clone(),
                mean_width: Number::of(&f.mean_width),
                width_reduction: Number::of(&f.width_reduction),
                max_harm_lower: (f.max_harm_lower.0.clone(), Number::of(&f.max_harm_lower.1)),
                min_harm_upper: (f.min_harm_upper.0.clone(), Number::of(&f.min_harm_upper.1)),
                strata: f
                    .strata
                    .values()
                    .map(|r| StratumWidth {
                        key: r.key.clone(),
                        benefit_width: Number::of(&r.benefit_width()),
                        benefit: r.benefit_interval().map(interval_doc),
                        harm: r.harm_interval().map(interval_doc),
                    })
                    .collect(),
            })
            .collect(),
        skipped: result
            .skipped
            .iter()
            .map(|s| SkippedDoc {
                feature: s.feature.clone(),
                undersized: s.undersized.clone(),
            })
            .collect(),
    }
}

impl ScreenDocument {
    pub fn to_json(&self) -> String {
        to_pretty_json(self)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} screen", self.provenance.tool, self.provenance.tool_version);
        let _ = writeln!(out, "input sha256: {}", self.provenance.input_sha256);
        let _ = writeln!(out, "pooled benefit-bound width: {}", self.pooled_width.display);
        let _ = writeln!(out, "minimum arm size: {}", self.min_arm);
        if self.ranked.is_empty() {
            let _ = writeln!(out, "no features ranked");
        }
        for (rank, f) in self.ranked.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}. {}: mean width {} (reduction {}); highest harm lower bound {} in {}; lowest harm upper bound {} in {}",
                rank + 1,
                f.feature,
                f.mean_width.display,
                f.width_reduction.display,
                f.max_harm_lower.1.display,
                f.max_harm_lower.0,
                f.min_harm_upper.1.display,
                f.min_harm_upper.0
            );
            for s in &f.strata {
                let show = |i: &Option<IntervalDoc>| {
                    i.as_ref()
                        .map(IntervalDoc::display)
                        .unwrap_or_else(|| "undefined".into())
                };
                let _ = writeln!(
                    out,
                    "   {}: benefit {}, harm {}",
                    s.key,
                    show(&s.benefit),
                    show(&s.harm)
                );
            }
        }
        for s in &self.skipped {
            let _ = writeln!(
                out,
                "skipped {}: undersized strata {}",
                s.feature,
                if s.undersized.is_empty() {
                    "(empty arm)".to_string()
                } else {
                    s.undersized.join(", ")
                }
            );
        }
        out
    }
}
