//! Per-subpopulation analysis and covariate screening.
//!
//! A [`CohortDataset`] holds unit-level records from both studies. Grouping
//! the records by one or more categorical covariates yields per-stratum
//! counts, and every stratum gets the full [`StratumReport`]. Screening asks
//! which covariate, once stratified on, leaves the narrowest benefit bounds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::bounds::{ate, derivation, BoundDerivation, EvidenceScope, Interval, Target};
use crate::decision::{
    monotonicity_necessary, monotonicity_verdict, nnt_classic, nnt_from_benefit, policy_value,
    MonotonicityVerdict, NecessaryTest, NntInterval, Policy, PolicyReport,
};
use crate::error::{Error, Result};
use crate::num::{ratio, Rational};
use crate::study::{
    ArmCounts, CompatibilityVerdict, ExperimentalSummary, ObservationalSummary, StudyProbabilities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Experimental,
    Observational,
}

/// Assigned (trial) or chosen (observational) treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exposure {
    #[serde(rename = "t")]
    Treatment,
    #[serde(rename = "c")]
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortRecord {
    pub covariates: BTreeMap<String, String>,
    pub source: Source,
    pub exposure: Exposure,
    pub survived: bool,
}

/// Unit-level records from both studies sharing one set of categorical
/// covariates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CohortDataset {
    covariates: Vec<String>,
    records: Vec<CohortRecord>,
}

impl CohortDataset {
    pub fn new(covariates: Vec<String>) -> Self {
        Self {
            covariates,
            records: Vec::new(),
        }
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn records(&self) -> &[CohortRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: CohortRecord) -> Result<()> {
        for name in &self.covariates {
            if !record.covariates.contains_key(name) {
                return Err(Error::Value {
                    field: name.clone(),
                    message: format!("record {} lacks covariate", self.records.len()),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    fn check_features(&self, features: &[String]) -> Result<()> {
        for f in features {
            if !self.covariates.contains(f) {
                return Err(Error::Value {
                    field: f.clone(),
                    message: "not a covariate of this cohort".into(),
                });
            }
        }
        Ok(())
    }

    /// Counts for the whole cohort.
    pub fn summaries(&self) -> (ExperimentalSummary, ObservationalSummary) {
        let mut exp = ExperimentalSummary::default();
        let mut obs = ObservationalSummary::default();
        for r in &self.records {
            tally(&mut exp, &mut obs, r);
        }
        (exp, obs)
    }

    /// Counts per stratum, keyed `feature=value[,feature=value...]`.
    pub fn partition(
        &self,
        features: &[String],
    ) -> Result<BTreeMap<String, (ExperimentalSummary, ObservationalSummary)>> {
        self.check_features(features)?;
        let mut out: BTreeMap<String, (ExperimentalSummary, ObservationalSummary)> =
            BTreeMap::new();
        for r in &self.records {
            let key = stratum_key(features, &r.covariates);
            let (exp, obs) = out.entry(key).or_default();
            tally(exp, obs, r);
        }
        Ok(out)
    }
}

fn tally(exp: &mut ExperimentalSummary, obs: &mut ObservationalSummary, r: &CohortRecord) {
    let arm: &mut ArmCounts = match (r.source, r.exposure) {
        (Source::Experimental, Exposure::Treatment) => &mut exp.treated,
        (Source::Experimental, Exposure::Control) => &mut exp.control,
        (Source::Observational, Exposure::Treatment) => &mut obs.chose_treatment,
        (Source::Observational, Exposure::Control) => &mut obs.chose_control,
    };
    arm.record(r.survived);
}

fn stratum_key(features: &[String], covariates: &BTreeMap<String, String>) -> String {
    if features.is_empty() {
        return "all".into();
    }
    features
        .iter()
        .map(|f| format!("{f}={}", covariates[f]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Bounds for one target under one scope. `interval` is `None` when the
/// combined data is incompatible; the raw derivation is always kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeBounds {
    pub derivation: BoundDerivation,
    pub interval: Option<Interval>,
}

impl ScopeBounds {
    pub fn scope(&self) -> EvidenceScope {
        self.derivation.scope
    }
}

/// Which end of a bound interval a policy was valued at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyCase {
    /// Benefit and harm are point identified.
    Point,
    /// Upper benefit endpoint.
    BestCase,
    /// Lower benefit endpoint.
    WorstCase,
}

impl fmt::Display for PolicyCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyCase::Point => "point",
            PolicyCase::BestCase => "best case",
            PolicyCase::WorstCase => "worst case",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyLine {
    pub case: PolicyCase,
    pub report: PolicyReport,
}

/// Everything derivable for one subpopulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumReport {
    pub key: String,
    pub experimental_counts: Option<ExperimentalSummary>,
    pub observational_counts: Option<ObservationalSummary>,
    pub probabilities: StudyProbabilities,
    pub compatibility: CompatibilityVerdict,
    /// P(y_t) - P(y_c), when the trial is present.
    pub cate: Option<Rational>,
    pub benefit: Vec<ScopeBounds>,
    pub harm: Vec<ScopeBounds>,
    pub necessary: Option<NecessaryTest>,
    pub monotonicity: MonotonicityVerdict,
    /// Scope the headline numbers (NNT, policies) come from.
    pub headline_scope: EvidenceScope,
    pub nnt: Option<NntInterval>,
    pub nnt_classic: Option<Rational>,
    pub policies: Vec<PolicyLine>,
}

impl StratumReport {
    pub fn benefit_for(&self, scope: EvidenceScope) -> Option<&ScopeBounds> {
        self.benefit.iter().find(|b| b.scope() == scope)
    }

    pub fn harm_for(&self, scope: EvidenceScope) -> Option<&ScopeBounds> {
        self.harm.iter().find(|b| b.scope() == scope)
    }

    /// Headline benefit interval.
    pub fn benefit_interval(&self) -> Option<&Interval> {
        self.benefit_for(self.headline_scope)?.interval.as_ref()
    }

    pub fn harm_interval(&self) -> Option<&Interval> {
        self.harm_for(self.headline_scope)?.interval.as_ref()
    }

    pub fn policy(&self, policy: Policy, case: PolicyCase) -> Option<&PolicyReport> {
        self.policies
            .iter()
            .find(|l| l.case == case && l.report.policy == policy)
            .map(|l| &l.report)
    }

    /// Raw width of the headline benefit bounds, zero when they cross.
    pub fn benefit_width(&self) -> Rational {
        self.benefit_for(self.headline_scope)
            .map(|b| b.derivation.raw_width())
            .unwrap_or_else(crate::num::one)
    }
}

fn scope_bounds(
    p: &StudyProbabilities,
    scope: EvidenceScope,
    target: Target,
    compatible: bool,
) -> Result<ScopeBounds> {
    let derivation = derivation(p, scope, target)?;
    let interval = if scope == EvidenceScope::Combined && !compatible {
        None
    } else {
        Some(derivation.interval()?)
    };
    Ok(ScopeBounds {
        derivation,
        interval,
    })
}

/// Full pipeline for directly supplied probabilities.
pub fn analyze_probabilities(label: &str, p: StudyProbabilities) -> Result<StratumReport> {
    let compatibility = p.check_compatibility();
    let scopes: Vec<EvidenceScope> = EvidenceScope::ALL
        .into_iter()
        .filter(|s| s.is_available(&p))
        .collect();
    let mut benefit = Vec::new();
    let mut harm = Vec::new();
    for &scope in &scopes {
        benefit.push(scope_bounds(&p, scope, Target::Benefit, compatibility.compatible)?);
        harm.push(scope_bounds(&p, scope, Target::Harm, compatibility.compatible)?);
    }
    let headline_scope = EvidenceScope::best_available(&p);
    let cate = ate(&p).ok();
    let necessary = if p.has_experimental() && p.has_observational() {
        Some(monotonicity_necessary(&p)?)
    } else {
        None
    };
    let monotonicity = monotonicity_verdict(&p)?;
    let headline = benefit
        .iter()
        .find(|b| b.scope() == headline_scope)
        .and_then(|b| b.interval.clone());
    let nnt = headline.as_ref().map(nnt_from_benefit);
    let nnt_classic = cate.as_ref().and_then(nnt_classic);

    let mut policies = Vec::new();
    if let (Some(interval), Some(ate), Ok(p_yc)) = (&headline, &cate, p.p_yc()) {
        let cases: Vec<(PolicyCase, &Rational)> = if interval.is_point() {
            vec![(PolicyCase::Point, interval.lower())]
        } else {
            vec![
                (PolicyCase::BestCase, interval.upper()),
                (PolicyCase::WorstCase, interval.lower()),
            ]
        };
        for (case, b) in cases {
            let h = b - ate;
            for policy in Policy::ALL {
                policies.push(PolicyLine {
                    case,
                    report: policy_value(b, &h, p_yc, policy)?,
                });
            }
        }
    }

    Ok(StratumReport {
        key: label.to_string(),
        experimental_counts: None,
        observational_counts: None,
        probabilities: p,
        compatibility,
        cate,
        benefit,
        harm,
        necessary,
        monotonicity,
        headline_scope,
        nnt,
        nnt_classic,
        policies,
    })
}

/// Full pipeline for one stratum's counts.
pub fn analyze_stratum(
    exp: &ExperimentalSummary,
    obs: &ObservationalSummary,
    label: &str,
) -> Result<StratumReport> {
    analyze_counts(Some(exp), Some(obs), label)
}

/// Like [`analyze_stratum`] but either study may be missing.
pub fn analyze_counts(
    exp: Option<&ExperimentalSummary>,
    obs: Option<&ObservationalSummary>,
    label: &str,
) -> Result<StratumReport> {
    let p = StudyProbabilities::from_optional_counts(exp, obs)?;
    let mut report = analyze_probabilities(label, p)?;
    report.experimental_counts = exp.copied();
    report.observational_counts = obs.copied();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortAnalysis {
    pub strata: BTreeMap<String, StratumReport>,
    pub pooled: StratumReport,
}

fn check_arms(key: &str, exp: &ExperimentalSummary, obs: &ObservationalSummary) -> Result<()> {
    let empty = |arm: &str| Error::EmptyStratumArm {
        stratum: key.to_string(),
        arm: arm.to_string(),
    };
    if exp.treated.is_empty() {
        return Err(empty("experimental treated"));
    }
    if exp.control.is_empty() {
        return Err(empty("experimental control"));
    }
    if obs.total() == 0 {
        return Err(empty("observational"));
    }
    Ok(())
}

/// Reports for every stratum of `stratify_by` plus the pooled cohort.
pub fn analyze_all(cohort: &CohortDataset, stratify_by: &[String]) -> Result<CohortAnalysis> {
    let parts = cohort.partition(stratify_by)?;
    let mut strata = BTreeMap::new();
    for (key, (exp, obs)) in &parts {
        check_arms(key, exp, obs)?;
        strata.insert(key.clone(), analyze_stratum(exp, obs, key)?);
    }
    let (exp, obs) = cohort.summaries();
    check_arms("all", &exp, &obs)?;
    let pooled = analyze_stratum(&exp, &obs, "all")?;
    Ok(CohortAnalysis { strata, pooled })
}

/// Default minimum size of each experimental arm and of the observational
/// study within every stratum.
pub const DEFAULT_MIN_ARM: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureScore {
    pub feature: String,
    /// Stratum-size weighted mean of the combined benefit-bound width.
    pub mean_width: Rational,
    /// Pooled width minus `mean_width`; may be negative.
    pub width_reduction: Rational,
    /// Stratum with the highest harm lower bound, and that bound.
    pub max_harm_lower: (String, Rational),
    /// Stratum with the lowest harm upper bound, and that bound.
    pub min_harm_upper: (String, Rational),
    pub strata: BTreeMap<String, StratumReport>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFeature {
    pub feature: String,
    /// Strata whose arms fall below the minimum size.
    pub undersized: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureScreenResult {
    pub pooled_width: Rational,
    /// Ascending by `mean_width`, ties by feature name.
    pub ranked: Vec<FeatureScore>,
    pub skipped: Vec<SkippedFeature>,
}

fn stratum_size(exp: &ExperimentalSummary, obs: &ObservationalSummary) -> u64 {
    exp.treated.total() + exp.control.total() + obs.total()
}

/// Ranks candidate covariates by how narrow the combined benefit bounds get
/// once the cohort is split on them. A feature with a stratum whose
/// experimental arms or observational study fall below `min_arm` units is
/// skipped and listed. A single observational arm may be small or empty.
pub fn screen_features(
    cohort: &CohortDataset,
    candidates: &[String],
    min_arm: u64,
) -> Result<FeatureScreenResult> {
    let (exp, obs) = cohort.summaries();
    check_arms("all", &exp, &obs)?;
    let pooled_width = analyze_stratum(&exp, &obs, "all")?.benefit_width();

    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    let unique: BTreeSet<&String> = candidates.iter().collect();
    for feature in unique {
        let parts = cohort.partition(std::slice::from_ref(feature))?;
        let undersized: Vec<String> = parts
            .iter()
            .filter(|(_, (e, o))| {
                e.treated.total() < min_arm || e.control.total() < min_arm || o.total() < min_arm
            })
            .map(|(k, _)| k.clone())
            .collect();
        if !undersized.is_empty()
            || parts
                .iter()
                .any(|(k, (e, o))| check_arms(k, e, o).is_err())
        {
            skipped.push(SkippedFeature {
                feature: feature.clone(),
                undersized,
            });
            continue;
        }

        let mut strata = BTreeMap::new();
        let mut weighted = Rational::zero();
        let mut total = 0u64;
        for (key, (e, o)) in &parts {
            let report = analyze_stratum(e, o, key)?;
            let size = stratum_size(e, o);
            weighted += report.benefit_width() * ratio(size, 1);
            total += size;
            strata.insert(key.clone(), report);
        }
        let mean_width = weighted / ratio(total, 1);
        let harm_of = |r: &StratumReport| r.harm_for(r.headline_scope).map(|h| h.derivation.clone());
        let mut max_harm_lower: Option<(String, Rational)> = None;
        let mut min_harm_upper: Option<(String, Rational)> = None;
        for (key, report) in &strata {
            if let Some(h) = harm_of(report) {
                if max_harm_lower.as_ref().is_none_or(|(_, v)| h.lower > *v) {
                    max_harm_lower = Some((key.clone(), h.lower.clone()));
                }
                if min_harm_upper.as_ref().is_none_or(|(_, v)| h.upper < *v) {
                    min_harm_upper = Some((key.clone(), h.upper.clone()));
                }
            }
        }
        ranked.push(FeatureScore {
            feature: feature.clone(),
            width_reduction: &pooled_width - &mean_width,
            mean_width,
            max_harm_lower: max_harm_lower.expect("at least one stratum"),
            min_harm_upper: min_harm_upper.expect("at least one stratum"),
            strata,
        });
    }
    ranked.sort_by(|a, b| {
        a.mean_width
            .cmp(&b.mean_width)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(FeatureScreenResult {
        pooled_width,
        ranked,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Monotonicity;
    use crate::num::{parse_decimal, zero};
    use crate::tables;

    fn dec(s: &str) -> Rational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn female_report() {
        let (e, o) = tables::female_counts();
        let r = analyze_stratum(&e, &o, "female").unwrap();
        assert_eq!(r.benefit_interval(), Some(&Interval::point(dec("0.279")).unwrap()));
        assert_eq!(r.harm_interval(), Some(&Interval::point(zero()).unwrap()));
        assert_eq!(r.monotonicity.status, Monotonicity::Guaranteed);
        let nnt = r.nnt.as_ref().unwrap();
        assert!((nnt.lower.to_f64() - 3.584).abs() < 1e-3);
        assert_eq!(r.benefit.len(), 3);
        let stratum_only = r.policy(Policy::TreatStratumOnly, PolicyCase::Point).unwrap();
        assert_eq!(stratum_only.benefit_per_treated, Some(dec("0.279")));
    }

    #[test]
    fn male_report() {
        let (e, o) = tables::male_counts();
        let r = analyze_stratum(&e, &o, "male").unwrap();
        assert_eq!(r.benefit_interval(), Some(&Interval::point(dec("0.49")).unwrap()));
        assert_eq!(r.harm_interval(), Some(&Interval::point(dec("0.21")).unwrap()));
        assert_eq!(r.monotonicity.status, Monotonicity::RuledOut);
        let cate = r.cate.clone().unwrap();
        let b = r.benefit_interval().unwrap().lower().clone();
        let h = r.harm_interval().unwrap().lower().clone();
        assert_eq!(b - h, cate);
        let excl = r.policy(Policy::ExcludeHarmedMarker, PolicyCase::Point).unwrap();
        assert_eq!(excl.survival, dec("0.7"));
    }

    #[test]
    fn null_effect_stratum() {
        let half = dec("0.5");
        let p = StudyProbabilities::new(half.clone(), half.clone(), half.clone(), half.clone(), half.clone())
            .unwrap();
        let r = analyze_probabilities("null", p.clone()).unwrap();
        let expected = Interval::new(zero(), half.clone()).unwrap();
        assert_eq!(r.benefit_interval(), Some(&expected));
        assert_eq!(r.harm_interval(), Some(&expected));
        // best/worst case policies when bounds do not collapse
        assert!(r.policy(Policy::TreatAll, PolicyCase::BestCase).is_some());
        assert!(r.policy(Policy::TreatAll, PolicyCase::WorstCase).is_some());
        let oracle =
            crate::oracle::oracle_bounds(&p, EvidenceScope::Combined, Target::Benefit).unwrap();
        assert_eq!(oracle, expected);
    }

    #[test]
    fn incompatible_stratum_keeps_raw_derivation() {
        let p = StudyProbabilities::new(dec("0.9"), dec("0.5"), dec("0.1"), dec("0.5"), dec("0.5"))
            .unwrap();
        let r = analyze_probabilities("bad", p).unwrap();
        assert!(!r.compatibility.compatible);
        let combined = r.benefit_for(EvidenceScope::Combined).unwrap();
        assert!(combined.interval.is_none());
        assert!(r.benefit_for(EvidenceScope::ExperimentalOnly).unwrap().interval.is_some());
        assert!(r.policies.is_empty());
        assert!(r.nnt.is_none());
    }

    fn record(sex: &str, source: Source, exposure: Exposure, survived: bool) -> CohortRecord {
        CohortRecord {
            covariates: [("sex".to_string(), sex.to_string()), ("one".to_string(), "x".to_string())]
                .into_iter()
                .collect(),
            source,
            exposure,
            survived,
        }
    }

    fn table_cohort() -> CohortDataset {
        let mut cohort = CohortDataset::new(vec!["sex".into(), "one".into()]);
        for (sex, (e, o)) in [("female", tables::female_counts()), ("male", tables::male_counts())] {
            let arms = [
                (Source::Experimental, Exposure::Treatment, e.treated),
                (Source::Experimental, Exposure::Control, e.control),
                (Source::Observational, Exposure::Treatment, o.chose_treatment),
                (Source::Observational, Exposure::Control, o.chose_control),
            ];
            for (source, exposure, counts) in arms {
                for _ in 0..counts.survivors {
                    cohort.push(record(sex, source, exposure, true)).unwrap();
                }
                for _ in 0..counts.deaths {
                    cohort.push(record(sex, source, exposure, false)).unwrap();
                }
            }
        }
        cohort
    }

    #[test]
    fn stratified_tables_reproduce_reports() {
        let cohort = table_cohort();
        let analysis = analyze_all(&cohort, &["sex".to_string()]).unwrap();
        assert_eq!(analysis.strata.len(), 2);
        let female = &analysis.strata["sex=female"];
        assert_eq!(female.benefit_interval(), Some(&Interval::point(dec("0.279")).unwrap()));
        let male = &analysis.strata["sex=male"];
        assert_eq!(male.harm_interval(), Some(&Interval::point(dec("0.21")).unwrap()));
        assert_eq!(analysis.pooled.cate, Some(dec("0.2795")));
    }

    #[test]
    fn constant_feature_matches_pooled() {
        let cohort = table_cohort();
        let analysis = analyze_all(&cohort, &["one".to_string()]).unwrap();
        assert_eq!(analysis.strata.len(), 1);
        let only = &analysis.strata["one=x"];
        assert_eq!(only.probabilities, analysis.pooled.probabilities);
        assert_eq!(only.benefit, analysis.pooled.benefit);
    }

    #[test]
    fn empty_arm_is_named() {
        let mut cohort = CohortDataset::new(vec!["sex".into(), "one".into()]);
        cohort
            .push(record("f", Source::Experimental, Exposure::Treatment, true))
            .unwrap();
        cohort
            .push(record("f", Source::Observational, Exposure::Treatment, true))
            .unwrap();
        let err = analyze_all(&cohort, &["sex".to_string()]).unwrap_err();
        assert_eq!(
            err,
            Error::EmptyStratumArm {
                stratum: "sex=f".into(),
                arm: "experimental control".into()
            }
        );
        assert!(matches!(
            analyze_all(&cohort, &["age".to_string()]),
            Err(Error::Value { .. })
        ));
    }

    #[test]
    fn missing_covariate_rejected() {
        let mut cohort = CohortDataset::new(vec!["sex".into(), "age".into()]);
        assert!(cohort
            .push(record("f", Source::Experimental, Exposure::Treatment, true))
            .is_err());
    }

    #[test]
    fn screening_prefers_sex_on_exact_tables() {
        let cohort = table_cohort();
        let result =
            screen_features(&cohort, &["one".to_string(), "sex".to_string()], DEFAULT_MIN_ARM)
                .unwrap();
        assert_eq!(result.ranked[0].feature, "sex");
        assert_eq!(result.ranked[0].mean_width, zero());
        assert_eq!(result.ranked[1].mean_width, result.pooled_width);
        assert_eq!(result.ranked[0].max_harm_lower, ("sex=male".to_string(), dec("0.21")));
        assert_eq!(result.ranked[0].min_harm_upper, ("sex=female".to_string(), zero()));

        let empty = screen_features(&cohort, &[], DEFAULT_MIN_ARM).unwrap();
        assert!(empty.ranked.is_empty() && empty.skipped.is_empty());

        let strict = screen_features(&cohort, &["sex".to_string()], 5000).unwrap();
        assert!(strict.ranked.is_empty());
        assert_eq!(strict.skipped[0].undersized.len(), 2);
    }
}
