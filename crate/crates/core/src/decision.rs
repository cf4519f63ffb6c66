//! Monotonicity tests, number-needed-to-treat and policy valuation.

use std::fmt;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bounds::{harm_derivation, EvidenceScope, Interval};
use crate::error::{Error, Result};
use crate::num::{display_rational, one, to_exact_string, to_f64, zero, Rational};
use crate::study::StudyProbabilities;

/// Outcome of `P(y_t) >= P(y) >= P(y_c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NecessaryTest {
    pub passes: bool,
    /// P(y_t) - P(y); negative means violated.
    pub treated_margin: Rational,
    /// P(y) - P(y_c); negative means violated.
    pub control_margin: Rational,
}

/// Which of the degenerate sufficient conditions holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficientCondition {
    /// P(y_c) = 0
    ControlNeverSurvives,
    /// P(y_t) = 1
    TreatedAlwaysSurvive,
    /// P(t,y') = P(c,y) = 0
    ChoiceDeterminesOutcome,
}

impl SufficientCondition {
    pub fn label(self) -> &'static str {
        match self {
            SufficientCondition::ControlNeverSurvives => "P(y_c) = 0",
            SufficientCondition::TreatedAlwaysSurvive => "P(y_t) = 1",
            SufficientCondition::ChoiceDeterminesOutcome => "P(t,y') = P(c,y) = 0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SufficientTest {
    Guaranteed(SufficientCondition),
    Inconclusive,
}

/// `P(y_t) >= P(y) >= P(y_c)`, which every monotone population satisfies.
pub fn monotonicity_necessary(p: &StudyProbabilities) -> Result<NecessaryTest> {
    let (yt, yc) = (p.p_yt()?, p.p_yc()?);
    let y = p.marginal_outcome()?;
    let treated_margin = yt - &y;
    let control_margin = &y - yc;
    Ok(NecessaryTest {
        passes: !treated_margin.is_negative() && !control_margin.is_negative(),
        treated_margin,
        control_margin,
    })
}

/// Conditions that force the harm upper bound to zero when `P(y_t) > P(y_c)`.
/// Reports inconclusive otherwise; the observational condition is only
/// checked when observational data is present.
pub fn monotonicity_sufficient(p: &StudyProbabilities) -> Result<SufficientTest> {
    let (yt, yc) = (p.p_yt()?, p.p_yc()?);
    if yt <= yc {
        return Ok(SufficientTest::Inconclusive);
    }
    if yc.is_zero() {
        return Ok(SufficientTest::Guaranteed(SufficientCondition::ControlNeverSurvives));
    }
    if *yt == one() {
        return Ok(SufficientTest::Guaranteed(SufficientCondition::TreatedAlwaysSurvive));
    }
    if let Ok(cells) = p.joint_cells() {
        if cells.t_not_y.is_zero() && cells.c_y.is_zero() {
            return Ok(SufficientTest::Guaranteed(
                SufficientCondition::ChoiceDeterminesOutcome,
            ));
        }
    }
    Ok(SufficientTest::Inconclusive)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    /// No unit can be harmed.
    Guaranteed,
    /// Some units are certainly harmed.
    RuledOut,
    Undetermined,
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monotonicity::Guaranteed => "guaranteed",
            Monotonicity::RuledOut => "ruled out",
            Monotonicity::Undetermined => "undetermined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonotonicityEvidence {
    Sufficient(SufficientCondition),
    HarmUpperZero,
    NecessaryViolated {
        treated_margin: Rational,
        control_margin: Rational,
    },
    HarmLowerPositive(Rational),
}

impl fmt::Display for MonotonicityEvidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotonicityEvidence::Sufficient(c) => write!(f, "sufficient condition {}", c.label()),
            MonotonicityEvidence::HarmUpperZero => write!(f, "harm upper bound is 0"),
            MonotonicityEvidence::NecessaryViolated {
                treated_margin,
                control_margin,
            } => write!(
                f,
                "P(y_t) >= P(y) >= P(y_c) violated (margins {}, {})",
                display_rational(treated_margin),
                display_rational(control_margin)
            ),
            MonotonicityEvidence::HarmLowerPositive(x) => {
                write!(f, "harm lower bound {} > 0", display_rational(x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotonicityVerdict {
    pub status: Monotonicity,
    pub evidence: Vec<MonotonicityEvidence>,
    pub scope: EvidenceScope,
}

/// Combines the sufficient test, the necessary test and the harm bounds from
/// the richest scope the data supports.
///
/// The harm bounds used here are the raw max/min expressions, so a verdict is
/// still produced for sampled data that is marginally incompatible. If
/// evidence for both outcomes turns up (only possible on incompatible data)
/// the verdict is undetermined.
pub fn monotonicity_verdict(p: &StudyProbabilities) -> Result<MonotonicityVerdict> {
    let scope = EvidenceScope::best_available(p);
    let harm = harm_derivation(p, scope)?;
    let mut for_monotone = Vec::new();
    let mut against = Vec::new();

    if p.has_experimental() {
        if let SufficientTest::Guaranteed(c) = monotonicity_sufficient(p)? {
            for_monotone.push(MonotonicityEvidence::Sufficient(c));
        }
    }
    if !harm.upper.is_positive() {
        for_monotone.push(MonotonicityEvidence::HarmUpperZero);
    }
    if p.has_experimental() && p.has_observational() {
        let nec = monotonicity_necessary(p)?;
        if !nec.passes {
            against.push(MonotonicityEvidence::NecessaryViolated {
                treated_margin: nec.treated_margin,
                control_margin: nec.control_margin,
            });
        }
    }
    if harm.lower.is_positive() {
        against.push(MonotonicityEvidence::HarmLowerPositive(harm.lower.clone()));
    }

    let status = match (for_monotone.is_empty(), against.is_empty()) {
        (false, true) => Monotonicity::Guaranteed,
        (true, false) => Monotonicity::RuledOut,
        _ => Monotonicity::Undetermined,
    };
    let mut evidence = for_monotone;
    evidence.extend(against);
    Ok(MonotonicityVerdict {
        status,
        evidence,
        scope,
    })
}

/// A number-needed-to-treat value; infinite when nobody can benefit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Nnt {
    Finite(Rational),
    Infinite,
}

impl Nnt {
    fn reciprocal_of(x: &Rational) -> Nnt {
        if x.is_positive() {
            Nnt::Finite(x.recip())
        } else {
            Nnt::Infinite
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Nnt::Finite(x) => to_f64(x),
            Nnt::Infinite => f64::INFINITY,
        }
    }

    /// Whole persons, rounded up.
    pub fn persons(&self) -> Option<u64> {
        match self {
            Nnt::Finite(x) => x.ceil().to_integer().to_u64(),
            Nnt::Infinite => None,
        }
    }

    pub fn exact_string(&self) -> String {
        match self {
            Nnt::Finite(x) => to_exact_string(x),
            Nnt::Infinite => "inf".into(),
        }
    }
}

impl fmt::Display for Nnt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nnt::Finite(x) => f.write_str(&display_rational(x)),
            Nnt::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NntInterval {
    pub lower: Nnt,
    pub upper: Nnt,
}

impl NntInterval {
    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }
}

impl fmt::Display for NntInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lower)
        } else {
            write!(f, "[{}, {}]", self.lower, self.upper)
        }
    }
}

/// NNT as the reciprocal of the probability of benefit: `[1/upper, 1/lower]`.
pub fn nnt_from_benefit(benefit: &Interval) -> NntInterval {
    NntInterval {
        lower: Nnt::reciprocal_of(benefit.upper()),
        upper: Nnt::reciprocal_of(benefit.lower()),
    }
}

/// The classic `1 / ATE`; `None` when the ATE is not positive.
pub fn nnt_classic(ate: &Rational) -> Option<Rational> {
    ate.is_positive().then(|| ate.recip())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    TreatAll,
    TreatNone,
    /// Treat everyone except units a perfect marker flags as harmed.
    ExcludeHarmedMarker,
    /// Treat this stratum (and nobody outside it).
    TreatStratumOnly,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::TreatAll,
        Policy::TreatNone,
        Policy::ExcludeHarmedMarker,
        Policy::TreatStratumOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::TreatAll => "treat-all",
            Policy::TreatNone => "treat-none",
            Policy::ExcludeHarmedMarker => "exclude-harmed-marker",
            Policy::TreatStratumOnly => "treat-stratum-only",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyReport {
    pub policy: Policy,
    pub treated_fraction: Rational,
    /// Expected survival rate in the stratum under the policy.
    pub survival: Rational,
    /// Fraction of treated units saved by treatment; `None` if nobody is treated.
    pub benefit_per_treated: Option<Rational>,
    /// Fraction of the stratum spared from harm relative to treating everyone.
    pub harmed_avoided: Rational,
    /// Survival gained over treating nobody.
    pub incremental_survival: Rational,
}

/// Latent response-type masses `[benefit, harm, always, doomed]` implied by
/// point values of benefit and harm and the trial survival rates.
pub fn response_type_masses(
    benefit: &Rational,
    harm: &Rational,
    p_yt: &Rational,
    p_yc: &Rational,
) -> Result<[Rational; 4]> {
    let always = p_yc - harm;
    let doomed = one() - p_yt - harm;
    if always.is_negative() || doomed.is_negative() || benefit.is_negative() || harm.is_negative()
    {
        return Err(Error::InfeasibleInputs(format!(
            "benefit {}, harm {}, always {}, doomed {}",
            to_exact_string(benefit),
            to_exact_string(harm),
            to_exact_string(&always),
            to_exact_string(&doomed)
        )));
    }
    Ok([benefit.clone(), harm.clone(), always, doomed])
}

/// Values a treatment policy from point estimates of benefit and harm and the
/// control survival rate.
pub fn policy_value(
    benefit: &Rational,
    harm: &Rational,
    p_yc: &Rational,
    policy: Policy,
) -> Result<PolicyReport> {
    if benefit.is_negative() || harm.is_negative() || benefit + harm > one() {
        return Err(Error::InfeasibleInputs(format!(
            "benefit {} and harm {} are not disjoint probabilities",
            to_exact_string(benefit),
            to_exact_string(harm)
        )));
    }
    let always = p_yc - harm;
    if always.is_negative() {
        return Err(Error::InfeasibleInputs(format!(
            "always-survivor mass P(y_c) - P(harm) = {} is negative",
            to_exact_string(&always)
        )));
    }
    let mut report = match policy {
        Policy::TreatAll | Policy::TreatStratumOnly => PolicyReport {
            policy,
            treated_fraction: one(),
            survival: benefit + &always,
            benefit_per_treated: Some(benefit.clone()),
            harmed_avoided: zero(),
            incremental_survival: zero(),
        },
        Policy::TreatNone => PolicyReport {
            policy,
            treated_fraction: zero(),
            survival: p_yc.clone(),
            benefit_per_treated: None,
            harmed_avoided: harm.clone(),
            incremental_survival: zero(),
        },
        Policy::ExcludeHarmedMarker => {
            let treated = one() - harm;
            PolicyReport {
                policy,
                benefit_per_treated: (!treated.is_zero()).then(|| benefit / &treated),
                treated_fraction: treated,
                survival: benefit + harm + &always,
                harmed_avoided: harm.clone(),
                incremental_survival: zero(),
            }
        }
    };
    report.incremental_survival = &report.survival - p_yc;
    Ok(report)
}
