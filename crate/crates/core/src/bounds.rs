//! Closed-form bounds on the probabilities of benefit and harm.
//!
//! Each bound is the max (lower) or min (upper) over a list of terms built
//! from the observed probabilities. Which terms are available depends on the
//! [`EvidenceScope`]: terms that need a missing study are dropped.

use std::fmt;
use std::str::FromStr;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{display_rational, in_unit_interval, one, to_exact_string, to_f64, zero, Rational};
use crate::study::StudyProbabilities;

/// Point-collapse tolerance when intervals are compared in floating point.
pub const FLOAT_POINT_EPS: f64 = 1e-9;

/// A closed probability interval `[lower, upper]` with `0 <= lower <= upper <= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    lower: Rational,
    upper: Rational,
}

impl Interval {
    pub fn new(lower: Rational, upper: Rational) -> Result<Self> {
        if !in_unit_interval(&lower) || !in_unit_interval(&upper) || lower > upper {
            return Err(Error::InvalidInterval {
                lower: to_exact_string(&lower),
                upper: to_exact_string(&upper),
            });
        }
        Ok(Self { lower, upper })
    }

    pub fn point(value: Rational) -> Result<Self> {
        Self::new(value.clone(), value)
    }

    pub fn unit() -> Self {
        Self {
            lower: zero(),
            upper: one(),
        }
    }

    pub fn lower(&self) -> &Rational {
        &self.lower
    }

    pub fn upper(&self) -> &Rational {
        &self.upper
    }

    pub fn width(&self) -> Rational {
        &self.upper - &self.lower
    }

    /// Exact collapse.
    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    /// Collapse up to `eps` on the floating-point view.
    pub fn is_point_within(&self, eps: f64) -> bool {
        to_f64(&self.upper) - to_f64(&self.lower) <= eps
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lower <= x && x <= &self.upper
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lower <= self.lower && self.upper <= other.upper
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lower = (&self.lower).max(&other.lower).clone();
        let upper = (&self.upper).min(&other.upper).clone();
        (lower <= upper).then_some(Interval { lower, upper })
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (to_f64(&self.lower), to_f64(&self.upper))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", display_rational(&self.lower))
        } else {
            write!(
                f,
                "[{}, {}]",
                display_rational(&self.lower),
                display_rational(&self.upper)
            )
        }
    }
}

/// Which studies inform a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceScope {
    Combined,
    ExperimentalOnly,
    ObservationalOnly,
}

impl EvidenceScope {
    pub const ALL: [EvidenceScope; 3] = [
        EvidenceScope::Combined,
        EvidenceScope::ExperimentalOnly,
        EvidenceScope::ObservationalOnly,
    ];

    pub fn uses_experimental(self) -> bool {
        self != EvidenceScope::ObservationalOnly
    }

    pub fn uses_observational(self) -> bool {
        self != EvidenceScope::ExperimentalOnly
    }

    pub fn name(self) -> &'static str {
        match self {
            EvidenceScope::Combined => "combined",
            EvidenceScope::ExperimentalOnly => "experimental_only",
            EvidenceScope::ObservationalOnly => "observational_only",
        }
    }

    /// The richest scope the data supports.
    pub fn best_available(p: &StudyProbabilities) -> EvidenceScope {
        match (p.has_experimental(), p.has_observational()) {
            (true, true) => EvidenceScope::Combined,
            (true, false) => EvidenceScope::ExperimentalOnly,
            _ => EvidenceScope::ObservationalOnly,
        }
    }

    pub fn is_available(self, p: &StudyProbabilities) -> bool {
        (!self.uses_experimental() || p.has_experimental())
            && (!self.uses_observational() || p.has_observational())
    }
}

impl fmt::Display for EvidenceScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvidenceScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" | "both" => Ok(EvidenceScope::Combined),
            "exp" | "experimental" | "experimental_only" => Ok(EvidenceScope::ExperimentalOnly),
            "obs" | "observational" | "observational_only" => Ok(EvidenceScope::ObservationalOnly),
            other => Err(Error::Value {
                field: "scope".into(),
                message: format!("unknown scope `{other}` (expected combined, exp or obs)"),
            }),
        }
    }
}

/// Quantity being bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Benefit,
    Harm,
}

/// One argument of a bound's max/min.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundTerm {
    pub label: &'static str,
    pub value: Rational,
}

/// All arguments of both bounds plus the raw max/min, before any
/// compatibility check. On incompatible data `lower` may exceed `upper`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundDerivation {
    pub target: Target,
    pub scope: EvidenceScope,
    pub lower_terms: Vec<BoundTerm>,
    pub upper_terms: Vec<BoundTerm>,
    pub lower: Rational,
    pub upper: Rational,
}

impl BoundDerivation {
    fn from_terms(
        target: Target,
        scope: EvidenceScope,
        lower_terms: Vec<BoundTerm>,
        upper_terms: Vec<BoundTerm>,
    ) -> Self {
        // lower terms always include 0 and upper terms always include a probability
        let lower = lower_terms.iter().map(|t| &t.value).max().cloned().unwrap_or_else(zero);
        let upper = upper_terms.iter().map(|t| &t.value).min().cloned().unwrap_or_else(one);
        Self {
            target,
            scope,
            lower_terms,
            upper_terms,
            lower,
            upper,
        }
    }

    /// Labels of the lower-bound arguments that attain the max.
    pub fn binding_lower(&self) -> Vec<&'static str> {
        self.lower_terms
            .iter()
            .filter(|t| t.value == self.lower)
            .map(|t| t.label)
            .collect()
    }

    /// Labels of the upper-bound arguments that attain the min.
    pub fn binding_upper(&self) -> Vec<&'static str> {
        self.upper_terms
            .iter()
            .filter(|t| t.value == self.upper)
            .map(|t| t.label)
            .collect()
    }

    /// `max(0, upper - lower)`; zero when the raw bounds cross.
    pub fn raw_width(&self) -> Rational {
        let w = &self.upper - &self.lower;
        if w.is_negative() {
            zero()
        } else {
            w
        }
    }

    /// Validated interval, clamped into `[0, 1]`.
    pub fn interval(&self) -> Result<Interval> {
        let lower = (&self.lower).max(&zero()).clone();
        let upper = (&self.upper).min(&one()).clone();
        if lower > upper {
            return Err(Error::IncompatibleData(format!(
                "{:?} bounds cross: lower {} > upper {}",
                self.target,
                to_exact_string(&lower),
                to_exact_string(&upper)
            )));
        }
        Interval::new(lower, upper)
    }
}

fn term(label: &'static str, value: Rational) -> BoundTerm {
    BoundTerm { label, value }
}

fn require_scope(p: &StudyProbabilities, scope: EvidenceScope) -> Result<()> {
    if scope.uses_experimental() {
        p.require_experimental()?;
    }
    if scope.uses_observational() {
        p.require_observational()?;
    }
    Ok(())
}

/// Every argument of the benefit bounds for `scope`, without requiring the
/// studies to be compatible. Lower-term order follows the standard listing
/// `0, P(y_t) - P(y_c), P(y) - P(y_c), P(y_t) - P(y)`.
pub fn benefit_derivation(p: &StudyProbabilities, scope: EvidenceScope) -> Result<BoundDerivation> {
    require_scope(p, scope)?;
    let mut lower = vec![term("0", zero())];
    let mut upper = Vec::new();
    if scope.uses_experimental() {
        let (yt, yc) = (p.p_yt()?, p.p_yc()?);
        lower.push(term("P(y_t) - P(y_c)", yt - yc));
        upper.push(term("P(y_t)", yt.clone()));
        upper.push(term("P(y'_c)", one() - yc));
    }
    if scope == EvidenceScope::Combined {
        let (yt, yc) = (p.p_yt()?, p.p_yc()?);
        let cells = p.joint_cells()?;
        let y = cells.outcome();
        lower.push(term("P(y) - P(y_c)", &y - yc));
        lower.push(term("P(y_t) - P(y)", yt - &y));
        upper.push(term("P(t,y) + P(c,y')", &cells.t_y + &cells.c_not_y));
        upper.push(term(
            "P(y_t) - P(y_c) + P(t,y') + P(c,y)",
            yt - yc + &cells.t_not_y + &cells.c_y,
        ));
    } else if scope == EvidenceScope::ObservationalOnly {
        let cells = p.joint_cells()?;
        upper.push(term("P(t,y) + P(c,y')", &cells.t_y + &cells.c_not_y));
    }
    Ok(BoundDerivation::from_terms(Target::Benefit, scope, lower, upper))
}

/// Every argument of the harm bounds for `scope`; mirror image of
/// [`benefit_derivation`] with treatment and control outcomes swapped.
pub fn harm_derivation(p: &StudyProbabilities, scope: EvidenceScope) -> Result<BoundDerivation> {
    require_scope(p, scope)?;
    let mut lower = vec![term("0", zero())];
    let mut upper = Vec::new();
    if scope.uses_experimental() {
        let (yt, yc) = (p.p_yt()?, p.p_yc()?);
        lower.push(term("P(y_c) - P(y_t)", yc - yt));
        upper.push(term("P(y_c)", yc.clone()));
        upper.push(term("P(y'_t)", one() - yt));
    }
    if scope == EvidenceScope::Combined {
        let (yt, yc) = (p.p_yt()?, p.p_yc()?);
        let cells = p.joint_cells()?;
        let y = cells.outcome();
        lower.push(term("P(y) - P(y_t)", &y - yt));
        lower.push(term("P(y_c) - P(y)", yc - &y));
        upper.push(term("P(t,y') + P(c,y)", &cells.t_not_y + &cells.c_y));
        upper.push(term(
            "P(y_c) - P(y_t) + P(t,y) + P(c,y')",
            yc - yt + &cells.t_y + &cells.c_not_y,
        ));
    } else if scope == EvidenceScope::ObservationalOnly {
        let cells = p.joint_cells()?;
        upper.push(term("P(t,y') + P(c,y)", &cells.t_not_y + &cells.c_y));
    }
    Ok(BoundDerivation::from_terms(Target::Harm, scope, lower, upper))
}

pub fn derivation(
    p: &StudyProbabilities,
    scope: EvidenceScope,
    target: Target,
) -> Result<BoundDerivation> {
    match target {
        Target::Benefit => benefit_derivation(p, scope),
        Target::Harm => harm_derivation(p, scope),
    }
}

fn checked_interval(p: &StudyProbabilities, d: BoundDerivation) -> Result<Interval> {
    if d.scope == EvidenceScope::Combined {
        let verdict = p.check_compatibility();
        if !verdict.compatible {
            return Err(Error::IncompatibleData(verdict.to_string()));
        }
    }
    d.interval()
}

/// Tight bounds on P(benefit) = P(y_t, y'_c).
pub fn benefit_bounds(p: &StudyProbabilities, scope: EvidenceScope) -> Result<Interval> {
    checked_interval(p, benefit_derivation(p, scope)?)
}

/// Tight bounds on P(harm) = P(y'_t, y_c).
pub fn harm_bounds(p: &StudyProbabilities, scope: EvidenceScope) -> Result<Interval> {
    checked_interval(p, harm_derivation(p, scope)?)
}

pub fn bounds(p: &StudyProbabilities, scope: EvidenceScope, target: Target) -> Result<Interval> {
    checked_interval(p, derivation(p, scope, target)?)
}

/// Average treatment effect P(y_t) - P(y_c).
pub fn ate(p: &StudyProbabilities) -> Result<Rational> {
    Ok(p.p_yt()? - p.p_yc()?)
}

/// P(harm) = P(benefit) - ATE.
pub fn harm_from_benefit(benefit: &Rational, ate: &Rational) -> Result<Rational> {
    let harm = benefit - ate;
    if in_unit_interval(&harm) {
        Ok(harm)
    } else {
        Err(Error::InconsistentPair(to_exact_string(&harm)))
    }
}

/// Shifts both endpoints of a benefit interval by `-ate`.
pub fn harm_interval_from_benefit(benefit: &Interval, ate: &Rational) -> Result<Interval> {
    Interval::new(
        harm_from_benefit(benefit.lower(), ate)?,
        harm_from_benefit(benefit.upper(), ate)?,
    )
}
