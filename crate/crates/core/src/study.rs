//! Observed study data: raw counts, the probabilities derived from them, and
//! the cross-study compatibility check.

use std::fmt;
use std::ops::Add;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{check_probability, one, ratio, to_exact_string, Rational};

/// Survivor/death counts for one arm of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ArmCounts {
    #[serde(rename = "survived")]
    pub survivors: u64,
    #[serde(rename = "died")]
    pub deaths: u64,
}

impl ArmCounts {
    pub fn new(survivors: u64, deaths: u64) -> Self {
        Self { survivors, deaths }
    }

    pub fn total(&self) -> u64 {
        self.survivors + self.deaths
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Exact survival rate, `None` for an empty arm.
    pub fn survival_rate(&self) -> Option<Rational> {
        (!self.is_empty()).then(|| ratio(self.survivors, self.total()))
    }

    pub fn record(&mut self, survived: bool) {
        if survived {
            self.survivors += 1;
        } else {
            self.deaths += 1;
        }
    }
}

impl Add for ArmCounts {
    type Output = ArmCounts;

    fn add(self, rhs: ArmCounts) -> ArmCounts {
        ArmCounts::new(self.survivors + rhs.survivors, self.deaths + rhs.deaths)
    }
}

/// Randomized trial: `treated` is the do(treatment) arm, `control` the
/// do(no treatment) arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExperimentalSummary {
    pub treated: ArmCounts,
    pub control: ArmCounts,
}

impl Add for ExperimentalSummary {
    type Output = ExperimentalSummary;

    fn add(self, rhs: Self) -> Self {
        Self {
            treated: self.treated + rhs.treated,
            control: self.control + rhs.control,
        }
    }
}

/// Observational study: units grouped by what they chose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObservationalSummary {
    pub chose_treatment: ArmCounts,
    pub chose_control: ArmCounts,
}

impl ObservationalSummary {
    pub fn total(&self) -> u64 {
        self.chose_treatment.total() + self.chose_control.total()
    }
}

impl Add for ObservationalSummary {
    type Output = ObservationalSummary;

    fn add(self, rhs: Self) -> Self {
        Self {
            chose_treatment: self.chose_treatment + rhs.chose_treatment,
            chose_control: self.chose_control + rhs.chose_control,
        }
    }
}

/// `P(y_t)` and `P(y_c)` from a randomized trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentalRates {
    pub p_yt: Rational,
    pub p_yc: Rational,
}

impl ExperimentalRates {
    pub fn new(p_yt: Rational, p_yc: Rational) -> Result<Self> {
        check_probability("p_yt", &p_yt)?;
        check_probability("p_yc", &p_yc)?;
        Ok(Self { p_yt, p_yc })
    }
}

/// `P(t)`, `P(y|t)` and `P(y|c)` from an observational study.
///
/// A conditional is `None` when its conditioning arm is empty (`P(t)` is 0 or
/// 1). The corresponding joint cells are then exactly zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationalRates {
    pub p_t: Rational,
    pub p_y_given_t: Option<Rational>,
    pub p_y_given_c: Option<Rational>,
}

impl ObservationalRates {
    pub fn new(
        p_t: Rational,
        p_y_given_t: Option<Rational>,
        p_y_given_c: Option<Rational>,
    ) -> Result<Self> {
        check_probability("p_t", &p_t)?;
        if let Some(p) = &p_y_given_t {
            check_probability("p_y_given_t", p)?;
        } else if !p_t.is_zero() {
            return Err(Error::MissingField("p_y_given_t"));
        }
        if let Some(p) = &p_y_given_c {
            check_probability("p_y_given_c", p)?;
        } else if p_t != one() {
            return Err(Error::MissingField("p_y_given_c"));
        }
        Ok(Self {
            p_t,
            p_y_given_t,
            p_y_given_c,
        })
    }

    pub fn p_c(&self) -> Rational {
        one() - &self.p_t
    }

    pub fn joint_cells(&self) -> JointCells {
        let p_c = self.p_c();
        let (t_y, t_not_y) = match &self.p_y_given_t {
            Some(q) if !self.p_t.is_zero() => (&self.p_t * q, &self.p_t * (one() - q)),
            _ => (Rational::zero(), Rational::zero()),
        };
        let (c_y, c_not_y) = match &self.p_y_given_c {
            Some(q) if !p_c.is_zero() => (&p_c * q, &p_c * (one() - q)),
            _ => (Rational::zero(), Rational::zero()),
        };
        JointCells {
            t_y,
            t_not_y,
            c_y,
            c_not_y,
        }
    }
}

/// Observational joint distribution of choice and outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCells {
    /// P(t, y)
    pub t_y: Rational,
    /// P(t, y')
    pub t_not_y: Rational,
    /// P(c, y)
    pub c_y: Rational,
    /// P(c, y')
    pub c_not_y: Rational,
}

impl JointCells {
    pub fn sum(&self) -> Rational {
        &self.t_y + &self.t_not_y + &self.c_y + &self.c_not_y
    }

    /// P(y) = P(t, y) + P(c, y).
    pub fn outcome(&self) -> Rational {
        &self.t_y + &self.c_y
    }
}

/// The five observed quantities the bounds are computed from. Either study may
/// be absent, which restricts the usable evidence scopes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyProbabilities {
    experimental: Option<ExperimentalRates>,
    observational: Option<ObservationalRates>,
}

impl StudyProbabilities {
    /// Full combined-data constructor from directly supplied probabilities.
    pub fn new(
        p_yt: Rational,
        p_yc: Rational,
        p_y_given_t: Rational,
        p_y_given_c: Rational,
        p_t: Rational,
    ) -> Result<Self> {
        Ok(Self {
            experimental: Some(ExperimentalRates::new(p_yt, p_yc)?),
            observational: Some(ObservationalRates::new(
                p_t,
                Some(p_y_given_t),
                Some(p_y_given_c),
            )?),
        })
    }

    pub fn from_parts(
        experimental: Option<ExperimentalRates>,
        observational: Option<ObservationalRates>,
    ) -> Result<Self> {
        if experimental.is_none() && observational.is_none() {
            return Err(Error::MissingField("experimental or observational data"));
        }
        Ok(Self {
            experimental,
            observational,
        })
    }

    pub fn experimental_only(p_yt: Rational, p_yc: Rational) -> Result<Self> {
        Self::from_parts(Some(ExperimentalRates::new(p_yt, p_yc)?), None)
    }

    pub fn observational_only(
        p_t: Rational,
        p_y_given_t: Option<Rational>,
        p_y_given_c: Option<Rational>,
    ) -> Result<Self> {
        Self::from_parts(
            None,
            Some(ObservationalRates::new(p_t, p_y_given_t, p_y_given_c)?),
        )
    }

    /// Exact rates from study counts.
    pub fn from_counts(exp: &ExperimentalSummary, obs: &ObservationalSummary) -> Result<Self> {
        Ok(Self {
            experimental: Some(experimental_rates(exp)?),
            observational: Some(observational_rates(obs)?),
        })
    }

    /// Like [`from_counts`](Self::from_counts) but either study may be missing.
    pub fn from_optional_counts(
        exp: Option<&ExperimentalSummary>,
        obs: Option<&ObservationalSummary>,
    ) -> Result<Self> {
        Self::from_parts(
            exp.map(experimental_rates).transpose()?,
            obs.map(observational_rates).transpose()?,
        )
    }

    pub fn experimental(&self) -> Option<&ExperimentalRates> {
        self.experimental.as_ref()
    }

    pub fn observational(&self) -> Option<&ObservationalRates> {
        self.observational.as_ref()
    }

    pub fn has_experimental(&self) -> bool {
        self.experimental.is_some()
    }

    pub fn has_observational(&self) -> bool {
        self.observational.is_some()
    }

    pub fn require_experimental(&self) -> Result<&ExperimentalRates> {
        self.experimental
            .as_ref()
            .ok_or(Error::MissingField("p_yt"))
    }

    pub fn require_observational(&self) -> Result<&ObservationalRates> {
        self.observational
            .as_ref()
            .ok_or(Error::MissingField("p_t"))
    }

    pub fn p_yt(&self) -> Result<&Rational> {
        Ok(&self.require_experimental()?.p_yt)
    }

    pub fn p_yc(&self) -> Result<&Rational> {
        Ok(&self.require_experimental()?.p_yc)
    }

    pub fn p_t(&self) -> Result<&Rational> {
        Ok(&self.require_observational()?.p_t)
    }

    pub fn p_y_given_t(&self) -> Result<Option<&Rational>> {
        Ok(self.require_observational()?.p_y_given_t.as_ref())
    }

    pub fn p_y_given_c(&self) -> Result<Option<&Rational>> {
        Ok(self.require_observational()?.p_y_given_c.as_ref())
    }

    /// P(y) = P(t) P(y|t) + (1 - P(t)) P(y|c).
    pub fn marginal_outcome(&self) -> Result<Rational> {
        Ok(self.joint_cells()?.outcome())
    }

    /// (P(t,y), P(t,y'), P(c,y), P(c,y')).
    pub fn joint_cells(&self) -> Result<JointCells> {
        Ok(self.require_observational()?.joint_cells())
    }

    /// Checks the four consistency inequalities tying the trial to the
    /// observational study. With only one study present there is nothing to
    /// cross-check and the verdict is compatible.
    pub fn check_compatibility(&self) -> CompatibilityVerdict {
        let (Some(exp), Some(obs)) = (&self.experimental, &self.observational) else {
            return CompatibilityVerdict::from_violations(Vec::new());
        };
        let cells = obs.joint_cells();
        let p_c = obs.p_c();
        let checks = [
            (Constraint::TreatedJointBelowTrial, &exp.p_yt - &cells.t_y),
            (
                Constraint::TrialBelowTreatedJointPlusControl,
                &cells.t_y + &p_c - &exp.p_yt,
            ),
            (Constraint::ControlJointBelowTrial, &exp.p_yc - &cells.c_y),
            (
                Constraint::TrialBelowControlJointPlusTreated,
                &cells.c_y + &obs.p_t - &exp.p_yc,
            ),
        ];
        let violations = checks
            .into_iter()
            .filter(|(_, slack)| slack.is_negative())
            .map(|(constraint, slack)| Violation {
                constraint,
                shortfall: -slack,
            })
            .collect();
        CompatibilityVerdict::from_violations(violations)
    }
}

fn experimental_rates(exp: &ExperimentalSummary) -> Result<ExperimentalRates> {
    let p_yt = exp
        .treated
        .survival_rate()
        .ok_or_else(|| Error::ZeroDenominator("experimental treated arm".into()))?;
    let p_yc = exp
        .control
        .survival_rate()
        .ok_or_else(|| Error::ZeroDenominator("experimental control arm".into()))?;
    ExperimentalRates::new(p_yt, p_yc)
}

fn observational_rates(obs: &ObservationalSummary) -> Result<ObservationalRates> {
    let total = obs.total();
    if total == 0 {
        return Err(Error::ZeroDenominator("observational study".into()));
    }
    ObservationalRates::new(
        ratio(obs.chose_treatment.total(), total),
        obs.chose_treatment.survival_rate(),
        obs.chose_control.survival_rate(),
    )
}

/// One of the four inequalities implied by consistency between the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    /// P(t,y) <= P(y_t)
    TreatedJointBelowTrial,
    /// P(y_t) <= P(t,y) + P(c)
    TrialBelowTreatedJointPlusControl,
    /// P(c,y) <= P(y_c)
    ControlJointBelowTrial,
    /// P(y_c) <= P(c,y) + P(t)
    TrialBelowControlJointPlusTreated,
}

impl Constraint {
    pub fn label(&self) -> &'static str {
        match self {
            Constraint::TreatedJointBelowTrial => "P(t,y) <= P(y_t)",
            Constraint::TrialBelowTreatedJointPlusControl => "P(y_t) <= P(t,y) + P(c)",
            Constraint::ControlJointBelowTrial => "P(c,y) <= P(y_c)",
            Constraint::TrialBelowControlJointPlusTreated => "P(y_c) <= P(c,y) + P(t)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: Constraint,
    /// How far the inequality misses, always positive.
    pub shortfall: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityVerdict {
    pub compatible: bool,
    pub violations: Vec<Violation>,
}

impl CompatibilityVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            compatible: violations.is_empty(),
            violations,
        }
    }
}

impl fmt::Display for CompatibilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.compatible {
            return write!(f, "compatible");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| {
                format!(
                    "{} violated by {}",
                    v.constraint.label(),
                    to_exact_string(&v.shortfall)
                )
            })
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}
