//! Ground-truth populations with confounded treatment choice.
//!
//! A [`ScenarioSpec`] fixes, per stratum, the mix of response types and the
//! probability that each type chooses treatment when free to. From it we can
//! evaluate the exact study probabilities ([`ground_truth`]) or draw finite
//! trial and observational samples ([`simulate`]).
//!
//! # Random numbers
//!
//! Sampling uses `ChaCha8Rng` from `rand_chacha`, seeded with
//! `seed_from_u64(seed)`. Each replicate `r` reads three streams of that
//! generator, selected with `set_stream`: `3r` for the trial, `3r + 1` for the
//! observational study and `3r + 2` for auxiliary covariates. Uniform draws are
//! `rng.random::<f64>()` compared against cumulative probabilities.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{in_unit_interval, one, ratio, serde_exact, to_exact_string, to_f64, zero, Rational};
use crate::oracle::{cell, pns_of, Choice, ResponseType, ResponseTypeDistribution, CELLS};
use crate::strata::{CohortDataset, CohortRecord, Exposure, Source};
use crate::study::{ExperimentalSummary, ObservationalSummary, StudyProbabilities};

/// A value per response type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerType {
    #[serde(with = "serde_exact")]
    pub benefit: Rational,
    #[serde(with = "serde_exact")]
    pub harm: Rational,
    #[serde(with = "serde_exact")]
    pub always: Rational,
    #[serde(with = "serde_exact")]
    pub doomed: Rational,
}

impl PerType {
    pub fn new(benefit: Rational, harm: Rational, always: Rational, doomed: Rational) -> Self {
        Self {
            benefit,
            harm,
            always,
            doomed,
        }
    }

    pub fn from_decimals(values: [&str; 4]) -> Self {
        let [b, h, a, d] = values.map(|s| crate::num::parse_decimal(s).expect("decimal literal"));
        Self::new(b, h, a, d)
    }

    pub fn get(&self, r: ResponseType) -> &Rational {
        match r {
            ResponseType::Benefit => &self.benefit,
            ResponseType::Harm => &self.harm,
            ResponseType::Always => &self.always,
            ResponseType::Doomed => &self.doomed,
        }
    }

    fn sum(&self) -> Rational {
        &self.benefit + &self.harm + &self.always + &self.doomed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumSpec {
    pub name: String,
    #[serde(with = "serde_exact")]
    pub weight: Rational,
    /// Fraction of the stratum of each response type.
    pub mix: PerType,
    /// P(chooses treatment | response type).
    pub choice: PerType,
}

impl StratumSpec {
    /// Latent response-type x choice distribution of this stratum.
    pub fn distribution(&self) -> ResponseTypeDistribution {
        let mut cells: [Rational; CELLS] = std::array::from_fn(|_| zero());
        for r in ResponseType::ALL {
            let mass = self.mix.get(r);
            let c = self.choice.get(r);
            cells[cell(r, Choice::Treatment)] = mass * c;
            cells[cell(r, Choice::Control)] = mass * (one() - c);
        }
        ResponseTypeDistribution::new(cells).expect("validated stratum spec")
    }
}

fn default_treated_share() -> Rational {
    ratio(1, 2)
}

fn default_feature() -> String {
    "stratum".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Covariate name the stratum label is exported under.
    #[serde(default = "default_feature")]
    pub stratum_feature: String,
    /// Share of trial units assigned to treatment.
    #[serde(with = "serde_exact", default = "default_treated_share")]
    pub treated_share: Rational,
    pub strata: Vec<StratumSpec>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.strata.is_empty() {
            return bad("no strata".into());
        }
        let names: BTreeSet<&str> = self.strata.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.strata.len() {
            return bad("duplicate stratum names".into());
        }
        if !in_unit_interval(&self.treated_share)
            || self.treated_share == zero()
            || self.treated_share == one()
        {
            return bad("treated_share must lie strictly between 0 and 1".into());
        }
        let total: Rational = self.strata.iter().map(|s| &s.weight).sum();
        if total != one() {
            return bad(format!("weights sum to {}", to_exact_string(&total)));
        }
        for s in &self.strata {
            if !in_unit_interval(&s.weight) {
                return bad(format!("stratum `{}` weight out of range", s.name));
            }
            for r in ResponseType::ALL {
                if !in_unit_interval(s.mix.get(r)) {
                    return bad(format!("stratum `{}` mix.{r} out of range", s.name));
                }
                if !in_unit_interval(s.choice.get(r)) {
                    return bad(format!("stratum `{}` choice.{r} out of range", s.name));
                }
            }
            if s.mix.sum() != one() {
                return bad(format!(
                    "stratum `{}` mix sums to {}",
                    s.name,
                    to_exact_string(&s.mix.sum())
                ));
            }
        }
        Ok(())
    }

    fn single(name: &str, mix: PerType, choice: PerType) -> Self {
        Self {
            name: name.into(),
            stratum_feature: default_feature(),
            treated_share: default_treated_share(),
            strata: vec![StratumSpec {
                name: name.into(),
                weight: one(),
                mix,
                choice,
            }],
        }
    }
}

/// Exact quantities of one stratum (or of the pooled population).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTruth {
    pub name: String,
    pub weight: Rational,
    pub distribution: ResponseTypeDistribution,
    pub probabilities: StudyProbabilities,
    pub benefit: Rational,
    pub harm: Rational,
}

impl StratumTruth {
    fn from_distribution(name: &str, weight: Rational, d: ResponseTypeDistribution) -> Self {
        let rec = pns_of(&d);
        Self {
            name: name.into(),
            weight,
            probabilities: rec.study_probabilities(),
            benefit: rec.benefit,
            harm: rec.harm,
            distribution: d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub strata: Vec<StratumTruth>,
    pub pooled: StratumTruth,
}

/// Exact study probabilities and true benefit/harm, without sampling.
pub fn ground_truth(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let strata: Vec<StratumTruth> = spec
        .strata
        .iter()
        .map(|s| StratumTruth::from_distribution(&s.name, s.weight.clone(), s.distribution()))
        .collect();
    let mut pooled_cells: [Rational; CELLS] = std::array::from_fn(|_| zero());
    for s in &strata {
        for (acc, q) in pooled_cells.iter_mut().zip(s.distribution.cells()) {
            *acc += &s.weight * q;
        }
    }
    let pooled = StratumTruth::from_distribution(
        "all",
        one(),
        ResponseTypeDistribution::new(pooled_cells)?,
    );
    Ok(GroundTruth { strata, pooled })
}

/// One sampled unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitRecord {
    pub stratum: usize,
    pub response: ResponseType,
    pub source: Source,
    /// Assigned (trial) or chosen (observational) treatment.
    pub treated: bool,
    pub survived: bool,
    /// Outcome-independent coin flip, exported as the `noise` covariate.
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumSample {
    pub name: String,
    pub experimental: ExperimentalSummary,
    pub observational: ObservationalSummary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledStudies {
    pub experimental: ExperimentalSummary,
    pub observational: ObservationalSummary,
    pub strata: Vec<StratumSample>,
    pub seed: u64,
    pub replicate: u64,
    pub units: Option<Vec<UnitRecord>>,
}

impl SampledStudies {
    pub fn probabilities(&self) -> Result<StudyProbabilities> {
        StudyProbabilities::from_counts(&self.experimental, &self.observational)
    }

    /// Unit records as a cohort with covariates `<stratum_feature>`, `noise`
    /// and `harm_marker` (1 exactly for harmed units). Requires the run to
    /// have kept its units.
    pub fn to_cohort(&self, spec: &ScenarioSpec) -> Result<CohortDataset> {
        let units = self.units.as_ref().ok_or_else(|| {
            Error::InvalidScenario("simulation did not keep unit records".into())
        })?;
        let names = vec![
            spec.stratum_feature.clone(),
            "noise".to_string(),
            "harm_marker".to_string(),
        ];
        let mut cohort = CohortDataset::new(names.clone());
        for u in units {
            let bit = |b: bool| if b { "1" } else { "0" }.to_string();
            let covariates = [
                (names[0].clone(), spec.strata[u.stratum].name.clone()),
                (names[1].clone(), bit(u.noise)),
                (names[2].clone(), bit(u.response == ResponseType::Harm)),
            ]
            .into_iter()
            .collect();
            cohort.push(CohortRecord {
                covariates,
                source: u.source,
                exposure: if u.treated {
                    Exposure::Treatment
                } else {
                    Exposure::Control
                },
                survived: u.survived,
            })?;
        }
        Ok(cohort)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub n_experimental: u64,
    pub n_observational: u64,
    pub seed: u64,
    pub replicate: u64,
    pub keep_units: bool,
}

impl SimulationConfig {
    pub fn new(n_experimental: u64, n_observational: u64, seed: u64) -> Self {
        Self {
            n_experimental,
            n_observational,
            seed,
            replicate: 0,
            keep_units: false,
        }
    }

    pub fn replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn keep_units(mut self, keep: bool) -> Self {
        self.keep_units = keep;
        self
    }
}

/// Generator for one stream of one replicate.
pub fn stream_rng(seed: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate * 3 + stream);
    rng
}

struct Sampler {
    stratum_cdf: Vec<f64>,
    type_cdf: Vec<[f64; 4]>,
    choice: Vec<[f64; 4]>,
}

fn cdf(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = values
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

impl Sampler {
    fn new(spec: &ScenarioSpec) -> Self {
        let stratum_cdf = cdf(spec.strata.iter().map(|s| to_f64(&s.weight)));
        let type_cdf = spec
            .strata
            .iter()
            .map(|s| {
                let c = cdf(ResponseType::ALL.iter().map(|&r| to_f64(s.mix.get(r))));
                [c[0], c[1], c[2], c[3]]
            })
            .collect();
        let choice = spec
            .strata
            .iter()
            .map(|s| ResponseType::ALL.map(|r| to_f64(s.choice.get(r))))
            .collect();
        Self {
            stratum_cdf,
            type_cdf,
            choice,
        }
    }

    fn draw_unit(&self, rng: &mut ChaCha8Rng) -> (usize, ResponseType) {
        let stratum = pick(&self.stratum_cdf, rng.random::<f64>());
        let r = ResponseType::ALL[pick(&self.type_cdf[stratum], rng.random::<f64>())];
        (stratum, r)
    }
}

/// Draws a randomized trial and an observational study from the scenario.
///
/// Trial units are iid draws; the first `round(n * treated_share)` are
/// assigned treatment. Observational units choose treatment with their type's
/// choice probability. Outcomes are deterministic given type and treatment.
pub fn simulate_with(spec: &ScenarioSpec, config: &SimulationConfig) -> Result<SampledStudies> {
    spec.validate()?;
    if config.n_experimental == 0 || config.n_observational == 0 {
        return Err(Error::InvalidScenario(
            "study sizes must be positive".into(),
        ));
    }
    let sampler = Sampler::new(spec);
    let mut strata: Vec<StratumSample> = spec
        .strata
        .iter()
        .map(|s| StratumSample {
            name: s.name.clone(),
            experimental: ExperimentalSummary::default(),
            observational: ObservationalSummary::default(),
        })
        .collect();
    let mut units = config.keep_units.then(Vec::new);
    let mut aux = stream_rng(config.seed, config.replicate, 2);

    let share = to_f64(&spec.treated_share);
    let n_treated = ((config.n_experimental as f64) * share).round() as u64;
    let mut rng = stream_rng(config.seed, config.replicate, 0);
    for i in 0..config.n_experimental {
        let (stratum, r) = sampler.draw_unit(&mut rng);
        let treated = i < n_treated;
        let survived = r.survives(treated);
        let exp = &mut strata[stratum].experimental;
        if treated {
            exp.treated.record(survived);
        } else {
            exp.control.record(survived);
        }
        if let Some(units) = units.as_mut() {
            units.push(UnitRecord {
                stratum,
                response: r,
                source: Source::Experimental,
                treated,
                survived,
                noise: aux.random::<bool>(),
            });
        }
    }

    let mut rng = stream_rng(config.seed, config.replicate, 1);
    for _ in 0..config.n_observational {
        let (stratum, r) = sampler.draw_unit(&mut rng);
        let c = sampler.choice[stratum][r as usize];
        let treated = rng.random::<f64>() < c;
        let survived = r.survives(treated);
        let obs = &mut strata[stratum].observational;
        if treated {
            obs.chose_treatment.record(survived);
        } else {
            obs.chose_control.record(survived);
        }
        if let Some(units) = units.as_mut() {
            units.push(UnitRecord {
                stratum,
                response: r,
                source: Source::Observational,
                treated,
                survived,
                noise: aux.random::<bool>(),
            });
        }
    }

    let experimental = strata
        .iter()
        .fold(ExperimentalSummary::default(), |acc, s| acc + s.experimental);
    let observational = strata
        .iter()
        .fold(ObservationalSummary::default(), |acc, s| acc + s.observational);
    Ok(SampledStudies {
        experimental,
        observational,
        strata,
        seed: config.seed,
        replicate: config.replicate,
        units,
    })
}

pub fn simulate(
    spec: &ScenarioSpec,
    n_experimental: u64,
    n_observational: u64,
    seed: u64,
) -> Result<SampledStudies> {
    simulate_with(
        spec,
        &SimulationConfig::new(n_experimental, n_observational, seed),
    )
}

pub const PRESET_NAMES: [&str; 6] = [
    "model1",
    "model2",
    "model2-informed-avoiders",
    "female",
    "male",
    "two-sex-trial",
];

fn female_stratum() -> StratumSpec {
    StratumSpec {
        name: "female".into(),
        weight: one(),
        mix: PerType::from_decimals(["0.279", "0", "0.21", "0.511"]),
        // benefit types split 21/31 toward treatment; doomed all choose it
        choice: PerType::new(ratio(21, 31), zero(), zero(), one()),
    }
}

fn male_stratum() -> StratumSpec {
    StratumSpec {
        name: "male".into(),
        weight: one(),
        mix: PerType::from_decimals(["0.49", "0.21", "0", "0.30"]),
        choice: PerType::from_decimals(["1", "0", "0", "0.7"]),
    }
}

/// Named scenarios.
///
/// * `model1`: nobody is affected (90% always survive, 10% doomed), choice
///   is a coin flip.
/// * `model2`: 10% saved, 10% killed, 80% always survive; units know their
///   type, so the observational study shows 100% survival in both groups.
/// * `model2-informed-avoiders`: trial rates as above, but everyone who
///   chooses treatment dies and everyone who avoids it survives. Only the
///   no-effect population fits, so the benefit upper bound is 0.
/// * `female`, `male`: reproduce the two worked-example tables exactly.
/// * `two-sex-trial`: the two sexes in equal proportion, exported under the
///   `sex` covariate.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let half = || ratio(1, 2);
    let spec = match name {
        "model1" => ScenarioSpec::single(
            name,
            PerType::from_decimals(["0", "0", "0.9", "0.1"]),
            PerType::new(half(), half(), half(), half()),
        ),
        "model2" => ScenarioSpec::single(
            name,
            PerType::from_decimals(["0.1", "0.1", "0.8", "0"]),
            PerType::new(one(), zero(), half(), half()),
        ),
        "model2-informed-avoiders" => ScenarioSpec::single(
            name,
            PerType::from_decimals(["0", "0", "0.9", "0.1"]),
            PerType::from_decimals(["0", "0", "0", "1"]),
        ),
        "female" => {
            let s = female_stratum();
            ScenarioSpec::single(name, s.mix, s.choice)
        }
        "male" => {
            let s = male_stratum();
            ScenarioSpec::single(name, s.mix, s.choice)
        }
        "two-sex-trial" => ScenarioSpec {
            name: name.into(),
            stratum_feature: "sex".into(),
            treated_share: half(),
            strata: vec![
                StratumSpec {
                    weight: half(),
                    ..female_stratum()
                },
                StratumSpec {
                    weight: half(),
                    ..male_stratum()
                },
            ],
        },
        other => return Err(Error::UnknownPreset(other.into())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{benefit_bounds, EvidenceScope};
    use crate::num::parse_decimal;
    use crate::tables;

    fn dec(s: &str) -> Rational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn male_preset_truth() {
        let t = ground_truth(&preset("male").unwrap()).unwrap();
        let p = &t.pooled.probabilities;
        assert_eq!(p, &tables::male_probabilities());
        assert_eq!(t.pooled.benefit, dec("0.49"));
        assert_eq!(t.pooled.harm, dec("0.21"));
    }

    #[test]
    fn female_preset_truth() {
        let t = ground_truth(&preset("female").unwrap()).unwrap();
        assert_eq!(t.pooled.probabilities, tables::female_probabilities());
        assert_eq!(t.pooled.benefit, dec("0.279"));
        assert_eq!(t.pooled.harm, zero());
    }

    #[test]
    fn model_presets() {
        let t = ground_truth(&preset("model1").unwrap()).unwrap();
        assert_eq!(t.pooled.probabilities.p_yt().unwrap(), &dec("0.9"));
        assert_eq!(t.pooled.probabilities.p_yc().unwrap(), &dec("0.9"));
        assert_eq!(t.pooled.benefit, zero());

        let t = ground_truth(&preset("model2").unwrap()).unwrap();
        let p = &t.pooled.probabilities;
        assert_eq!(p.p_yt().unwrap(), &dec("0.9"));
        assert_eq!(p.p_yc().unwrap(), &dec("0.9"));
        assert_eq!(p.p_y_given_t().unwrap(), Some(&one()));
        assert_eq!(p.p_y_given_c().unwrap(), Some(&one()));
        assert_eq!(t.pooled.benefit, dec("0.1"));

        let t = ground_truth(&preset("model2-informed-avoiders").unwrap()).unwrap();
        let p = &t.pooled.probabilities;
        assert_eq!(p.p_y_given_t().unwrap(), Some(&zero()));
        assert_eq!(p.p_y_given_c().unwrap(), Some(&one()));
        assert_eq!(benefit_bounds(p, EvidenceScope::Combined).unwrap().upper(), &zero());
    }

    #[test]
    fn two_sex_trial_strata() {
        let t = ground_truth(&preset("two-sex-trial").unwrap()).unwrap();
        assert_eq!(t.strata.len(), 2);
        let cate = |s: &StratumTruth| {
            s.probabilities.p_yt().unwrap() - s.probabilities.p_yc().unwrap()
        };
        assert_eq!(cate(&t.strata[0]), dec("0.279"));
        assert_eq!(cate(&t.strata[1]), dec("0.28"));
        assert_eq!(t.pooled.benefit, (dec("0.279") + dec("0.49")) / crate::num::int(2));
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(preset("nope"), Err(Error::UnknownPreset("nope".into())));
    }

    #[test]
    fn validation() {
        let mut spec = preset("male").unwrap();
        spec.strata[0].mix.doomed = dec("0.4");
        assert!(matches!(ground_truth(&spec), Err(Error::InvalidScenario(_))));
        let mut spec = preset("two-sex-trial").unwrap();
        spec.strata[0].weight = dec("0.4");
        assert!(spec.validate().is_err());
        let mut spec = preset("male").unwrap();
        spec.strata[0].choice.harm = dec("1.5");
        assert!(spec.validate().is_err());
        let mut spec = preset("male").unwrap();
        spec.treated_share = one();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_sizes_rejected() {
        let spec = preset("male").unwrap();
        assert!(simulate(&spec, 0, 10, 1).is_err());
        assert!(simulate(&spec, 10, 0, 1).is_err());
    }

    #[test]
    fn same_seed_same_sample() {
        let spec = preset("two-sex-trial").unwrap();
        let cfg = SimulationConfig::new(500, 500, 7).keep_units(true);
        let a = simulate_with(&spec, &cfg).unwrap();
        let b = simulate_with(&spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_with(&spec, &cfg.replicate(1)).unwrap();
        assert_ne!(a.experimental, c.experimental);
    }

    #[test]
    fn trial_split_is_exact() {
        let s = simulate(&preset("female").unwrap(), 1001, 10, 3).unwrap();
        assert_eq!(s.experimental.treated.total(), 501);
        assert_eq!(s.experimental.control.total(), 500);
    }

    #[test]
    fn outcomes_follow_types() {
        let spec = preset("two-sex-trial").unwrap();
        let s = simulate_with(&spec, &SimulationConfig::new(300, 300, 11).keep_units(true)).unwrap();
        for u in s.units.as_ref().unwrap() {
            assert_eq!(u.survived, u.response.survives(u.treated));
        }
        let cohort = s.to_cohort(&spec).unwrap();
        assert_eq!(cohort.len(), 600);
        assert_eq!(cohort.covariates(), ["sex", "noise", "harm_marker"]);
        assert_eq!(cohort.summaries(), (s.experimental, s.observational));
    }

    #[test]
    fn spec_json_round_trip_is_exact() {
        let spec = preset("female").unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"21/31\""));
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
