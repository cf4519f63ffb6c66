use benefit_bounds::bounds::EvidenceScope;
use benefit_bounds::decision::Monotonicity;
use benefit_bounds::num::{parse_decimal, to_f64, Rational};
use benefit_bounds::sim::{ground_truth, preset, simulate, simulate_with, SimulationConfig};
use benefit_bounds::strata::{analyze_all, screen_features, DEFAULT_MIN_ARM};

fn dec(s: &str) -> Rational {
    parse_decimal(s).unwrap()
}

fn within_three_se(observed: f64, p: f64, n: u64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    (observed - p).abs() <= 3.0 * se.max(1e-12)
}

#[test]
fn sampled_rates_track_ground_truth() {
    let spec = preset("male").unwrap();
    let truth = ground_truth(&spec).unwrap().pooled.probabilities;
    let s = simulate(&spec, 2000, 2000, 7).unwrap();
    let p = s.probabilities().unwrap();
    let e = &s.experimental;
    let o = &s.observational;
    let pairs = [
        (p.p_yt().unwrap(), truth.p_yt().unwrap(), e.treated.total()),
        (p.p_yc().unwrap(), truth.p_yc().unwrap(), e.control.total()),
        (p.p_t().unwrap(), truth.p_t().unwrap(), o.total()),
        (
            p.p_y_given_t().unwrap().unwrap(),
            truth.p_y_given_t().unwrap().unwrap(),
            o.chose_treatment.total(),
        ),
        (
            p.p_y_given_c().unwrap().unwrap(),
            truth.p_y_given_c().unwrap().unwrap(),
            o.chose_control.total(),
        ),
    ];
    for (got, want, n) in pairs {
        assert!(within_three_se(to_f64(got), to_f64(want), n), "{got} vs {want}");
    }
}

fn two_sex_cohort(n: u64, seed: u64) -> (benefit_bounds::sim::ScenarioSpec, benefit_bounds::strata::CohortDataset) {
    let spec = preset("two-sex-trial").unwrap();
    let sample = simulate_with(&spec, &SimulationConfig::new(n, n, seed).keep_units(true)).unwrap();
    let cohort = sample.to_cohort(&spec).unwrap();
    (spec, cohort)
}

#[test]
fn two_sex_strata_recover_the_tables() {
    let (_, cohort) = two_sex_cohort(40_000, 11);
    let analysis = analyze_all(&cohort, &["sex".to_string()]).unwrap();
    assert_eq!(
        analysis.strata.keys().collect::<Vec<_>>(),
        ["sex=female", "sex=male"]
    );
    let female = &analysis.strata["sex=female"];
    let male = &analysis.strata["sex=male"];
    let benefit = |r: &benefit_bounds::strata::StratumReport| {
        let d = &r.benefit_for(EvidenceScope::Combined).unwrap().derivation;
        (to_f64(&d.lower), to_f64(&d.upper))
    };
    let (fl, fu) = benefit(female);
    let (ml, mu) = benefit(male);
    assert!((fl - 0.279).abs() < 0.03 && (fu - 0.279).abs() < 0.03, "{fl} {fu}");
    assert!((ml - 0.49).abs() < 0.03 && (mu - 0.49).abs() < 0.03, "{ml} {mu}");
    assert_eq!(male.monotonicity.status, Monotonicity::RuledOut);
    let cate = to_f64(analysis.pooled.cate.as_ref().unwrap());
    assert!((cate - 0.2795).abs() < 0.02, "{cate}");
}

#[test]
fn constant_feature_reproduces_pooled() {
    let (_, cohort) = two_sex_cohort(2_000, 5);
    let mut constant = benefit_bounds::strata::CohortDataset::new(
        cohort.covariates().iter().cloned().chain(["site".to_string()]).collect(),
    );
    for r in cohort.records() {
        let mut r = r.clone();
        r.covariates.insert("site".into(), "a".into());
        constant.push(r).unwrap();
    }
    let analysis = analyze_all(&constant, &["site".to_string()]).unwrap();
    assert_eq!(analysis.strata.len(), 1);
    let only = &analysis.strata["site=a"];
    assert_eq!(only.probabilities, analysis.pooled.probabilities);
    assert_eq!(only.benefit, analysis.pooled.benefit);
}

#[test]
fn sex_beats_noise_in_screening() {
    let (_, cohort) = two_sex_cohort(20_000, 21);
    let result = screen_features(
        &cohort,
        &["noise".to_string(), "sex".to_string()],
        DEFAULT_MIN_ARM,
    )
    .unwrap();
    assert_eq!(result.ranked[0].feature, "sex");
    assert!(to_f64(&result.ranked[0].mean_width) < 0.02);
    let male = &result.ranked[0].max_harm_lower;
    assert_eq!(male.0, "sex=male");
    assert!(to_f64(&male.1) > 0.15);
}

#[test]
fn noise_feature_matches_pooled_width_on_average() {
    let mut diffs = Vec::new();
    for seed in 0..20 {
        let (_, cohort) = two_sex_cohort(10_000, 100 + seed);
        let r = screen_features(&cohort, &["noise".to_string()], DEFAULT_MIN_ARM).unwrap();
        diffs.push(to_f64(&r.ranked[0].width_reduction));
    }
    diffs.sort_by(f64::total_cmp);
    let median = (diffs[9] + diffs[10]) / 2.0;
    assert!(median.abs() < 0.02, "{diffs:?}");
}

#[test]
fn harm_marker_isolates_the_harmed() {
    let spec = preset("male").unwrap();
    let sample =
        simulate_with(&spec, &SimulationConfig::new(50_000, 50_000, 4).keep_units(true)).unwrap();
    let cohort = sample.to_cohort(&spec).unwrap();
    let result = screen_features(
        &cohort,
        &["noise".to_string(), "harm_marker".to_string()],
        DEFAULT_MIN_ARM,
    )
    .unwrap();
    assert_eq!(result.ranked[0].feature, "harm_marker");
    let marked = &result.ranked[0].strata["harm_marker=1"];
    assert_eq!(marked.harm_interval().map(|h| h.lower().clone()), Some(dec("1")));

    // Treat only unmarked units: they are cured at their benefit rate, and the
    // marked (harmed) units survive untreated.
    let unmarked = &result.ranked[0].strata["harm_marker=0"];
    let d = &unmarked.benefit_for(EvidenceScope::Combined).unwrap().derivation;
    let cure = to_f64(&d.lower);
    assert!((cure - 0.62).abs() < 0.02, "{cure}");
    assert!((to_f64(&d.upper) - 0.62).abs() < 0.02);
    let size = |r: &benefit_bounds::strata::StratumReport| {
        let (e, o) = (r.experimental_counts.unwrap(), r.observational_counts.unwrap());
        (e.treated.total() + e.control.total() + o.total()) as f64
    };
    let w0 = size(unmarked) / (size(unmarked) + size(marked));
    let survival = w0 * to_f64(unmarked.probabilities.p_yt().unwrap())
        + (1.0 - w0) * to_f64(marked.probabilities.p_yc().unwrap());
    assert!((survival - 0.70).abs() < 0.02, "{survival}");
}

#[test]
fn exact_tables_through_the_simulator() {
    let truth = ground_truth(&preset("two-sex-trial").unwrap()).unwrap();
    let female = &truth.strata[0];
    let male = &truth.strata[1];
    assert_eq!(female.probabilities, benefit_bounds::tables::female_probabilities());
    assert_eq!(male.probabilities, benefit_bounds::tables::male_probabilities());
    assert_eq!(male.harm, dec("0.21"));
}
