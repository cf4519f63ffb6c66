use std::fs;
use std::path::Path;

use benefit_bounds::cli::{run, EXIT_INCOMPATIBLE, EXIT_INPUT, EXIT_OK, EXIT_ORACLE_MISMATCH};
use benefit_bounds::io::{parse_report, parse_study_file};

const TABLES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/paper_tables.json");

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("benefit-bounds").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn report_on_paper_tables() {
    let (code, out, _) = cli(&["report", TABLES]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("== male ==\n"));
    assert!(out.contains("P(benefit): 0.49\n"));
    assert!(out.contains("P(harm): 0.21\n"));
    assert!(out.contains("P(benefit): 0.279\n"));
    assert!(out.contains("NNT: 3.584 (treat 4 persons to save one)"));
    assert!(out.contains("exclude-harmed-marker: treats 79.0%, survival 70.0%"));
}

#[test]
fn bounds_single_scope_and_stratum() {
    let (code, out, _) = cli(&["bounds", TABLES, "--scope", "obs", "--stratum", "male"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("P(benefit): [0, 0.58]"), "{out}");
    assert!(!out.contains("female"));
    assert!(!out.contains("Monotonicity"));
}

#[test]
fn json_report_round_trips() {
    let (code, out, _) = cli(&["report", TABLES, "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let doc = parse_report(out.as_bytes()).unwrap();
    assert_eq!(doc.to_json(), out);
    assert_eq!(doc.provenance.command, "report");
    assert_eq!(doc.provenance.input_sha256.len(), 64);
}

#[test]
fn unknown_stratum_and_bad_scope_are_input_errors() {
    assert_eq!(cli(&["bounds", TABLES, "--stratum", "child"]).0, EXIT_INPUT);
    assert_eq!(cli(&["bounds", TABLES, "--scope", "both-ish"]).0, EXIT_INPUT);
    assert_eq!(cli(&["bounds", "/no/such/file.json"]).0, EXIT_INPUT);
    assert_eq!(cli(&["frobnicate"]).0, EXIT_INPUT);
}

#[test]
fn negative_count_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(TABLES)
        .unwrap()
        .replacen("\"died\": 511", "\"died\": -511", 1);
    let path = write(dir.path(), "bad.json", &text);
    let (code, _, err) = cli(&["report", &path]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("strata[0].experimental.treated.died"), "{err}");
}

#[test]
fn incompatible_studies_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Everyone who chose treatment survived, yet only 10% survive under it.
    let path = write(
        dir.path(),
        "clash.json",
        r#"{"version":1,"strata":[{"name":"clash","probabilities":
            {"p_yt":0.1,"p_yc":0.5,"p_t":0.5,"p_y_given_t":1,"p_y_given_c":0.5}}]}"#,
    );
    let (code, out, err) = cli(&["bounds", &path]);
    assert_eq!(code, EXIT_INCOMPATIBLE);
    assert!(out.contains("undefined (studies incompatible"), "{out}");
    assert!(err.contains("incompatible"));
    // Single-study scopes remain defined.
    assert_eq!(cli(&["bounds", &path, "--scope", "exp"]).0, EXIT_OK);
    // The oracle agrees that no population fits.
    let (code, out, _) = cli(&["oracle-check", &path]);
    assert_eq!(code, EXIT_OK, "{out}");
}

#[test]
fn oracle_check_passes_on_tables() {
    let (code, out, _) = cli(&["oracle-check", TABLES]);
    assert_eq!(code, EXIT_OK);
    assert!(out.ends_with("0 mismatches\n"));
    assert_eq!(out.matches(" OK\n").count(), 12);
    assert_ne!(EXIT_ORACLE_MISMATCH, code);
}

#[test]
fn simulate_emits_a_study_file() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.csv");
    let (code, out, _) = cli(&[
        "simulate",
        "--preset",
        "male",
        "--n-exp",
        "2000",
        "--n-obs",
        "2000",
        "--seed",
        "7",
        "--cohort",
        cohort.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let file = parse_study_file(out.as_bytes()).unwrap();
    assert_eq!(file.strata.keys().collect::<Vec<_>>(), ["male"]);
    assert!(file.description.unwrap().contains("seed 7"));
    let csv = fs::read_to_string(&cohort).unwrap();
    assert_eq!(csv.lines().count(), 4001);
    assert!(csv.starts_with("stratum,noise,harm_marker,source,exposure,outcome\n"));

    let (_, again, _) = cli(&["simulate", "--preset", "male", "--n-exp", "2000", "--n-obs", "2000", "--seed", "7"]);
    assert_eq!(again, out);
    let (_, other, _) = cli(&["simulate", "--preset", "male", "--n-exp", "2000", "--n-obs", "2000", "--seed", "8"]);
    assert_ne!(other, out);
}

#[test]
fn simulate_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = benefit_bounds::io::scenario_to_json(&benefit_bounds::sim::preset("female").unwrap());
    let path = write(dir.path(), "spec.json", &spec);
    let (code, out, err) = cli(&["simulate", "--spec", &path, "--seed", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("\"female\""));
    assert_eq!(cli(&["simulate", "--preset", "unicorn"]).0, EXIT_INPUT);
    assert_eq!(
        cli(&["simulate", "--preset", "male", "--n-exp", "0"]).0,
        EXIT_INPUT
    );
}

#[test]
fn screen_ranks_marker_first() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.csv");
    let (code, _, _) = cli(&[
        "simulate", "--preset", "male", "--n-exp", "20000", "--n-obs", "20000", "--seed", "3",
        "--cohort", cohort.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let (code, out, err) = cli(&[
        "screen",
        "--cohort",
        cohort.to_str().unwrap(),
        "--features",
        "noise,harm_marker",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let first = out.lines().find(|l| l.starts_with("1. ")).unwrap();
    assert!(first.starts_with("1. harm_marker"), "{out}");

    let (code, out, _) = cli(&[
        "screen",
        "--cohort",
        cohort.to_str().unwrap(),
        "--features",
        "harm_marker",
        "--min-arm",
        "1000000",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("no features ranked"));
    assert!(out.contains("skipped harm_marker"));
}

#[test]
fn report_from_cohort_with_stratification() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = write(
        dir.path(),
        "tiny.csv",
        "sex,source,exposure,outcome\n\
         f,exp,t,y\nf,exp,t,y'\nf,exp,c,y'\nf,obs,t,y\nf,obs,c,y'\n\
         m,exp,t,y\nm,exp,c,y\nm,exp,c,y'\nm,obs,t,y\nm,obs,c,y\n",
    );
    let (code, out, err) = cli(&["report", "--cohort", &cohort, "--stratify", "sex"]);
    assert!(code == EXIT_OK || code == EXIT_INCOMPATIBLE, "{err}");
    assert!(out.contains("== sex=f ==") && out.contains("== sex=m =="));
    let (_, pooled, _) = cli(&["report", "--cohort", &cohort]);
    assert!(pooled.contains("== all =="));
}
