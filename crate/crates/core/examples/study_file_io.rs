//! Study files in, reports out: the JSON and CSV formats the command-line
//! tool reads and writes.

use benefit_bounds::io::{
    build_report, cohort_to_csv, parse_cohort_csv, parse_report, parse_study_file, render_text,
    ReportKind,
};
use benefit_bounds::strata::StratumReport;

const STUDY: &str = r#"{
  "version": 1,
  "strata": [
    { "name": "direct",
      "probabilities": { "p_yt": 0.49, "p_yc": 0.21, "p_t": 0.7,
                         "p_y_given_t": 0.7, "p_y_given_c": "7/10" } },
    { "name": "trial-only",
      "experimental": { "treated": {"survived": 49, "died": 51},
                        "control": {"survived": 21, "died": 79} } }
  ]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = parse_study_file(STUDY.as_bytes())?;
    let reports = file
        .strata
        .iter()
        .map(|(k, s)| s.analyze(k))
        .collect::<Result<Vec<StratumReport>, _>>()?;
    let doc = build_report(&reports, ReportKind::Full, STUDY.as_bytes())?;
    print!("{}", render_text(&doc));

    let json = doc.to_json();
    assert_eq!(parse_report(json.as_bytes())?.to_json(), json);
    println!("\nmachine report: {} bytes, re-emits identically", json.len());

    let cohort = parse_cohort_csv(b"site,source,exposure,outcome\nA,rct,treated,survived\nB,obs,control,died\n")?;
    print!("canonical cohort CSV:\n{}", cohort_to_csv(&cohort)?);
    Ok(())
}
