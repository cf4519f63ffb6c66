//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 incompatible studies, 4 oracle
//! mismatch. Commands that report on several strata write their full output
//! first and then exit 3 if any requested combined-scope bound is undefined.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{bounds, EvidenceScope, Target};
use crate::error::{Error, Result};
use crate::io::{
    build_report, build_screen_document, cohort_to_csv, parse_cohort_csv, parse_scenario_file,
    parse_study_file, render_text, ReportKind, StratumInput, StudyFile,
};
use crate::num::display_rational;
use crate::oracle::oracle_bounds;
use crate::sim::{preset, simulate_with, SimulationConfig, PRESET_NAMES};
use crate::strata::{analyze_all, screen_features, StratumReport, DEFAULT_MIN_ARM};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;
pub const EXIT_ORACLE_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "benefit-bounds",
    version,
    about = "Bounds on the probabilities of benefit and harm from trial and observational data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Benefit and harm bounds for every stratum of a study file.
    Bounds(BoundsArgs),
    /// Full analysis: bounds, monotonicity, NNT and policy values.
    Report(ReportArgs),
    /// Draw a trial and an observational study from a scenario; writes a study file.
    Simulate(SimulateArgs),
    /// Rank covariates by how much stratifying on them narrows the bounds.
    Screen(ScreenArgs),
    /// Recompute every bound by vertex enumeration and compare.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Study file (JSON); `-` reads standard input.
    pub input: PathBuf,
    /// Only this stratum.
    #[arg(long)]
    pub stratum: Option<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// combined, exp or obs; all available scopes when omitted.
    #[arg(long)]
    pub scope: Option<EvidenceScope>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Study file (JSON); `-` reads standard input.
    #[arg(required_unless_present = "cohort", conflicts_with = "cohort")]
    pub input: Option<PathBuf>,
    /// Only this stratum.
    #[arg(long)]
    pub stratum: Option<String>,
    /// Unit-level cohort (CSV) instead of a study file.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Covariates to stratify the cohort by (comma separated).
    #[arg(long, value_delimiter = ',', requires = "cohort")]
    pub stratify: Vec<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario (model1, model2, model2-informed-avoiders, female, male, two-sex-trial).
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// Scenario file (JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n_exp: u64,
    #[arg(long, default_value_t = 1000)]
    pub n_obs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicate index; selects independent streams for the same seed.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Also write the unit-level cohort as CSV.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Write the study file here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Unit-level cohort (CSV).
    #[arg(long)]
    pub cohort: PathBuf,
    /// Candidate covariates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Minimum size of each trial arm and of the observational study per stratum.
    #[arg(long, default_value_t = DEFAULT_MIN_ARM)]
    pub min_arm: u64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::IncompatibleData(_) => EXIT_INCOMPATIBLE,
        _ => EXIT_INPUT,
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn select<'a>(file: &'a StudyFile, stratum: Option<&str>) -> Result<Vec<(&'a String, &'a StratumInput)>> {
    match stratum {
        None => Ok(file.strata.iter().collect()),
        Some(name) => file
            .strata
            .get_key_value(name)
            .map(|kv| vec![kv])
            .ok_or_else(|| Error::Value {
                field: "stratum".into(),
                message: format!("no stratum named `{name}`"),
            }),
    }
}

fn analyze_file(bytes: &[u8], stratum: Option<&str>) -> Result<Vec<StratumReport>> {
    let file = parse_study_file(bytes)?;
    select(&file, stratum)?
        .into_iter()
        .map(|(k, s)| s.analyze(k))
        .collect()
}

/// Strata whose requested combined bounds are undefined.
fn incompatible_strata(reports: &[StratumReport], scope: Option<EvidenceScope>) -> Vec<String> {
    if scope.is_some_and(|s| s != EvidenceScope::Combined) {
        return Vec::new();
    }
    reports
        .iter()
        .filter(|r| {
            r.benefit_for(EvidenceScope::Combined)
                .is_some_and(|b| b.interval.is_none())
        })
        .map(|r| r.key.clone())
        .collect()
}

struct Output {
    text: String,
    code: i32,
    warning: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Self {
            text,
            code: EXIT_OK,
            warning: None,
        }
    }

    fn flag_incompatible(mut self, strata: Vec<String>) -> Self {
        if !strata.is_empty() {
            self.code = EXIT_INCOMPATIBLE;
            self.warning = Some(format!(
                "studies are incompatible in: {}",
                strata.join(", ")
            ));
        }
        self
    }
}

fn render(doc: &crate::io::ReportDocument, format: Format) -> String {
    match format {
        Format::Text => render_text(doc),
        Format::Json => doc.to_json(),
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<Output> {
    let bytes = read_input(&args.input.input)?;
    let reports = analyze_file(&bytes, args.input.stratum.as_deref())?;
    let doc = build_report(&reports, ReportKind::Bounds(args.scope), &bytes)?;
    Ok(Output::ok(render(&doc, args.format)).flag_incompatible(incompatible_strata(&reports, args.scope)))
}

fn cmd_report(args: &ReportArgs) -> Result<Output> {
    let (bytes, reports) = match (&args.input, &args.cohort) {
        (Some(path), _) => {
            let bytes = read_input(path)?;
            let reports = analyze_file(&bytes, args.stratum.as_deref())?;
            (bytes, reports)
        }
        (None, Some(path)) => {
            let bytes = read_input(path)?;
            let cohort = parse_cohort_csv(&bytes)?;
            let analysis = analyze_all(&cohort, &args.stratify)?;
            let mut reports: Vec<StratumReport> = if args.stratify.is_empty() {
                vec![analysis.pooled]
            } else {
                analysis.strata.into_values().collect()
            };
            if let Some(name) = &args.stratum {
                reports.retain(|r| &r.key == name);
                if reports.is_empty() {
                    return Err(Error::Value {
                        field: "stratum".into(),
                        message: format!("no stratum named `{name}`"),
                    });
                }
            }
            (bytes, reports)
        }
        (None, None) => return Err(Error::MissingField("input")),
    };
    let doc = build_report(&reports, ReportKind::Full, &bytes)?;
    Ok(Output::ok(render(&doc, args.format)).flag_incompatible(incompatible_strata(&reports, None)))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Output> {
    let spec = match (&args.preset, &args.spec) {
        (Some(name), _) => preset(name).map_err(|e| match e {
            Error::UnknownPreset(n) => Error::UnknownPreset(format!(
                "{n} (known: {})",
                PRESET_NAMES.join(", ")
            )),
            other => other,
        })?,
        (None, Some(path)) => parse_scenario_file(&read_input(path)?)?,
        (None, None) => return Err(Error::MissingField("preset or spec")),
    };
    let config = SimulationConfig::new(args.n_exp, args.n_obs, args.seed)
        .replicate(args.replicate)
        .keep_units(args.cohort.is_some());
    let sample = simulate_with(&spec, &config)?;
    let mut file = StudyFile::from_counts(
        sample
            .strata
            .iter()
            .map(|s| (s.name.clone(), s.experimental, s.observational)),
    );
    file.description = Some(format!(
        "simulated: scenario {}, n_exp {}, n_obs {}, seed {}, replicate {}",
        spec.name, args.n_exp, args.n_obs, args.seed, args.replicate
    ));
    if let Some(path) = &args.cohort {
        write_file(path, &cohort_to_csv(&sample.to_cohort(&spec)?)?)?;
    }
    let json = file.to_json();
    match &args.output {
        Some(path) => {
            write_file(path, &json)?;
            Ok(Output::ok(String::new()))
        }
        None => Ok(Output::ok(json)),
    }
}

fn cmd_screen(args: &ScreenArgs) -> Result<Output> {
    let bytes = read_input(&args.cohort)?;
    let cohort = parse_cohort_csv(&bytes)?;
    let result = screen_features(&cohort, &args.features, args.min_arm)?;
    let doc = build_screen_document(&result, args.min_arm, &bytes);
    Ok(Output::ok(match args.format {
        Format::Text => doc.render_text(),
        Format::Json => doc.to_json(),
    }))
}

fn show(r: &Result<crate::bounds::Interval>) -> String {
    match r {
        Ok(i) => format!("[{}, {}]", display_rational(i.lower()), display_rational(i.upper())),
        Err(_) => "infeasible".into(),
    }
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<Output> {
    let bytes = read_input(&args.input.input)?;
    let file = parse_study_file(&bytes)?;
    let mut text = String::new();
    let mut mismatches = 0;
    for (name, input) in select(&file, args.input.stratum.as_deref())? {
        let p = input.probabilities()?;
        for scope in EvidenceScope::ALL.into_iter().filter(|s| s.is_available(&p)) {
            for target in [Target::Benefit, Target::Harm] {
                let closed = bounds(&p, scope, target);
                let oracle = oracle_bounds(&p, scope, target);
                let agree = match (&closed, &oracle) {
                    (Ok(a), Ok(b)) => a == b,
                    (Err(Error::IncompatibleData(_)), Err(Error::EmptyPolytope)) => true,
                    _ => false,
                };
                if !agree {
                    mismatches += 1;
                }
                text.push_str(&format!(
                    "{name} {scope} {target:?}: closed form {} oracle {} {}\n",
                    show(&closed),
                    show(&oracle),
                    if agree { "OK" } else { "MISMATCH" }
                ));
            }
        }
    }
    text.push_str(&format!("{mismatches} mismatches\n"));
    let mut out = Output::ok(text);
    if mismatches > 0 {
        out.code = EXIT_ORACLE_MISMATCH;
        out.warning = Some("closed-form and oracle bounds disagree".into());
    }
    Ok(out)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Report(a) => cmd_report(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Screen(a) => cmd_screen(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match result {
        Ok(out) => {
            let _ = stdout.write_all(out.text.as_bytes());
            if let Some(w) = out.warning {
                let _ = writeln!(stderr, "benefit-bounds: {w}");
            }
            out.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "benefit-bounds: {e}");
            exit_code(&e)
        }
    }
}
