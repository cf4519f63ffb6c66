//! Combined-data bounds for the bundled female/male tables, with the
//! arguments that attain each bound.

use benefit_bounds::bounds::{derivation, EvidenceScope, Target};
use benefit_bounds::io::parse_study_file;
use benefit_bounds::num::display_rational;
use benefit_bounds::tables::PAPER_TABLES_JSON;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = parse_study_file(PAPER_TABLES_JSON.as_bytes())?;
    for (name, stratum) in &file.strata {
        let p = stratum.probabilities()?;
        println!("{name}: {}", p.check_compatibility());
        for target in [Target::Benefit, Target::Harm] {
            let d = derivation(&p, EvidenceScope::Combined, target)?;
            let terms = |ts: &[benefit_bounds::bounds::BoundTerm]| {
                ts.iter()
                    .map(|t| format!("{} = {}", t.label, display_rational(&t.value)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            println!("  {target:?} {}", d.interval()?);
            println!("    max of {}", terms(&d.lower_terms));
            println!("    min of {}", terms(&d.upper_terms));
        }
    }
    Ok(())
}
