//! How the bounds widen when one of the two studies is missing.

use benefit_bounds::bounds::{benefit_bounds, harm_bounds, EvidenceScope};
use benefit_bounds::tables;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, p) in [
        ("female", tables::female_probabilities()),
        ("male", tables::male_probabilities()),
    ] {
        println!("{name}");
        for scope in EvidenceScope::ALL {
            println!(
                "  {:<20} benefit {:<16} harm {}",
                scope.to_string(),
                benefit_bounds(&p, scope)?.to_string(),
                harm_bounds(&p, scope)?
            );
        }
        let exp = benefit_bounds(&p, EvidenceScope::ExperimentalOnly)?;
        let obs = benefit_bounds(&p, EvidenceScope::ObservationalOnly)?;
        let both = benefit_bounds(&p, EvidenceScope::Combined)?;
        match exp.intersect(&obs) {
            Some(meet) if meet == both => println!("  intersecting the two single-study bounds gives {meet}, the combined value"),
            Some(meet) => println!("  intersecting the single-study bounds gives only {meet}; combining the data gives {both}"),
            None => println!("  the single-study bounds do not overlap"),
        }
    }
    Ok(())
}
