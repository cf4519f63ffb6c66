//! Whether the drug can harm anyone, and how many patients must be treated
//! to save one.

use benefit_bounds::bounds::{ate, benefit_bounds, EvidenceScope};
use benefit_bounds::decision::{
    monotonicity_necessary, monotonicity_sufficient, monotonicity_verdict, nnt_classic,
    nnt_from_benefit,
};
use benefit_bounds::num::display_rational;
use benefit_bounds::tables;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, p) in [
        ("female", tables::female_probabilities()),
        ("male", tables::male_probabilities()),
    ] {
        let necessary = monotonicity_necessary(&p)?;
        let verdict = monotonicity_verdict(&p)?;
        println!("{name}: monotonicity {}", verdict.status);
        println!(
            "  P(y_t) >= P(y) >= P(y_c) {}; sufficient test: {:?}",
            if necessary.passes { "holds" } else { "fails" },
            monotonicity_sufficient(&p)?
        );
        for e in &verdict.evidence {
            println!("  - {e}");
        }
        let cate = ate(&p)?;
        let classic = nnt_classic(&cate).map(|x| display_rational(&x));
        for scope in [EvidenceScope::Combined, EvidenceScope::ExperimentalOnly] {
            let nnt = nnt_from_benefit(&benefit_bounds(&p, scope)?);
            println!("  NNT ({scope}): {nnt}");
        }
        println!("  classic 1/CATE: {}", classic.unwrap_or_else(|| "undefined".into()));
    }
    Ok(())
}
