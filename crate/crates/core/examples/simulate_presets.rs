//! Ground truth of every preset next to the bounds estimated from one
//! simulated trial and observational study.

use benefit_bounds::bounds::{benefit_derivation, EvidenceScope};
use benefit_bounds::num::display_rational;
use benefit_bounds::sim::{ground_truth, preset, simulate, PRESET_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 7;
    for name in PRESET_NAMES {
        let spec = preset(name)?;
        let truth = ground_truth(&spec)?.pooled;
        let sample = simulate(&spec, 10_000, 10_000, seed)?;
        let estimated = benefit_derivation(&sample.probabilities()?, EvidenceScope::Combined)?;
        println!(
            "{name:<26} true benefit {:<6} harm {:<6} | sampled bounds max/min [{}, {}]",
            display_rational(&truth.benefit),
            display_rational(&truth.harm),
            display_rational(&estimated.lower),
            display_rational(&estimated.upper),
        );
    }
    Ok(())
}
