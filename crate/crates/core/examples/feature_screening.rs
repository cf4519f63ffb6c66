//! Which covariate sharpens the individual-level picture most? Simulates
//! the two-sex trial and screens sex, an irrelevant coin flip and a perfect
//! harm marker.

use benefit_bounds::io::build_screen_document;
use benefit_bounds::sim::{preset, simulate_with, SimulationConfig};
use benefit_bounds::strata::{screen_features, DEFAULT_MIN_ARM};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = preset("two-sex-trial")?;
    let sample = simulate_with(&spec, &SimulationConfig::new(50_000, 50_000, 42).keep_units(true))?;
    let cohort = sample.to_cohort(&spec)?;
    let features = ["sex", "noise", "harm_marker"].map(String::from);
    let result = screen_features(&cohort, &features, DEFAULT_MIN_ARM)?;
    print!("{}", build_screen_document(&result, DEFAULT_MIN_ARM, b"").render_text());
    Ok(())
}
