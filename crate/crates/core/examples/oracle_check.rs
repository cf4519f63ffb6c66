//! Cross-checks the closed-form bounds against brute-force vertex
//! enumeration over response-type populations, and prints the extreme
//! populations that attain each bound.

use benefit_bounds::bounds::{bounds, EvidenceScope, Target};
use benefit_bounds::num::display_rational;
use benefit_bounds::oracle::{oracle_solve, pns_of, ResponseTypeDistribution};
use benefit_bounds::tables;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let male = tables::male_probabilities();
    let sol = oracle_solve(&male, EvidenceScope::ExperimentalOnly, Target::Benefit)?;
    println!(
        "male, trial only: benefit {} over {} vertices",
        sol.interval, sol.vertex_count
    );
    let show = |d: &ResponseTypeDistribution| {
        d.cells().iter().map(display_rational).collect::<Vec<_>>().join(" ")
    };
    // cells: benefit, harm, always, doomed; each split into chose-treatment, chose-control
    println!("  minimizing population {}", show(&sol.min_witness));
    println!("  maximizing population {}", show(&sol.max_witness));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..500 {
        let weights: [u64; 8] = std::array::from_fn(|_| rng.random_range(0..6));
        let Ok(population) = ResponseTypeDistribution::from_weights(weights) else {
            continue;
        };
        let p = pns_of(&population).study_probabilities();
        for scope in EvidenceScope::ALL {
            for target in [Target::Benefit, Target::Harm] {
                let oracle = oracle_solve(&p, scope, target)?.interval;
                assert_eq!(bounds(&p, scope, target)?, oracle);
                checked += 1;
            }
        }
    }
    println!("{checked} random comparisons agree exactly");
    Ok(())
}
