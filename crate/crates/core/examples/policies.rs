//! Survival under different treatment policies, valued at the point
//! estimates of benefit and harm.

use benefit_bounds::decision::{policy_value, Policy};
use benefit_bounds::num::{parse_decimal, to_f64};

fn pct(x: &benefit_bounds::num::Rational) -> String {
    format!("{:.1}%", to_f64(x) * 100.0)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dec = |s: &str| parse_decimal(s).expect("literal");
    // (stratum, P(benefit), P(harm), P(y_c))
    let cases = [("female", "0.279", "0", "0.21"), ("male", "0.49", "0.21", "0.21")];
    for (name, b, h, yc) in cases {
        println!("{name}");
        for policy in Policy::ALL {
            let r = policy_value(&dec(b), &dec(h), &dec(yc), policy)?;
            println!(
                "  {:<22} treat {:>6}  survival {:>6}  gain {:>6}  cure rate among treated {}",
                policy.name(),
                pct(&r.treated_fraction),
                pct(&r.survival),
                pct(&r.incremental_survival),
                r.benefit_per_treated.as_ref().map(pct).unwrap_or_else(|| "-".into())
            );
        }
    }
    Ok(())
}
