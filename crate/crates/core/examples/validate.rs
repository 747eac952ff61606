//! Checks that pool specifications are monotone and convex on a box.

use amm_duality::{validate_spec, AmmSpec, ReserveVector};

fn main() -> amm_duality::Result<()> {
    let lo = ReserveVector::new(vec![0.05, 0.05])?;
    let hi = ReserveVector::new(vec![5.0, 5.0])?;
    for spec in [
        AmmSpec::constant_product(2)?,
        AmmSpec::weighted(vec![0.3, 0.7])?,
        AmmSpec::stableswap(2, 1.0, 1.0)?,
        AmmSpec::stableswap(2, 100.0, 1.0)?,
    ] {
        let r = validate_spec(&spec, &lo, &hi)?;
        println!(
            "{spec}: {} over {} samples (min gradient {:.3e}, {} gradient / {} convexity violations)",
            if r.passed { "ok" } else { "FAILED" },
            r.samples,
            r.min_gradient,
            r.gradient_violations.len(),
            r.convexity_violations.len()
        );
    }
    Ok(())
}
