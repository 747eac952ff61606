//! The pool value function W as a Legendre transform of the surface function f.

use amm_duality::legendre::{eval_w, eval_w_direct, grad_w, legendre_transform, ExchangeRates};
use amm_duality::{AmmSpec, SolverOptions};

fn main() -> amm_duality::Result<()> {
    let opts = SolverOptions::default();
    for (spec, level) in [
        (AmmSpec::constant_product(2)?, 12.0),
        (AmmSpec::weighted(vec![0.8, 0.2])?, 1.0),
        (AmmSpec::stableswap(2, 1.0, 1.0)?, 1.0),
    ] {
        println!("{spec} at level {level}");
        println!("  {:>6} {:>14} {:>14} {:>14} {:>12}", "m", "W", "transform", "brute force", "dW/dm");
        for m1 in [0.25, 1.0, 3.0] {
            let m = ExchangeRates::from_non_numeraire(&[m1])?;
            let w = eval_w(&spec, level, &m, &opts)?;
            let t = legendre_transform(&spec, level, &m)?;
            let direct = eval_w_direct(&spec, level, &m, 512)?;
            let g = grad_w(&spec, level, &m, &opts)?;
            println!(
                "  {m1:>6} {w:>14.10} {:>14.10} {direct:>14.10} {:>12.8}",
                t.w_via_transform, g[0]
            );
        }
    }
    Ok(())
}
