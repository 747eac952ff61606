//! Stable states of a constant-product and a StableSwap pool.

use amm_duality::{solve_stable_point, AmmSpec, PriceVector, SolverOptions};

fn main() -> amm_duality::Result<()> {
    let opts = SolverOptions::default();

    let cp = AmmSpec::constant_product(2)?;
    let p = PriceVector::new(vec![6.0, 2.0])?;
    let s = solve_stable_point(&cp, 12.0, &p, &opts)?;
    println!("{cp}, k = 12, p = (6, 2)");
    println!("  x = ({:.6}, {:.6}), value {:.6}", s.x[0], s.x[1], s.value(&p));

    let ss = AmmSpec::stableswap(2, 1.0, 1.0)?;
    println!("{ss}");
    for ratio in [0.25, 1.0, 2.0, 10.0] {
        let p = PriceVector::new(vec![ratio, 1.0])?;
        let s = solve_stable_point(&ss, 1.0, &p, &opts)?;
        println!(
            "  p1/p2 = {ratio:>5}: x = ({:.6}, {:.6}) after {} iterations, residual {:.1e}",
            s.x[0], s.x[1], s.iterations, s.grad_residual
        );
    }
    Ok(())
}
