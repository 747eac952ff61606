//! Impermanent loss for a price move, by direct valuation and through W.

use amm_duality::il::{il_cpmm_closed, il_from_w, impermanent_loss, ratio_vector};
use amm_duality::legendre::ExchangeRates;
use amm_duality::{AmmSpec, PriceVector, SolverOptions};

fn main() -> amm_duality::Result<()> {
    let opts = SolverOptions::default();
    let p_i = PriceVector::new(vec![1.0, 1.0])?;
    let p_f = PriceVector::new(vec![4.0, 1.0])?;

    let pools = [
        (AmmSpec::constant_product(2)?, 1.0),
        (AmmSpec::weighted(vec![0.8, 0.2])?, 1.0),
        (AmmSpec::weighted(vec![0.2, 0.8])?, 1.0),
        (AmmSpec::stableswap(2, 1.0, 1.0)?, 1.0),
        (AmmSpec::stableswap(2, 50.0, 1.0)?, 1.0),
    ];
    println!("price of token 1 moves 1 -> 4 against token 2");
    for (spec, level) in &pools {
        let r = impermanent_loss(spec, *level, &p_i, &p_f, &opts)?;
        let via_w = il_from_w(
            spec,
            *level,
            &ExchangeRates::from_prices(&p_i),
            &ExchangeRates::from_prices(&p_f),
            &opts,
        )?;
        println!(
            "  {:<40} IL {:+.6}  (through W {:+.6}, hold {:.4}, pool {:.4})",
            spec.to_string(),
            r.il,
            via_w,
            r.v_hold,
            r.v_pool
        );
    }
    let t = ratio_vector(&p_i, &p_f)?;
    println!("closed form for the constant-product pool: {:+.6}", il_cpmm_closed(&t));
    Ok(())
}
