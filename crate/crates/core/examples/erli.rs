//! Which pools have impermanent loss independent of the exchange-rate level?

use amm_duality::il::{erli_test, recover_g3m, ErliConfig, ErliVerdict};
use amm_duality::legendre::HomogeneityProbes;
use amm_duality::AmmSpec;

fn main() -> amm_duality::Result<()> {
    let pools = [
        (AmmSpec::constant_product(2)?, 1.0),
        (AmmSpec::constant_product(3)?, 1.0),
        (AmmSpec::weighted(vec![0.8, 0.2])?, 1.0),
        (AmmSpec::stableswap(2, 1.0, 1.0)?, 1.0),
        (AmmSpec::stableswap(3, 10.0, 3.0)?, 3.0),
    ];
    for (spec, level) in &pools {
        let config = ErliConfig::default_for(spec.n());
        let report = erli_test(spec, *level, &config)?;
        let degrees: Vec<String> = report
            .f_degrees
            .iter()
            .map(|d| format!("{:.4}", d.degree))
            .collect();
        println!(
            "{spec}: {:?}, spread {:.2e}, degrees of f [{}]",
            report.verdict,
            report.direct_spread,
            degrees.join(", ")
        );
        if report.verdict == ErliVerdict::Erli {
            let probes = HomogeneityProbes::default_for(spec.n() - 1, 7);
            let g = recover_g3m(spec, *level, &probes)?;
            println!("  equivalent weighted pool exponents {:?}", g.exponents);
        }
    }
    Ok(())
}
