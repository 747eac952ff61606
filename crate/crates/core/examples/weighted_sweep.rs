//! Impermanent loss against the price ratio for equal and skewed weights.
//!
//! Writes one CSV per pool into the directory given as the first argument
//! (default: the current directory), 101 log-spaced points on [0.1, 10].

use std::fs;
use std::path::PathBuf;

use amm_duality::il::impermanent_loss;
use amm_duality::{AmmSpec, PriceVector, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    fs::create_dir_all(&dir)?;
    let opts = SolverOptions::default();
    let p_i = PriceVector::new(vec![1.0, 1.0])?;

    for (name, w) in [("equal", [0.5, 0.5]), ("w20-80", [0.2, 0.8]), ("w80-20", [0.8, 0.2])] {
        let spec = AmmSpec::weighted(w.to_vec())?;
        let mut csv = String::from("t,il\n");
        for k in 0..=100 {
            let t = 10f64.powf(-1.0 + 2.0 * k as f64 / 100.0);
            let p_f = PriceVector::new(vec![t, 1.0])?;
            let r = impermanent_loss(&spec, 1.0, &p_i, &p_f, &opts)?;
            csv.push_str(&format!("{t:.12e},{:.12e}\n", r.il));
        }
        let path = dir.join(format!("il_{name}.csv"));
        fs::write(&path, csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
