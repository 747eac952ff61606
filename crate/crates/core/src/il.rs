//! Impermanent loss, exchange rate level independence, and G3M recovery.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amm::{AmmSpec, PriceVector, MIN_WEIGHT};
use crate::error::{AmmError, Result};
use crate::legendre::{
    self, estimate_homogeneity, ExchangeRates, HomogeneityEstimate, HomogeneityProbes,
    HomogeneityTarget,
};
use crate::stable::{self, SolverOptions, StableState};

/// Componentwise quotient of final over initial exchange rates; last entry exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RatioVector(Vec<f64>);

impl RatioVector {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        ExchangeRates::new(t.clone())?;
        Ok(RatioVector(t))
    }

    pub fn from_non_numeraire(t_hat: &[f64]) -> Result<Self> {
        let mut t = t_hat.to_vec();
        t.push(1.0);
        Self::new(t)
    }

    /// `t ∘ m`, the final rates reached from `m` under these ratios.
    pub fn apply(&self, m: &ExchangeRates) -> Result<ExchangeRates> {
        if m.len() != self.0.len() {
            return Err(AmmError::DimensionMismatch {
                expected: self.0.len(),
                found: m.len(),
            });
        }
        ExchangeRates::new(self.0.iter().zip(m.iter()).map(|(t, m)| t * m).collect())
    }
}

impl Deref for RatioVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `t_j = (p^f_j / p^f_n) / (p^i_j / p^i_n)`.
pub fn ratio_vector(p_i: &PriceVector, p_f: &PriceVector) -> Result<RatioVector> {
    if p_i.len() != p_f.len() {
        return Err(AmmError::DimensionMismatch {
            expected: p_i.len(),
            found: p_f.len(),
        });
    }
    let m_i = ExchangeRates::from_prices(p_i);
    let m_f = ExchangeRates::from_prices(p_f);
    let mut t: Vec<f64> = m_f.iter().zip(m_i.iter()).map(|(f, i)| f / i).collect();
    let last = t.len() - 1;
    t[last] = 1.0;
    RatioVector::new(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlReport {
    /// `v_pool / v_hold - 1`.
    pub il: f64,
    /// Initial stable reserves valued at final prices, numeraire units.
    pub v_hold: f64,
    /// Final stable reserves valued at final prices, numeraire units.
    pub v_pool: f64,
    pub x_initial: StableState,
    pub x_final: StableState,
    pub t: RatioVector,
}

/// Impermanent loss of a pool moved by arbitrage from the stable state at
/// `p_i` to the stable state at `p_f`, on one liquidity surface.
pub fn impermanent_loss(
    spec: &AmmSpec,
    level: f64,
    p_i: &PriceVector,
    p_f: &PriceVector,
    opts: &SolverOptions,
) -> Result<IlReport> {
    let t = ratio_vector(p_i, p_f)?;
    let x_initial = stable::solve_stable_point(spec, level, p_i, opts)?;
    let x_final = stable::solve_stable_point(spec, level, p_f, opts)?;
    let m_f = ExchangeRates::from_prices(p_f);
    let v_hold = x_initial.value(&m_f);
    let v_pool = x_final.value(&m_f);
    Ok(IlReport {
        il: v_pool / v_hold - 1.0,
        v_hold,
        v_pool,
        x_initial,
        x_final,
        t,
    })
}

/// Impermanent loss through the value function:
/// `W(m_f) / [W(m_i) + (m_f - m_i) . grad W(m_i)] - 1`.
pub fn il_from_w(
    spec: &AmmSpec,
    level: f64,
    m_i: &ExchangeRates,
    m_f: &ExchangeRates,
    opts: &SolverOptions,
) -> Result<f64> {
    if m_i.len() != m_f.len() {
        return Err(AmmError::DimensionMismatch {
            expected: m_i.len(),
            found: m_f.len(),
        });
    }
    let w_f = legendre::eval_w(spec, level, m_f, opts)?;
    let w_i = legendre::eval_w(spec, level, m_i, opts)?;
    let grad = legendre::grad_w(spec, level, m_i, opts)?;
    let tangent: f64 = m_f
        .m_hat()
        .iter()
        .zip(m_i.m_hat())
        .zip(&grad)
        .map(|((f, i), g)| (f - i) * g)
        .sum();
    Ok(w_f / (w_i + tangent) - 1.0)
}

/// Constant-product impermanent loss: geometric over arithmetic mean of `t`, minus 1.
pub fn il_cpmm_closed(t: &RatioVector) -> f64 {
    let n = t.len() as f64;
    let gm = (t.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
    let am = t.iter().sum::<f64>() / n;
    gm / am - 1.0
}

/// Weighted-pool impermanent loss `prod t_j^{w_j} / sum w_j t_j - 1`.
pub fn il_weighted_closed(weights: &[f64], t: &RatioVector) -> Result<f64> {
    if weights.len() != t.len() {
        return Err(AmmError::DimensionMismatch {
            expected: t.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= MIN_WEIGHT))
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(AmmError::InvalidArgument(
            "weights must be positive and sum to 1".into(),
        ));
    }
    let log_gm: f64 = weights.iter().zip(t.iter()).map(|(w, v)| w * v.ln()).sum();
    let am: f64 = weights.iter().zip(t.iter()).map(|(w, v)| w * v).sum();
    Ok(log_gm.exp() / am - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErliVerdict {
    Erli,
    NotErli,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErliReport {
    pub verdict: ErliVerdict,
    pub f_degrees: Vec<HomogeneityEstimate>,
    pub w_degrees: Vec<HomogeneityEstimate>,
    /// Largest spread of impermanent loss across base rates at a fixed ratio vector.
    pub direct_spread: f64,
    pub tolerance: f64,
    /// Evaluation failures, if any.
    pub diagnostics: Vec<String>,
}

/// Probe configuration for [`erli_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErliConfig {
    pub tolerance: f64,
    /// Ratio vectors `t_hat` (numeraire omitted) held fixed while base rates vary.
    pub ratios: Vec<Vec<f64>>,
    /// Initial rates `m_hat` (numeraire omitted).
    pub base_rates: Vec<Vec<f64>>,
    pub homogeneity: HomogeneityProbes,
    pub solver: SolverOptions,
}

pub const DEFAULT_ERLI_TOLERANCE: f64 = 1e-6;
const DEFAULT_SEED: u64 = 0x1e11;
/// Verdicts between `tolerance` and this multiple of it are inconclusive.
pub const ERLI_HYSTERESIS: f64 = 10.0;

impl ErliConfig {
    /// Ratios with one coordinate at 2 or 1/4 plus all coordinates at 3;
    /// base rates are the unit vector, token 1 doubled, and eight
    /// log-uniform draws from `[0.1, 10]^(n-1)`.
    pub fn default_for(n: usize) -> Self {
        let dim = n - 1;
        let mut ratios = Vec::new();
        for j in 0..dim {
            for v in [2.0, 0.25] {
                let mut t = vec![1.0; dim];
                t[j] = v;
                ratios.push(t);
            }
        }
        ratios.push(vec![3.0; dim]);

        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        let mut base_rates = vec![vec![1.0; dim]];
        let mut doubled = vec![1.0; dim];
        doubled[0] = 2.0;
        base_rates.push(doubled);
        let (lo, hi) = (0.1f64.ln(), 10f64.ln());
        for _ in 0..8 {
            base_rates.push((0..dim).map(|_| rng.gen_range(lo..hi).exp()).collect());
        }
        ErliConfig {
            tolerance: DEFAULT_ERLI_TOLERANCE,
            ratios,
            base_rates,
            homogeneity: HomogeneityProbes::default_for(dim, DEFAULT_SEED),
            solver: SolverOptions::default(),
        }
    }
}

/// Largest spread of impermanent loss across `base_rates` for each ratio in `ratios`.
pub fn il_spread_over_base_rates(
    spec: &AmmSpec,
    level: f64,
    ratios: &[Vec<f64>],
    base_rates: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<f64> {
    let mut spread: f64 = 0.0;
    for t_hat in ratios {
        let t = RatioVector::from_non_numeraire(t_hat)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m_hat in base_rates {
            let m_i = ExchangeRates::from_non_numeraire(m_hat)?;
            let m_f = t.apply(&m_i)?;
            let r = impermanent_loss(spec, level, &m_i.as_prices(), &m_f.as_prices(), opts)?;
            lo = lo.min(r.il);
            hi = hi.max(r.il);
        }
        spread = spread.max(hi - lo);
    }
    Ok(spread)
}

/// Tests whether impermanent loss depends on the rates only through `t`.
///
/// Two sub-tests: a direct one, comparing impermanent loss at fixed `t`
/// across base rates, and a structural one, checking that `f` is
/// homogeneous in every coordinate. Both must pass for an `Erli` verdict;
/// failing either by the hysteresis factor gives `NotErli`.
pub fn erli_test(spec: &AmmSpec, level: f64, config: &ErliConfig) -> Result<ErliReport> {
    spec.check_level(level)?;
    if !(config.tolerance > 0.0) {
        return Err(AmmError::InvalidArgument("ERLI tolerance must be positive".into()));
    }
    let dim = spec.n() - 1;
    let mut diagnostics = Vec::new();

    let direct_spread = match il_spread_over_base_rates(
        spec,
        level,
        &config.ratios,
        &config.base_rates,
        &config.solver,
    ) {
        Ok(s) => s,
        Err(e) => {
            diagnostics.push(format!("direct test: {e}"));
            f64::NAN
        }
    };

    let mut degrees = |target: HomogeneityTarget| {
        let mut out = Vec::with_capacity(dim);
        for j in 0..dim {
            match estimate_homogeneity(spec, level, target, j, &config.homogeneity, &config.solver)
            {
                Ok(e) => out.push(e),
                Err(e) => diagnostics.push(format!("{target:?} coordinate {j}: {e}")),
            }
        }
        out
    };
    let f_degrees = degrees(HomogeneityTarget::SurfaceFn);
    let w_degrees = degrees(HomogeneityTarget::ValueFn);

    let tol = config.tolerance;
    let f_dev = f_degrees
        .iter()
        .map(|e| e.max_log_deviation)
        .fold(0.0, f64::max);
    let f_complete = f_degrees.len() == dim;
    let verdict = if direct_spread >= ERLI_HYSTERESIS * tol || f_dev >= ERLI_HYSTERESIS * tol {
        ErliVerdict::NotErli
    } else if diagnostics.is_empty() && f_complete && direct_spread <= tol && f_dev <= tol {
        ErliVerdict::Erli
    } else {
        ErliVerdict::Inconclusive
    };
    Ok(ErliReport {
        verdict,
        f_degrees,
        w_degrees,
        direct_spread,
        tolerance: tol,
        diagnostics,
    })
}

/// Exponents of a G3M `B(x) = x_1^{g_1} ... x_{n-1}^{g_{n-1}} x_n` sharing the
/// surface's level sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G3mEquivalent {
    pub exponents: Vec<f64>,
    /// Largest relative deviation of `B` from its geometric mean over sampled surface points.
    pub fit_residual: f64,
}

/// Recovers `B` from the homogeneity degrees `lambda_j` of `f`: `g_j = -lambda_j`.
pub fn recover_g3m(spec: &AmmSpec, level: f64, probes: &HomogeneityProbes) -> Result<G3mEquivalent> {
    let dim = spec.n() - 1;
    let opts = SolverOptions::default();
    let mut exponents = Vec::with_capacity(dim + 1);
    for j in 0..dim {
        let e = estimate_homogeneity(spec, level, HomogeneityTarget::SurfaceFn, j, probes, &opts)?;
        exponents.push(-e.degree);
    }
    exponents.push(1.0);

    let mut samples = probes.base_points.clone();
    for z in &probes.base_points {
        for j in 0..dim {
            for &c in &probes.scales {
                let mut zc = z.clone();
                zc[j] *= c;
                samples.push(zc);
            }
        }
    }
    let mut log_b = Vec::with_capacity(samples.len());
    for z in &samples {
        let x = stable::surface_point(spec, level, z)?;
        log_b.push(x.iter().zip(&exponents).map(|(xi, g)| g * xi.ln()).sum::<f64>());
    }
    let mean = log_b.iter().sum::<f64>() / log_b.len() as f64;
    let fit_residual = log_b
        .iter()
        .map(|v| (v - mean).exp_m1().abs())
        .fold(0.0, f64::max);
    Ok(G3mEquivalent {
        exponents,
        fit_residual,
    })
}

pub const SAME_SURFACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceComparison {
    pub same: bool,
    pub max_defect: f64,
}

/// Samples surface `a` at the given `x_hat` points and measures how far
/// they are from surface `b`.
pub fn same_level_surfaces(
    spec_a: &AmmSpec,
    level_a: f64,
    spec_b: &AmmSpec,
    level_b: f64,
    samples: &[Vec<f64>],
) -> Result<SurfaceComparison> {
    spec_b.check_dim(spec_a.n())?;
    spec_b.check_level(level_b)?;
    let mut max_defect: f64 = 0.0;
    for z in samples {
        let x = stable::surface_point(spec_a, level_a, z)?;
        max_defect = max_defect.max(spec_b.defect(level_b, &x).abs());
    }
    Ok(SurfaceComparison {
        same: max_defect <= SAME_SURFACE_TOL,
        max_defect,
    })
}
