//! The portfolio value function `W` and its duality with the surface function `f`.
//!
//! `W(m)` is the numeraire value of the stable state at exchange rates
//! `m = (m_1, ..., m_{n-1}, 1)`. Its gradient is the stable state itself,
//! and `W` is recovered from `f` by a Legendre transform.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amm::{AmmSpec, PriceVector};
use crate::error::{AmmError, Result};
use crate::scalar;
use crate::stable::{self, SolverOptions, StableState};

/// Exchange rates against the numeraire (last token); the last entry is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ExchangeRates(Vec<f64>);

impl ExchangeRates {
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if m.len() < 2 {
            return Err(AmmError::InvalidArgument(
                "exchange rates need at least two tokens".into(),
            ));
        }
        for (index, &value) in m.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(AmmError::NonPositive {
                    what: "rate",
                    index,
                    value,
                });
            }
        }
        if m[m.len() - 1] != 1.0 {
            return Err(AmmError::InvalidArgument(format!(
                "numeraire rate must be exactly 1, got {}",
                m[m.len() - 1]
            )));
        }
        Ok(ExchangeRates(m))
    }

    /// Rates of tokens `1..n-1`; the numeraire's 1 is appended.
    pub fn from_non_numeraire(m_hat: &[f64]) -> Result<Self> {
        let mut m = m_hat.to_vec();
        m.push(1.0);
        Self::new(m)
    }

    pub fn from_prices(p: &PriceVector) -> Self {
        let mut m = stable::rates_of(p);
        let last = m.len() - 1;
        m[last] = 1.0;
        ExchangeRates(m)
    }

    pub fn m_hat(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn as_prices(&self) -> PriceVector {
        PriceVector::new(self.0.clone()).expect("rates are positive")
    }
}

impl Deref for ExchangeRates {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_rates(spec: &AmmSpec, m: &ExchangeRates) -> Result<()> {
    spec.check_dim(m.len())
}

fn stable_at(
    spec: &AmmSpec,
    level: f64,
    m: &ExchangeRates,
    opts: &SolverOptions,
) -> Result<StableState> {
    check_rates(spec, m)?;
    stable::solve_stable_point(spec, level, &m.as_prices(), opts)
}

/// `W(m) = f(x_hat(m)) + m_hat . x_hat(m)`, in numeraire units.
pub fn eval_w(spec: &AmmSpec, level: f64, m: &ExchangeRates, opts: &SolverOptions) -> Result<f64> {
    Ok(stable_at(spec, level, m, opts)?.value(m))
}

/// `grad W(m)`, which equals the stable reserves of tokens `1..n-1`.
pub fn grad_w(
    spec: &AmmSpec,
    level: f64,
    m: &ExchangeRates,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    Ok(stable_at(spec, level, m, opts)?.x_hat().to_vec())
}

/// Smallest grid accepted by [`eval_w_direct`].
pub const MIN_DIRECT_GRID: usize = 64;
const DIRECT_SPAN: f64 = 1e4;

/// Brute-force `W(m) = min_{x_hat} [m_hat . x_hat + f(x_hat)]`.
///
/// Each coordinate is minimized by a log-spaced scan of `grid` nodes over
/// four decades either side of the symmetric surface point followed by a
/// golden-section refinement, nested over the coordinates. Slow; meant as a
/// test oracle for [`eval_w`].
pub fn eval_w_direct(spec: &AmmSpec, level: f64, m: &ExchangeRates, grid: usize) -> Result<f64> {
    check_rates(spec, m)?;
    if grid < MIN_DIRECT_GRID {
        return Err(AmmError::InvalidArgument(format!(
            "grid resolution must be at least {MIN_DIRECT_GRID}, got {grid}"
        )));
    }
    let s = spec.symmetric_point(level)?[0];
    let mut prefix = Vec::with_capacity(spec.n() - 1);
    let value = nested_min(spec, level, m.m_hat(), &mut prefix, s, grid);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AmmError::NoRoot {
            lo: s / DIRECT_SPAN,
            hi: s * DIRECT_SPAN,
        })
    }
}

fn nested_min(
    spec: &AmmSpec,
    level: f64,
    m_hat: &[f64],
    prefix: &mut Vec<f64>,
    s: f64,
    grid: usize,
) -> f64 {
    let k = prefix.len();
    if k == m_hat.len() {
        return match stable::eval_f(spec, level, prefix) {
            Ok(f) => f + prefix.iter().zip(m_hat).map(|(a, b)| a * b).sum::<f64>(),
            Err(_) => f64::INFINITY,
        };
    }
    let (_, v) = scalar::log_grid_min(
        |y| {
            prefix.push(y);
            let v = nested_min(spec, level, m_hat, prefix, s, grid);
            prefix.pop();
            v
        },
        s / DIRECT_SPAN,
        s * DIRECT_SPAN,
        grid,
        1e-11,
    );
    v
}

/// Both sides of the transform identity at one rate vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreEvaluation {
    /// Point where `grad f = -m_hat`.
    pub x_hat: Vec<f64>,
    pub f_at_point: f64,
    pub grad_f: Vec<f64>,
    /// `-f(x_hat) + m_hat . x_hat`, the transform expression with slopes `m_i = -f_{x_i}`.
    pub transform_value: f64,
    /// `W` recovered from the convex conjugate: `f(x_hat) + m_hat . x_hat`.
    pub w_via_transform: f64,
}

const INVERSION_MAX_ITER: usize = 100;
const INVERSION_TOL: f64 = 1e-13;

/// Evaluates `W` through the transform route.
///
/// The slope map is inverted directly: `x_hat` solves `grad f(x_hat) = -m_hat`
/// (by a bracketed root find in one dimension and Newton's method otherwise),
/// without going through the value minimization used by [`eval_w`].
/// Since `transform_value = -f + m_hat . x_hat`, the identity
/// `transform_value + 2 f(x_hat) = W(m)` holds.
pub fn legendre_transform(spec: &AmmSpec, level: f64, m: &ExchangeRates) -> Result<LegendreEvaluation> {
    check_rates(spec, m)?;
    let m_hat = m.m_hat();
    let x_hat = invert_slope(spec, level, m_hat)?;
    let f_at_point = stable::eval_f(spec, level, &x_hat)?;
    let grad_f = stable::grad_f(spec, level, &x_hat)?;
    let dot: f64 = x_hat.iter().zip(m_hat).map(|(a, b)| a * b).sum();
    // convex conjugate of f evaluated at -m_hat
    let conjugate = -dot - f_at_point;
    Ok(LegendreEvaluation {
        x_hat,
        f_at_point,
        grad_f,
        transform_value: -f_at_point + dot,
        w_via_transform: -conjugate,
    })
}

fn invert_slope(spec: &AmmSpec, level: f64, m_hat: &[f64]) -> Result<Vec<f64>> {
    let s = spec.symmetric_point(level)?[0];
    if m_hat.len() == 1 {
        // f' is increasing, from -inf near 0 towards 0 at infinity
        let m1 = m_hat[0];
        let x = scalar::increasing_root(
            |x| match stable::grad_f(spec, level, &[x]) {
                Ok(g) => g[0] + m1,
                Err(_) => f64::NAN,
            },
            s * 1e-6,
            s,
            s * 1e12,
            1e-15,
        )?;
        return Ok(vec![x]);
    }

    let dim = m_hat.len();
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let g = stable::grad_f(spec, level, y)?;
        Ok(g.iter().zip(m_hat).map(|(gi, mi)| gi + mi).collect())
    };
    let norm = |r: &[f64]| {
        r.iter()
            .zip(m_hat)
            .map(|(ri, mi)| (ri / mi).abs())
            .fold(0.0, f64::max)
    };
    let mut y = vec![s; dim];
    let mut r = residual(&y)?;
    for _ in 0..INVERSION_MAX_ITER {
        if norm(&r) <= INVERSION_TOL {
            return Ok(y);
        }
        let h = stable::hess_f(spec, level, &y)?;
        let jac = DMatrix::from_fn(dim, dim, |i, j| h[i][j]);
        let rhs = DVector::from_column_slice(&r);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| AmmError::InvalidArgument("singular surface Hessian".into()))?;
        let mut t: f64 = 1.0;
        for i in 0..dim {
            if step[i] > 0.0 {
                t = t.min(0.9 * y[i] / step[i]);
            }
        }
        let current = norm(&r);
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = (0..dim).map(|i| y[i] - t * step[i]).collect();
            if let Ok(cr) = residual(&cand) {
                if norm(&cr) < current {
                    y = cand;
                    r = cr;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if norm(&r) <= 1e-10 {
        Ok(y)
    } else {
        Err(AmmError::NoConvergence {
            iterations: INVERSION_MAX_ITER,
            grad_residual: norm(&r),
            level_residual: 0.0,
        })
    }
}

/// Which function a homogeneity estimate probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogeneityTarget {
    /// The surface function `f(x_hat)`.
    SurfaceFn,
    /// The value function `W(m_hat)`.
    ValueFn,
}

/// Estimated degree of homogeneity in one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityEstimate {
    /// Zero-based coordinate index.
    pub coordinate: usize,
    /// Mean of the probe slopes `log(g(.., c z_j, ..) / g(z)) / log c`.
    pub degree: f64,
    /// Spread between the largest and smallest probe slope.
    pub max_log_deviation: f64,
    pub probes: usize,
}

/// Base points and scale factors for homogeneity probes.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityProbes {
    pub base_points: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

impl HomogeneityProbes {
    /// Five log-uniform base points in `[0.3, 3]^dim` and scales `{0.5, 2, 10}`.
    pub fn default_for(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (0.3f64.ln(), 3.0f64.ln());
        let base_points = (0..5)
            .map(|_| (0..dim).map(|_| rng.gen_range(lo..hi).exp()).collect())
            .collect();
        HomogeneityProbes {
            base_points,
            scales: vec![0.5, 2.0, 10.0],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.base_points.len() < 3 {
            return Err(AmmError::InvalidArgument(
                "homogeneity needs at least 3 base points".into(),
            ));
        }
        if self.scales.len() < 3 {
            return Err(AmmError::InvalidArgument(
                "homogeneity needs at least 3 scales".into(),
            ));
        }
        if self.scales.iter().any(|c| !(c.is_finite() && *c > 0.0 && *c != 1.0)) {
            return Err(AmmError::InvalidArgument(
                "scales must be positive and different from 1".into(),
            ));
        }
        let lo = self.scales.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.scales.iter().copied().fold(0.0, f64::max);
        if hi / lo < 10.0 {
            return Err(AmmError::InvalidArgument(
                "scales must span at least one decade".into(),
            ));
        }
        for z in &self.base_points {
            if z.len() != dim {
                return Err(AmmError::DimensionMismatch {
                    expected: dim,
                    found: z.len(),
                });
            }
        }
        Ok(())
    }
}

fn eval_target(
    spec: &AmmSpec,
    level: f64,
    target: HomogeneityTarget,
    z: &[f64],
    opts: &SolverOptions,
) -> Result<f64> {
    match target {
        HomogeneityTarget::SurfaceFn => stable::eval_f(spec, level, z),
        HomogeneityTarget::ValueFn => {
            eval_w(spec, level, &ExchangeRates::from_non_numeraire(z)?, opts)
        }
    }
}

/// Estimates the homogeneity degree of `f` or `W` in `coordinate` (zero-based).
pub fn estimate_homogeneity(
    spec: &AmmSpec,
    level: f64,
    target: HomogeneityTarget,
    coordinate: usize,
    probes: &HomogeneityProbes,
    opts: &SolverOptions,
) -> Result<HomogeneityEstimate> {
    let dim = spec.n() - 1;
    if coordinate >= dim {
        return Err(AmmError::InvalidArgument(format!(
            "coordinate {coordinate} out of range for {dim} free coordinates"
        )));
    }
    probes.validate(dim)?;
    let mut slopes = Vec::with_capacity(probes.base_points.len() * probes.scales.len());
    let mut probe = 0;
    for z in &probes.base_points {
        let base = eval_target(spec, level, target, z, opts).map_err(|e| AmmError::Probe {
            probe,
            source: Box::new(e),
        })?;
        for &c in &probes.scales {
            let mut zc = z.clone();
            zc[coordinate] *= c;
            let v = eval_target(spec, level, target, &zc, opts).map_err(|e| AmmError::Probe {
                probe,
                source: Box::new(e),
            })?;
            slopes.push((v / base).ln() / c.ln());
            probe += 1;
        }
    }
    let degree = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HomogeneityEstimate {
        coordinate,
        degree,
        max_log_deviation: hi - lo,
        probes: slopes.len(),
    })
}
