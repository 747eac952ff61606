//! Invariant families, their gradients, and sampled axiom checks.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{AmmError, Result};
use crate::scalar;
use crate::stable;

/// Weights below this are rejected as degenerate.
pub const MIN_WEIGHT: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "constant-product")]
    ConstantProduct,
    #[serde(rename = "weighted-g3m")]
    WeightedG3m,
    #[serde(rename = "stableswap")]
    StableSwap,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::ConstantProduct => "constant-product",
            Family::WeightedG3m => "weighted-g3m",
            Family::StableSwap => "stableswap",
        })
    }
}

/// A validated invariant family.
///
/// For the product families the liquidity surface is indexed by the
/// invariant value `k`. StableSwap surfaces are indexed by the invariant
/// target `d`, and a point lies on the surface when the StableSwap defect
/// vanishes. Every operation that takes a `level` interprets it this way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct AmmSpec {
    family: Family,
    n: usize,
    weights: Vec<f64>,
    amp: f64,
    d: f64,
}

/// On-disk layout of a spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    family: Family,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
}

impl TryFrom<SpecFile> for AmmSpec {
    type Error = AmmError;

    fn try_from(file: SpecFile) -> Result<Self> {
        let invalid = |msg: &str| Err(AmmError::InvalidSpec(msg.to_string()));
        match file.family {
            Family::ConstantProduct => {
                if file.weights.is_some() || file.amp.is_some() || file.d.is_some() {
                    return invalid("constant-product takes no weights, amp or d");
                }
                AmmSpec::constant_product(file.n)
            }
            Family::WeightedG3m => {
                if file.amp.is_some() || file.d.is_some() {
                    return invalid("weighted-g3m takes no amp or d");
                }
                let Some(weights) = file.weights else {
                    return invalid("weighted-g3m requires `weights`");
                };
                if weights.len() != file.n {
                    return Err(AmmError::InvalidSpec(format!(
                        "expected {} weights, found {}",
                        file.n,
                        weights.len()
                    )));
                }
                AmmSpec::weighted(weights)
            }
            Family::StableSwap => {
                if file.weights.is_some() {
                    return invalid("stableswap takes no weights");
                }
                let (Some(amp), Some(d)) = (file.amp, file.d) else {
                    return invalid("stableswap requires `amp` and `d`");
                };
                AmmSpec::stableswap(file.n, amp, d)
            }
        }
    }
}

impl From<AmmSpec> for SpecFile {
    fn from(spec: AmmSpec) -> Self {
        SpecFile {
            family: spec.family,
            n: spec.n,
            weights: (spec.family == Family::WeightedG3m).then_some(spec.weights),
            amp: (spec.family == Family::StableSwap).then_some(spec.amp),
            d: (spec.family == Family::StableSwap).then_some(spec.d),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(AmmError::InvalidSpec(format!("n must be at least 2, got {n}")));
    }
    Ok(())
}

impl AmmSpec {
    /// `x_1 x_2 ... x_n`.
    pub fn constant_product(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(AmmSpec {
            family: Family::ConstantProduct,
            n,
            weights: vec![1.0 / n as f64; n],
            amp: 0.0,
            d: 0.0,
        })
    }

    /// Geometric mean market maker `prod x_i^{w_i}` with weights summing to one.
    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        check_n(weights.len())?;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < MIN_WEIGHT {
                return Err(AmmError::InvalidSpec(format!(
                    "weight {i} is {w}; weights must be at least {MIN_WEIGHT:e}"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(AmmError::InvalidSpec(format!("weights sum to {sum}, not 1")));
        }
        Ok(AmmSpec {
            family: Family::WeightedG3m,
            n: weights.len(),
            weights,
            amp: 0.0,
            d: 0.0,
        })
    }

    /// StableSwap invariant with amplification `amp` and default target `d`.
    pub fn stableswap(n: usize, amp: f64, d: f64) -> Result<Self> {
        check_n(n)?;
        if !(amp.is_finite() && amp > 0.0) {
            return Err(AmmError::InvalidSpec(format!("amp must be positive, got {amp}")));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(AmmError::InvalidSpec(format!("d must be positive, got {d}")));
        }
        Ok(AmmSpec {
            family: Family::StableSwap,
            n,
            weights: Vec::new(),
            amp,
            d,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AmmError::InvalidSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weights of a weighted pool; `1/n` each for constant product; empty for StableSwap.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn amp(&self) -> Option<f64> {
        (self.family == Family::StableSwap).then_some(self.amp)
    }

    pub fn d(&self) -> Option<f64> {
        (self.family == Family::StableSwap).then_some(self.d)
    }

    /// Whether the family is a geometric mean market maker.
    pub fn is_geometric(&self) -> bool {
        self.family != Family::StableSwap
    }

    /// `A(x)`. For StableSwap this is the signed defect at the spec's own `d`.
    pub fn eval_invariant(&self, x: &ReserveVector) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match self.family {
            Family::ConstantProduct => x.iter().product(),
            Family::WeightedG3m => x
                .iter()
                .zip(&self.weights)
                .map(|(xi, wi)| xi.powf(*wi))
                .product(),
            Family::StableSwap => self.stableswap_defect(self.d, x),
        })
    }

    /// Analytic gradient of [`eval_invariant`](Self::eval_invariant).
    pub fn eval_gradient(&self, x: &ReserveVector) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(match self.family {
            Family::StableSwap => self.surface_gradient(self.d, x),
            _ => self.surface_gradient(0.0, x),
        })
    }

    /// Power of `x_i` in the product families: 1 for constant product, `w_i` otherwise.
    fn exponent(&self, i: usize) -> f64 {
        match self.family {
            Family::ConstantProduct => 1.0,
            _ => self.weights[i],
        }
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(AmmError::DimensionMismatch {
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_level(&self, level: f64) -> Result<()> {
        if !(level.is_finite() && level > 0.0) {
            return Err(AmmError::InvalidArgument(format!(
                "level must be positive and finite, got {level}"
            )));
        }
        Ok(())
    }

    /// `d * prod_i d / (n x_i)`, the reciprocal-product term of StableSwap.
    fn stableswap_tail(&self, d: f64, x: &[f64]) -> f64 {
        let n = self.n as f64;
        x.iter().fold(d, |acc, xi| acc * d / (n * xi))
    }

    fn stableswap_defect(&self, d: f64, x: &[f64]) -> f64 {
        let nn = (self.n as f64).powi(self.n as i32);
        let sum: f64 = x.iter().sum();
        self.amp * nn * sum + d - self.amp * d * nn - self.stableswap_tail(d, x)
    }

    /// `F_d(x)` relative to the total magnitude of its terms.
    fn stableswap_relative_defect(&self, d: f64, x: &[f64]) -> f64 {
        let nn = (self.n as f64).powi(self.n as i32);
        let sum: f64 = x.iter().sum();
        let tail = self.stableswap_tail(d, x);
        let f = self.amp * nn * sum + d - self.amp * d * nn - tail;
        f / (self.amp * nn * sum + d + self.amp * d * nn + tail)
    }

    /// Scale-free on-surface defect, strictly increasing in every coordinate.
    ///
    /// Product families use `log A(x) - log k`; StableSwap divides `F_d(x)`
    /// by the sum of the absolute values of its terms.
    pub(crate) fn defect(&self, level: f64, x: &[f64]) -> f64 {
        match self.family {
            Family::ConstantProduct => x.iter().map(|v| v.ln()).sum::<f64>() - level.ln(),
            Family::WeightedG3m => {
                x.iter()
                    .zip(&self.weights)
                    .map(|(v, w)| w * v.ln())
                    .sum::<f64>()
                    - level.ln()
            }
            Family::StableSwap => self.stableswap_relative_defect(level, x),
        }
    }

    /// Gradient of the function whose level set is the surface at `level`.
    pub(crate) fn surface_gradient(&self, level: f64, x: &[f64]) -> Vec<f64> {
        match self.family {
            Family::StableSwap => {
                let nn = (self.n as f64).powi(self.n as i32);
                let tail = self.stableswap_tail(level, x);
                x.iter().map(|xi| self.amp * nn + tail / xi).collect()
            }
            _ => {
                let a: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| xi.powf(self.exponent(i)))
                    .product();
                x.iter()
                    .enumerate()
                    .map(|(i, xi)| a * self.exponent(i) / xi)
                    .collect()
            }
        }
    }

    /// Level of the surface passing through `x`.
    pub fn level_through(&self, x: &ReserveVector) -> Result<f64> {
        self.check_dim(x.len())?;
        match self.family {
            Family::StableSwap => {
                // F_d(x) is concave in d, positive at d = 0 and tends to -inf,
                // so the positive root is unique.
                let sum: f64 = x.iter().sum();
                let g = |d: f64| -self.stableswap_defect(d, x);
                scalar::increasing_root(g, sum * 1e-12, sum, sum * 1e6, 1e-15)
            }
            _ => self.eval_invariant(x),
        }
    }

    /// The point with all coordinates equal on the surface at `level`.
    pub fn symmetric_point(&self, level: f64) -> Result<Vec<f64>> {
        self.check_level(level)?;
        let s = match self.family {
            Family::ConstantProduct => level.powf(1.0 / self.n as f64),
            Family::WeightedG3m => level,
            Family::StableSwap => level / self.n as f64,
        };
        Ok(vec![s; self.n])
    }
}

impl fmt::Display for AmmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::ConstantProduct => write!(f, "constant-product(n={})", self.n),
            Family::WeightedG3m => write!(f, "weighted-g3m(w={:?})", self.weights),
            Family::StableSwap => {
                write!(f, "stableswap(n={}, amp={}, d={})", self.n, self.amp, self.d)
            }
        }
    }
}

fn positive_vec(what: &'static str, v: Vec<f64>) -> Result<Vec<f64>> {
    for (index, &value) in v.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(AmmError::NonPositive { what, index, value });
        }
    }
    Ok(v)
}

macro_rules! positive_newtype {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(v: Vec<f64>) -> Result<Self> {
                positive_vec($what, v).map($name)
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = AmmError;

            fn try_from(v: Vec<f64>) -> Result<Self> {
                Self::new(v)
            }
        }
    };
}

positive_newtype!(
    /// Token quantities held by the pool.
    ReserveVector,
    "reserve"
);
positive_newtype!(
    /// Token prices in some measuring currency.
    PriceVector,
    "price"
);

impl PriceVector {
    /// Scales every price by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|p| p * c).collect())
    }
}

/// Outcome of a sampled check of the AMM axioms.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub samples: usize,
    /// Points where some gradient component was not strictly positive.
    pub gradient_violations: Vec<Vec<f64>>,
    /// Points where the Hessian of the induced surface function was not positive definite.
    pub convexity_violations: Vec<Vec<f64>>,
    /// Points where the surface function could not be evaluated.
    pub evaluation_failures: Vec<Vec<f64>>,
    pub min_gradient: f64,
}

const MAX_VALIDATION_SAMPLES: usize = 4096;

/// Samples the box `[lo, hi]` on a log-spaced grid and checks gradient
/// positivity and local strict convexity of the induced surface function.
pub fn validate_spec(
    spec: &AmmSpec,
    lo: &ReserveVector,
    hi: &ReserveVector,
) -> Result<ValidationReport> {
    spec.check_dim(lo.len())?;
    spec.check_dim(hi.len())?;
    if lo.iter().zip(hi.iter()).any(|(a, b)| a >= b) {
        return Err(AmmError::InvalidArgument("empty sampling box".into()));
    }
    let n = spec.n();
    let per_axis = ((MAX_VALIDATION_SAMPLES as f64).powf(1.0 / n as f64).floor() as usize)
        .clamp(2, 16);
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (a, b) = (lo[i].ln(), hi[i].ln());
            (0..per_axis)
                .map(|k| (a + (b - a) * k as f64 / (per_axis - 1) as f64).exp())
                .collect()
        })
        .collect();

    let mut report = ValidationReport {
        passed: true,
        samples: 0,
        gradient_violations: Vec::new(),
        convexity_violations: Vec::new(),
        evaluation_failures: Vec::new(),
        min_gradient: f64::INFINITY,
    };
    let mut index = vec![0usize; n];
    loop {
        let x: Vec<f64> = index.iter().enumerate().map(|(i, &k)| axes[i][k]).collect();
        report.samples += 1;
        check_point(spec, &x, &mut report);

        let mut axis = 0;
        while axis < n {
            index[axis] += 1;
            if index[axis] < per_axis {
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
        if axis == n {
            break;
        }
    }
    report.passed = report.gradient_violations.is_empty()
        && report.convexity_violations.is_empty()
        && report.evaluation_failures.is_empty();
    Ok(report)
}

fn check_point(spec: &AmmSpec, x: &[f64], report: &mut ValidationReport) {
    let rv = ReserveVector(x.to_vec());
    let grad = match spec.eval_gradient(&rv) {
        Ok(g) => g,
        Err(_) => {
            report.evaluation_failures.push(x.to_vec());
            return;
        }
    };
    let gmin = grad.iter().copied().fold(f64::INFINITY, f64::min);
    report.min_gradient = report.min_gradient.min(gmin);
    if !(gmin > 0.0) {
        report.gradient_violations.push(x.to_vec());
    }
    let hessian = spec
        .level_through(&rv)
        .and_then(|level| stable::hess_f(spec, level, &x[..x.len() - 1]));
    match hessian {
        Ok(h) => {
            let m = h.len();
            let mat = DMatrix::from_fn(m, m, |i, j| h[i][j]);
            if mat.cholesky().is_none() {
                report.convexity_violations.push(x.to_vec());
            }
        }
        Err(_) => report.evaluation_failures.push(x.to_vec()),
    }
}
