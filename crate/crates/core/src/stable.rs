//! Arbitrage-stable states and the surface function `x_n = f(x_1, ..., x_{n-1})`.
//!
//! Token `n` is the numeraire. For a price vector `p` the exchange rates are
//! `m_i = p_i / p_n`, and the stable state minimizes `m . x_hat + f(x_hat)`
//! over the first `n - 1` reserves.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::amm::{AmmSpec, Family, PriceVector, ReserveVector};
use crate::error::{AmmError, Result};
use crate::scalar;

const BRACKET_LO: f64 = 1e-9;
const BRACKET_HI: f64 = 1.0;
const BRACKET_CAP: f64 = 1e12;
const ROOT_XTOL: f64 = 1e-15;
/// Relative step for central differences of `grad_f`.
const HESSIAN_STEP: f64 = 1e-5;
const MAX_BACKTRACKS: usize = 60;
const GOLDEN_SWEEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on both the gradient and the on-surface residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Use the analytic solution for the product families.
    pub closed_form: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200,
            closed_form: true,
        }
    }
}

impl SolverOptions {
    /// Default options with the numerical solver forced on.
    pub fn numeric() -> Self {
        SolverOptions {
            closed_form: false,
            ..Self::default()
        }
    }
}

/// The value-minimizing state on a liquidity surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableState {
    pub x: ReserveVector,
    /// Multiplier in `grad A(x) = lambda p`.
    pub lambda: f64,
    /// Max-norm of the difference between `grad A` and `p`, both scaled to unit max component.
    pub grad_residual: f64,
    /// Absolute scale-free on-surface defect.
    pub level_residual: f64,
    pub iterations: usize,
}

impl StableState {
    /// Reserves of the non-numeraire tokens.
    pub fn x_hat(&self) -> &[f64] {
        &self.x[..self.x.len() - 1]
    }

    /// `p . x`.
    pub fn value(&self, p: &[f64]) -> f64 {
        self.x.iter().zip(p).map(|(a, b)| a * b).sum()
    }
}

fn check_x_hat(spec: &AmmSpec, x_hat: &[f64]) -> Result<()> {
    if x_hat.len() + 1 != spec.n() {
        return Err(AmmError::DimensionMismatch {
            expected: spec.n() - 1,
            found: x_hat.len(),
        });
    }
    for (index, &value) in x_hat.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(AmmError::NonPositive {
                what: "x_hat",
                index,
                value,
            });
        }
    }
    Ok(())
}

fn with_last(x_hat: &[f64], last: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(x_hat.len() + 1);
    x.extend_from_slice(x_hat);
    x.push(last);
    x
}

/// Numeraire reserve on the surface at `level` given the other reserves.
pub fn eval_f(spec: &AmmSpec, level: f64, x_hat: &[f64]) -> Result<f64> {
    spec.check_level(level)?;
    check_x_hat(spec, x_hat)?;
    let mut x = with_last(x_hat, 1.0);
    let last = x.len() - 1;
    scalar::increasing_root(
        |xn| {
            x[last] = xn;
            spec.defect(level, &x)
        },
        BRACKET_LO,
        BRACKET_HI,
        BRACKET_CAP,
        ROOT_XTOL,
    )
}

/// Surface point `(x_hat, f(x_hat))`.
pub fn surface_point(spec: &AmmSpec, level: f64, x_hat: &[f64]) -> Result<Vec<f64>> {
    Ok(with_last(x_hat, eval_f(spec, level, x_hat)?))
}

fn slope_at(spec: &AmmSpec, level: f64, x: &[f64]) -> Vec<f64> {
    let g = spec.surface_gradient(level, x);
    let gn = g[g.len() - 1];
    g[..g.len() - 1].iter().map(|gi| -gi / gn).collect()
}

/// `grad f = -A_{x_i} / A_{x_n}` by implicit differentiation.
pub fn grad_f(spec: &AmmSpec, level: f64, x_hat: &[f64]) -> Result<Vec<f64>> {
    let x = surface_point(spec, level, x_hat)?;
    Ok(slope_at(spec, level, &x))
}

/// Hessian of `f` by central differences of the analytic `grad_f`.
pub fn hess_f(spec: &AmmSpec, level: f64, x_hat: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_x_hat(spec, x_hat)?;
    let dim = x_hat.len();
    let mut h = vec![vec![0.0; dim]; dim];
    let mut probe = x_hat.to_vec();
    for j in 0..dim {
        let step = HESSIAN_STEP * x_hat[j];
        probe[j] = x_hat[j] + step;
        let up = grad_f(spec, level, &probe)?;
        probe[j] = x_hat[j] - step;
        let down = grad_f(spec, level, &probe)?;
        probe[j] = x_hat[j];
        for i in 0..dim {
            h[i][j] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    for i in 0..dim {
        for j in 0..i {
            let avg = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = avg;
            h[j][i] = avg;
        }
    }
    Ok(h)
}

/// Exchange rates `p / p_n`.
pub(crate) fn rates_of(p: &[f64]) -> Vec<f64> {
    let pn = p[p.len() - 1];
    p.iter().map(|pi| pi / pn).collect()
}

/// `max_i |A_i - lambda m_i| / (lambda m_i)` with `lambda = A_n / m_n`.
///
/// Component-relative, so tangency is still resolved when the prices span
/// many orders of magnitude.
fn grad_residual(spec: &AmmSpec, level: f64, x: &[f64], m: &[f64]) -> f64 {
    let g = spec.surface_gradient(level, x);
    let last = g.len() - 1;
    let lambda = g[last] / m[last];
    g.iter()
        .zip(m)
        .map(|(gi, mi)| (gi / (lambda * mi) - 1.0).abs())
        .fold(0.0, f64::max)
}

fn finish(spec: &AmmSpec, level: f64, x: Vec<f64>, m: &[f64], iterations: usize) -> StableState {
    let g = spec.surface_gradient(level, &x);
    let lambda = g[g.len() - 1];
    StableState {
        grad_residual: grad_residual(spec, level, &x, m),
        level_residual: spec.defect(level, &x).abs(),
        lambda,
        x: ReserveVector::new(x).expect("stable state is positive"),
        iterations,
    }
}

/// Analytic stable state for the geometric families; `None` for StableSwap.
///
/// Constant product: `x_j = k^{1/n} (prod p_l)^{1/n} / p_j`. Weighted:
/// `p_j x_j / w_j` is the same for every token, which gives
/// `x_j = k (w_j / p_j) prod_l (p_l / w_l)^{w_l}`.
pub fn closed_form_stable_point(
    spec: &AmmSpec,
    level: f64,
    p: &PriceVector,
) -> Result<Option<StableState>> {
    spec.check_level(level)?;
    spec.check_dim(p.len())?;
    let m = rates_of(p);
    Ok(closed_form_from_rates(spec, level, &m).map(|x| finish(spec, level, x, &m, 0)))
}

fn closed_form_from_rates(spec: &AmmSpec, level: f64, m: &[f64]) -> Option<Vec<f64>> {
    let n = spec.n() as f64;
    match spec.family() {
        Family::ConstantProduct => {
            let log_scale = (level.ln() + m.iter().map(|v| v.ln()).sum::<f64>()) / n;
            Some(m.iter().map(|mj| (log_scale - mj.ln()).exp()).collect())
        }
        Family::WeightedG3m => {
            let w = spec.weights();
            let log_scale = level.ln()
                + m.iter()
                    .zip(w)
                    .map(|(ml, wl)| wl * (ml / wl).ln())
                    .sum::<f64>();
            Some(
                m.iter()
                    .zip(w)
                    .map(|(mj, wj)| (log_scale + (wj / mj).ln()).exp())
                    .collect(),
            )
        }
        Family::StableSwap => None,
    }
}

/// Stable state on the surface at `level` for prices `p`.
///
/// Uses the closed form when the family has one and `opts.closed_form` is
/// set. Otherwise runs a damped Newton method on `m . x_hat + f(x_hat)`
/// from the symmetric surface point, with a coordinate-wise golden-section
/// descent if Newton stalls.
pub fn solve_stable_point(
    spec: &AmmSpec,
    level: f64,
    p: &PriceVector,
    opts: &SolverOptions,
) -> Result<StableState> {
    spec.check_level(level)?;
    spec.check_dim(p.len())?;
    if !(opts.tol > 0.0) {
        return Err(AmmError::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let m = rates_of(p);
    if opts.closed_form {
        if let Some(x) = closed_form_from_rates(spec, level, &m) {
            return Ok(finish(spec, level, x, &m, 0));
        }
    }
    minimize_value(spec, level, &m, opts)
}

struct Objective<'a> {
    spec: &'a AmmSpec,
    level: f64,
    m_hat: &'a [f64],
}

impl Objective<'_> {
    fn value(&self, y: &[f64]) -> Result<f64> {
        let f = eval_f(self.spec, self.level, y)?;
        Ok(f + y.iter().zip(self.m_hat).map(|(a, b)| a * b).sum::<f64>())
    }

    fn full(&self, y: &[f64]) -> Result<Vec<f64>> {
        surface_point(self.spec, self.level, y)
    }
}

fn minimize_value(
    spec: &AmmSpec,
    level: f64,
    m: &[f64],
    opts: &SolverOptions,
) -> Result<StableState> {
    let dim = spec.n() - 1;
    let obj = Objective {
        spec,
        level,
        m_hat: &m[..dim],
    };
    let mut y = spec.symmetric_point(level)?[..dim].to_vec();
    let mut iterations = 0;
    let mut used_fallback = false;
    loop {
        let (stalled, used) = newton(&obj, m, &mut y, opts, opts.max_iter - iterations)?;
        iterations += used;
        if !stalled || used_fallback || iterations >= opts.max_iter {
            break;
        }
        used_fallback = true;
        golden_descent(&obj, &mut y)?;
    }
    let x = obj.full(&y)?;
    let state = finish(spec, level, x, m, iterations);
    if state.grad_residual > opts.tol || state.level_residual > opts.tol {
        return Err(AmmError::NoConvergence {
            iterations,
            grad_residual: state.grad_residual,
            level_residual: state.level_residual,
        });
    }
    Ok(state)
}

/// Returns `(stalled, iterations used)`.
fn newton(
    obj: &Objective<'_>,
    m: &[f64],
    y: &mut Vec<f64>,
    opts: &SolverOptions,
    budget: usize,
) -> Result<(bool, usize)> {
    let dim = y.len();
    let mut x = obj.full(y)?;
    let mut phi = obj.value(y)?;
    let mut polishing = false;
    for it in 0..budget {
        let residual = grad_residual(obj.spec, obj.level, &x, m);
        if residual <= opts.tol {
            if polishing {
                return Ok((false, it));
            }
            // one more step: the residual bound alone leaves ~tol/curvature error in x
            polishing = true;
        }
        let slope = slope_at(obj.spec, obj.level, &x);
        let grad = DVector::from_fn(dim, |i, _| obj.m_hat[i] + slope[i]);
        let h = hess_f(obj.spec, obj.level, y)?;
        let hm = DMatrix::from_fn(dim, dim, |i, j| h[i][j]);
        let step = match hm.cholesky() {
            Some(chol) => -chol.solve(&grad),
            None => -grad.clone(),
        };
        // keep every coordinate above a tenth of its current value
        let mut t: f64 = 1.0;
        for i in 0..dim {
            if step[i] < 0.0 {
                t = t.min(-0.9 * y[i] / step[i]);
            }
        }
        let descent = grad.dot(&step);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = (0..dim).map(|i| y[i] + t * step[i]).collect();
            if let Ok(cx) = obj.full(&cand) {
                let cphi = obj.value(&cand)?;
                let cres = grad_residual(obj.spec, obj.level, &cx, m);
                let better = if polishing {
                    cres < residual
                } else {
                    cphi <= phi + 1e-4 * t * descent
                        || (cres < residual && cphi <= phi + 1e-14 * phi.abs())
                };
                if better {
                    *y = cand;
                    x = cx;
                    phi = cphi;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok((!polishing, it + 1));
        }
        if polishing {
            return Ok((false, it + 1));
        }
    }
    let residual = grad_residual(obj.spec, obj.level, &x, m);
    Ok((residual > opts.tol, budget))
}

fn golden_descent(obj: &Objective<'_>, y: &mut [f64]) -> Result<()> {
    for _ in 0..GOLDEN_SWEEPS {
        for i in 0..y.len() {
            let centre = y[i].ln();
            let mut probe = y.to_vec();
            let (u, _) = scalar::golden_min(
                |u| {
                    probe[i] = u.exp();
                    obj.value(&probe).unwrap_or(f64::INFINITY)
                },
                centre - 1.5,
                centre + 1.5,
                1e-12,
            );
            y[i] = u.exp();
        }
    }
    obj.value(y).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn price(v: &[f64]) -> PriceVector {
        PriceVector::new(v.to_vec()).unwrap()
    }

    fn cp(n: usize) -> AmmSpec {
        AmmSpec::constant_product(n).unwrap()
    }

    fn ss() -> AmmSpec {
        AmmSpec::stableswap(2, 1.0, 1.0).unwrap()
    }

    /// Positive root of 16 x1^2 x2 + 16 x1 x2^2 - 12 x1 x2 = 1 in x2.
    fn stableswap_radical(x1: f64) -> f64 {
        (12.0 * x1 - 16.0 * x1 * x1
            + (256.0 * x1.powi(4) - 384.0 * x1.powi(3) + 144.0 * x1 * x1 + 64.0 * x1).sqrt())
            / (32.0 * x1)
    }

    #[test]
    fn f_constant_product() {
        assert!((eval_f(&cp(2), 12.0, &[2.0]).unwrap() - 6.0).abs() < 1e-14);
        assert!((eval_f(&cp(3), 8.0, &[2.0, 2.0]).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn f_stableswap_matches_radical() {
        let v = eval_f(&ss(), 1.0, &[1.0]).unwrap();
        assert!((v - stableswap_radical(1.0)).abs() < 1e-14);
        assert!((v - 0.154_508_497_187_473_7).abs() < 1e-12);
        assert!((eval_f(&ss(), 1.0, &[0.5]).unwrap() - 0.5).abs() < 1e-14);
        for &x1 in &[0.05, 0.3, 2.0, 7.5] {
            let v = eval_f(&ss(), 1.0, &[x1]).unwrap();
            assert!((v - stableswap_radical(x1)).abs() < 1e-12 * v.max(1.0), "x1={x1}");
        }
    }

    #[test]
    fn f_handles_tiny_roots() {
        let v = eval_f(&cp(2), 12.0, &[1e11]).unwrap();
        assert!((v / 1.2e-10 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_rejects_bad_input() {
        assert!(eval_f(&cp(2), 12.0, &[1.0, 2.0]).is_err());
        assert!(eval_f(&cp(2), 12.0, &[-1.0]).is_err());
        assert!(eval_f(&cp(2), 0.0, &[1.0]).is_err());
    }

    #[test]
    fn f_slopes() {
        assert!((grad_f(&cp(2), 12.0, &[2.0]).unwrap()[0] + 3.0).abs() < 1e-13);
        assert!((grad_f(&cp(2), 12.0, &[4.0]).unwrap()[0] + 0.75).abs() < 1e-13);
        assert!((grad_f(&ss(), 1.0, &[0.5]).unwrap()[0] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn hessian_constant_product() {
        // f = 12/x, f'' = 24/x^3
        let h = hess_f(&cp(2), 12.0, &[2.0]).unwrap();
        assert!((h[0][0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn constant_product_stable_point_six_two() {
        let s = solve_stable_point(&cp(2), 12.0, &price(&[6.0, 2.0]), &SolverOptions::default())
            .unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        let s = solve_stable_point(&cp(2), 12.0, &price(&[6.0, 2.0]), &SolverOptions::numeric())
            .unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!(s.grad_residual <= 1e-10 && s.level_residual <= 1e-10);
    }

    #[test]
    fn closed_forms() {
        let s = closed_form_stable_point(&cp(2), 12.0, &price(&[6.0, 2.0]))
            .unwrap()
            .unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-13 && (s.x[1] - 6.0).abs() < 1e-13);
        let s = closed_form_stable_point(&cp(3), 8.0, &price(&[1.0, 1.0, 1.0]))
            .unwrap()
            .unwrap();
        assert!(s.x.iter().all(|v| (v - 2.0).abs() < 1e-13));
        let s = closed_form_stable_point(&cp(2), 12.0, &price(&[3.0, 1.0]))
            .unwrap()
            .unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-13 && (s.x[1] - 6.0).abs() < 1e-13);
        assert!(closed_form_stable_point(&ss(), 1.0, &price(&[1.0, 1.0]))
            .unwrap()
            .is_none());
    }

    #[test]
    fn weighted_closed_form_matches_solver() {
        let spec = AmmSpec::weighted(vec![0.2, 0.3, 0.5]).unwrap();
        let p = price(&[1.7, 0.4, 2.2]);
        let a = closed_form_stable_point(&spec, 3.0, &p).unwrap().unwrap();
        let b = solve_stable_point(&spec, 3.0, &p, &SolverOptions::numeric()).unwrap();
        for (u, v) in a.x.iter().zip(b.x.iter()) {
            assert!((u - v).abs() <= 1e-9 * u, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn stableswap_symmetric_stable_point() {
        let s = solve_stable_point(&ss(), 1.0, &price(&[1.0, 1.0]), &SolverOptions::default())
            .unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stableswap_extreme_prices_converge() {
        for &m in &[0.01, 0.2, 5.0, 100.0] {
            let s = solve_stable_point(&ss(), 1.0, &price(&[m, 1.0]), &SolverOptions::default())
                .unwrap();
            let slope = grad_f(&ss(), 1.0, s.x_hat()).unwrap()[0];
            assert!((slope + m).abs() <= 1e-8 * m, "m={m}: slope {slope}");
        }
    }

    #[test]
    fn stableswap_far_tail_is_resolved() {
        // amp = d = 1: 4(x1 + x2) - 3 = 1 / (4 x1 x2), partials written out by hand
        for &m in &[1e-12, 1e-6, 1e6, 1e12, 1e20] {
            let s = solve_stable_point(&ss(), 1.0, &price(&[m, 1.0]), &SolverOptions::default())
                .unwrap();
            let (x1, x2) = (s.x[0], s.x[1]);
            let f1 = 4.0 + 1.0 / (4.0 * x1 * x1 * x2);
            let f2 = 4.0 + 1.0 / (4.0 * x1 * x2 * x2);
            assert!((f1 / f2 / m - 1.0).abs() <= 1e-9, "m={m}: x={:?}", &s.x[..]);
            let lhs = 16.0 * x1 * x2 * (x1 + x2);
            let rhs = 1.0 + 12.0 * x1 * x2;
            assert!((lhs / rhs - 1.0).abs() <= 1e-12, "m={m}");
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let opts = SolverOptions {
            max_iter: 1,
            ..SolverOptions::numeric()
        };
        let err = solve_stable_point(&ss(), 1.0, &price(&[40.0, 1.0]), &opts).unwrap_err();
        assert!(matches!(err, AmmError::NoConvergence { .. }), "{err:?}");
    }
}
