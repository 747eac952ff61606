//! Scalar root finding and line minimization.

use crate::error::{AmmError, Result};

const MAX_BRENT_ITER: usize = 200;

/// Brent's method on a sign-changing bracket `[a, b]`.
///
/// `g(a)` and `g(b)` must have opposite signs (or one of them be zero).
/// Iterates until the bracket width is below `xtol` relative to the
/// current iterate or the residual is exactly zero.
pub fn brent_root<G>(mut g: G, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !fa.is_finite() || !fb.is_finite() || fa.signum() == fb.signum() {
        return Err(AmmError::NoRoot { lo: a, hi: b });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_BRENT_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol * b.abs().max(f64::MIN_POSITIVE);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = g(b);
        if !fb.is_finite() {
            return Err(AmmError::NoRoot { lo: a, hi: c });
        }
    }
    Ok(b)
}

const LOWER_FLOOR: f64 = 1e-250;
const MAX_RETREATS: usize = 200;

/// Root of an increasing function on `(0, ∞)`.
///
/// The bracket starts at `[lo, hi]` and the upper end doubles until the
/// sign changes or `cap` is exceeded. If the root lies below `lo` the lower
/// end shrinks geometrically instead. Points where `g` is not finite are
/// treated as out of range and the search steps back towards the bracket.
pub fn increasing_root<G>(mut g: G, lo: f64, hi: f64, cap: f64, xtol: f64) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut glo = g(lo);
    for _ in 0..MAX_RETREATS {
        if glo.is_finite() {
            break;
        }
        lo = (lo * hi).sqrt();
        glo = g(lo);
    }
    let mut ghi = g(hi);
    for _ in 0..MAX_RETREATS {
        if ghi.is_finite() {
            break;
        }
        hi = (lo * hi).sqrt();
        ghi = g(hi);
    }
    if !glo.is_finite() || !ghi.is_finite() {
        return Err(AmmError::NoRoot { lo, hi });
    }

    let mut factor = 1e-3;
    while glo > 0.0 {
        let cand = lo * factor;
        if cand <= LOWER_FLOOR || factor > 1.0 - 1e-12 {
            return Err(AmmError::NoRoot { lo, hi });
        }
        let gc = g(cand);
        if !gc.is_finite() {
            factor = factor.sqrt();
            continue;
        }
        hi = lo;
        ghi = glo;
        lo = cand;
        glo = gc;
    }
    let mut factor = 2.0;
    while ghi < 0.0 {
        if hi >= cap || factor < 1.0 + 1e-12 {
            return Err(AmmError::NoRoot { lo, hi: cap });
        }
        let cand = (hi * factor).min(cap);
        let gc = g(cand);
        if !gc.is_finite() {
            factor = factor.sqrt();
            continue;
        }
        lo = hi;
        hi = cand;
        ghi = gc;
    }
    brent_root(g, lo, hi, xtol)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal function on `[a, b]`.
///
/// Returns `(argmin, min)`.
pub fn golden_min<G>(mut g: G, a: f64, b: f64, xtol: f64) -> (f64, f64)
where
    G: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    while (b - a) > xtol * (a.abs() + b.abs()).max(1e-300) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = g(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizes `g` over `(0, ∞)` by scanning a log-spaced grid of `points`
/// nodes on `[lo, hi]` and refining around the best node with a
/// golden-section search in log coordinates.
pub fn log_grid_min<G>(mut g: G, lo: f64, hi: f64, points: usize, xtol: f64) -> (f64, f64)
where
    G: FnMut(f64) -> f64,
{
    let points = points.max(3);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (points - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..points {
        let v = g((llo + step * i as f64).exp());
        if v < best.1 {
            best = (i, v);
        }
    }
    let left = llo + step * best.0.saturating_sub(1) as f64;
    let right = llo + step * (best.0 + 1).min(points - 1) as f64;
    let (u, v) = golden_min(|u| g(u.exp()), left, right, xtol);
    (u.exp(), v)
}
