//! Bracketed root finding for monotone scalar functions.

use crate::error::{Error, Result};

const MAX_EXPANSIONS: usize = 400;

/// Grow `[lo, hi]` (with `0 < lo < hi`) geometrically until `f(lo) - target` and
/// `f(hi) - target` have opposite signs. `f` must be monotone.
pub fn expand_positive_bracket<F>(mut f: F, target: f64, mut lo: f64, mut hi: f64, what: &str) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Bracket { what: what.to_string(), lo, hi, target });
    }
    let mut f_lo = f(lo) - target;
    let mut f_hi = f(hi) - target;
    let increasing = f_hi >= f_lo;
    let mut n = 0;
    // `lo` must sit on the "below" side of an increasing f (above for decreasing).
    while (if increasing { f_lo > 0.0 } else { f_lo < 0.0 }) && n < MAX_EXPANSIONS {
        hi = lo;
        f_hi = f_lo;
        lo *= 0.5;
        f_lo = f(lo) - target;
        n += 1;
    }
    while (if increasing { f_hi < 0.0 } else { f_hi > 0.0 }) && n < MAX_EXPANSIONS {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi) - target;
        n += 1;
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi > 0.0 || !hi.is_finite() || lo <= 0.0 {
        return Err(Error::Bracket { what: what.to_string(), lo, hi, target });
    }
    Ok((lo, hi))
}

/// Plain bisection for a monotone `f` on a valid bracket. Stops once the bracket
/// width drops below `tol(midpoint)`.
pub fn bisect<F, T>(mut f: F, target: f64, mut lo: f64, mut hi: f64, tol: T) -> f64
where
    F: FnMut(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let f_lo = f(lo) - target;
    let increasing = f(hi) - target >= f_lo;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol(mid) || mid <= lo || mid >= hi {
            return mid;
        }
        let fm = f(mid) - target;
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Newton iteration safeguarded by bisection, for `g(x) = 0` with `g` monotone on
/// `[lo, hi]` and a sign change across the bracket. `g` returns `(value, derivative)`.
/// Iterates to (near) machine precision.
pub fn newton_bisect<G>(mut g: G, mut lo: f64, mut hi: f64) -> Result<f64>
where
    G: FnMut(f64) -> (f64, f64),
{
    let (g_lo, _) = g(lo);
    let (g_hi, _) = g(hi);
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.is_nan() || g_hi.is_nan() || g_lo * g_hi > 0.0 {
        return Err(Error::Bracket { what: "newton_bisect".into(), lo, hi, target: 0.0 });
    }
    let increasing = g_hi > g_lo;
    let mut x = 0.5 * (lo + hi);
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let (gx, dgx) = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx.is_nan() {
            return Err(Error::numerical(format!("non-finite residual at x={x}")));
        }
        if (gx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - gx / dgx;
        let candidate = if dgx.is_finite() && dgx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (candidate - x).abs();
        // Force a bisection step if Newton stalls.
        let candidate = if step > 0.5 * last_step && candidate != 0.5 * (lo + hi) { 0.5 * (lo + hi) } else { candidate };
        let step = (candidate - x).abs();
        last_step = step;
        x = candidate;
        let scale = x.abs().max(1.0);
        if step <= 4.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(x);
        }
    }
    Ok(x)
}
