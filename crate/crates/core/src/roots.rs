//! Scalar root finding and minimization.
//!
//! Every routine here works on a closed bracket and never leaves it, so the
//! callers can rely on the sign information they established beforehand.

use crate::error::{Error, Result};

const MAX_ITER: usize = 400;

/// Bisection down to floating-point resolution.
///
/// `f(a)` and `f(b)` must have opposite signs (a zero at either end is
/// returned immediately).
pub fn bisect<F>(mut f: F, a: f64, b: f64, what: &'static str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoSignChange { what, a: lo, b: hi });
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Newton's method safeguarded by a sign-changing bracket.
///
/// `f` returns `(value, derivative)`. Newton steps that leave the current
/// bracket, or do not shrink it fast enough, are replaced by bisection.
/// Stops once `|f| <= ftol` or the bracket collapses to adjacent floats.
pub fn newton_bisect<F>(mut f: F, a: f64, b: f64, ftol: f64, what: &'static str) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let (f_lo, _) = f(lo)?;
    let (f_hi, _) = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoSignChange { what, a: lo, b: hi });
    }
    let lo_sign = f_lo.signum();

    let mut x = 0.5 * (lo + hi);
    let mut width_before = hi - lo;
    let mut best = (f64::INFINITY, x);
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if width <= f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) * 2.0 {
            break;
        }
        let newton = x - fx / dfx;
        let shrinking = width < 0.5 * width_before;
        x = if newton.is_finite() && newton > lo && newton < hi && (shrinking || width_before == width) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        width_before = width;
        if x <= lo || x >= hi {
            x = 0.5 * (lo + hi);
            if x <= lo || x >= hi {
                break;
            }
        }
    }
    Ok(best.1)
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
///
/// Returns the final bracket `(lo, hi)` together with the best abscissa seen.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<GoldenResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..MAX_ITER {
        if hi - lo <= xtol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(GoldenResult { lo, hi, x, fx })
}

#[derive(Clone, Copy, Debug)]
pub struct GoldenResult {
    pub lo: f64,
    pub hi: f64,
    pub x: f64,
    pub fx: f64,
}
