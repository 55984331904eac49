//! Adaptive Simpson quadrature.
//!
//! Used for envelope integrals and the segment certificates. Tolerances are
//! relative; the recursion bisects until the Richardson-corrected Simpson
//! estimate is locally within tolerance.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[a, b]` to the given relative tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("non-finite integration bounds".into()));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fl = f(lo);
    let fm = f(0.5 * (lo + hi));
    let fh = f(hi);
    if !(fl.is_finite() && fm.is_finite() && fh.is_finite()) {
        return Err(Error::Quadrature("non-finite integrand sample".into()));
    }
    let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh);
    // Scale-aware absolute floor keeps the recursion from chasing zero.
    let scale = whole.abs().max((hi - lo) * (fl.abs() + fm.abs() + fh.abs()) / 3.0).max(1e-300);
    let val = simpson_rec(&f, lo, hi, fl, fm, fh, whole, rel_tol * scale, MAX_DEPTH)?;
    Ok(sign * val)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite integrand near {m:.6e}")));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "max recursion depth reached on [{a:.6e}, {b:.6e}]"
        )));
    }
    if delta.abs() <= 15.0 * abs_tol {
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, abs_tol / 2.0, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, abs_tol / 2.0, depth - 1)?;
    Ok(l + r)
}
