//! Adaptive Simpson quadrature.

use crate::error::{Result, WedError};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_DEPTH: u32 = 40;

/// `∫_a^b f` to absolute tolerance `tol` by recursive interval bisection.
/// Fails if any branch reaches `max_depth` without meeting its share of
/// the tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    if !(tol > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(WedError::Parameter(
            "quadrature needs finite bounds and positive tolerance".into(),
        ));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let v = recurse(&f, a, b, fa, fm, fb, whole, tol, max_depth, &mut ok);
    if !v.is_finite() {
        return Err(WedError::Oracle(
            "quadrature produced a non-finite value".into(),
        ));
    }
    if !ok {
        return Err(WedError::Oracle(format!(
            "adaptive Simpson did not reach tolerance {tol:e} within depth {max_depth}"
        )));
    }
    Ok(v)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    adaptive_simpson(f, a, b, DEFAULT_TOL, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}
