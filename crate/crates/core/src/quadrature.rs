//! Adaptive Simpson quadrature for the one-dimensional oracles.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 24;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is pre-split into 64 panels so narrow features (a bump far
/// from the midpoint) are not missed by the first coarse estimate.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::arg(format!("bad integration interval [{a}, {b}]")));
    }
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    let mut worst = 0.0f64;
    let mut ok = true;
    for p in 0..PANELS {
        let lo = a + h * p as f64;
        let hi = if p + 1 == PANELS { b } else { lo + h };
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = simpson(lo, hi, flo, fmid, fhi);
        let mut err = 0.0;
        let v = recurse(&f, lo, hi, flo, fmid, fhi, whole, tol / PANELS as f64, MAX_DEPTH, &mut err, &mut ok);
        worst = worst.max(err);
        total += v;
    }
    if !ok || !total.is_finite() {
        return Err(Error::Quadrature { achieved: worst });
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        *ok = false;
        *err = f64::INFINITY;
        return f64::NAN;
    }
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        *err = err.max(delta.abs() / 15.0);
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err, ok)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err, ok)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal CDF Φ.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
