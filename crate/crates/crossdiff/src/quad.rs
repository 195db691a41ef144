//! Adaptive Simpson quadrature.
//!
//! Used for the `log q` integral in the entropy density whenever a closed
//! form is not attached to the model, and for the per-species `log p~`
//! antiderivatives. Integrands are smooth in the interior with at worst an
//! integrable logarithmic endpoint singularity, which the adaptive
//! subdivision resolves.

/// Integrate `f` over `[a, b]` (orientation-aware) to absolute tolerance
/// `tol` per unit length.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fl = f(lo);
    let fh = f(hi);
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    let whole = simpson(lo, hi, fl, fm, fh);
    sign * adapt(&f, lo, hi, fl, fm, fh, whole, tol.max(1e-15), 52)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || !delta.is_finite() {
        // Richardson extrapolation term; non-finite deltas come from
        // integrable endpoint singularities once the panel is at round-off
        // width, where the composite value is the best available.
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
