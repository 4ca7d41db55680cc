//! One-dimensional searches shared by the theory and AO modules.

/// Inverse golden ratio, `(√5 − 1)/2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` driven by a comparison oracle.
///
/// `left_is_lower(x1, x2)` must report whether `f(x1) < f(x2)` for `x1 < x2`.
/// Passing a comparison rather than a value lets callers evaluate the
/// difference `f(x2) − f(x1)` directly when plain values are too noisy to
/// order nearby points. Stops when the bracket is narrower than `tol` or
/// after `max_iter` shrinks; returns the bracket midpoint.
pub fn golden_section<C>(
    mut left_is_lower: C,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> f64
where
    C: FnMut(f64, f64) -> bool,
{
    let mut iter = 0;
    while hi - lo > tol && iter < max_iter {
        let span = hi - lo;
        let x1 = hi - INV_PHI * span;
        let x2 = lo + INV_PHI * span;
        if left_is_lower(x1, x2) {
            hi = x2;
        } else {
            lo = x1;
        }
        iter += 1;
    }
    0.5 * (lo + hi)
}

/// Value-based golden-section minimisation.
pub fn golden_section_values<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> f64
where
    F: FnMut(f64) -> f64,
{
    golden_section(|a, b| f(a) < f(b), lo, hi, tol, max_iter)
}

/// Bisection for an increasing sign change: requires `g(lo) < 0 < g(hi)`.
pub fn bisect<G>(mut g: G, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    G: FnMut(f64) -> f64,
{
    // 200 halvings exhaust f64 resolution on any finite bracket.
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
