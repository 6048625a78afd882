//! Bracketed scalar root finding: bisection and safeguarded Newton.

/// Locates the root of `f` on `[lo, hi]`, assuming `f(lo)` and `f(hi)` have
/// opposite (or zero) signs. Stops once the bracket width is at most `tol`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket width below float resolution
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Newton iteration clamped to the bracket `[lo, hi]`, falling back to the
/// midpoint whenever a Newton step leaves the bracket or the derivative
/// degenerates. Same sign-change contract as [`bisect`].
pub(crate) fn newton_bisect<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        if hi - lo <= tol {
            break;
        }
        let step = fx / df(x);
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if next <= lo || next >= hi {
            break; // bracket exhausted at float resolution
        }
        x = next;
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_exact_endpoint_root() {
        assert_eq!(bisect(|x| x, 0.0, 1.0, 1e-12), 0.0);
    }

    #[test]
    fn newton_matches_bisection() {
        let f = |x: f64| x.exp() - 3.0;
        let d = |x: f64| x.exp();
        let r = newton_bisect(f, d, 0.0, 2.0, 1e-14);
        assert!((r - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn newton_survives_flat_derivative() {
        // derivative reported as zero forces midpoint fallbacks
        let r = newton_bisect(|x| x - 0.3, |_| 0.0, 0.0, 1.0, 1e-13);
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn decreasing_function_bracket() {
        let r = bisect(|x| 1.0 - x * x, 0.5, 3.0, 1e-14);
        assert!((r - 1.0).abs() < 1e-12);
    }
}
