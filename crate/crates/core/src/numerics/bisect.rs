//! Scalar root finding for monotone functions.

use crate::error::{Error, Result};

const MAX_EXPANSIONS: u32 = 60;
const MAX_ITERATIONS: u32 = 200;

/// Root of a monotone scalar function found by bisection.
#[derive(Debug, Clone, Copy)]
pub struct BisectResult {
    pub root: f64,
    /// Function value at the returned root.
    pub value: f64,
    pub iterations: u32,
}

/// Finds a root of the monotone function `f` starting from the seed bracket
/// `[lo, hi]`. If the seed does not straddle a sign change, the bracket is
/// widened by doubling (in the direction indicated by the slope) up to 60
/// times. Stops once `|f(x)| <= tol` or the bracket width falls below `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<BisectResult> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if lo == hi {
        hi = lo + tol.max(f64::EPSILON);
    }
    let mut flo = f(lo);
    let mut fhi = f(hi);

    let mut expansions = 0;
    while flo * fhi > 0.0 {
        if expansions >= MAX_EXPANSIONS {
            return Err(Error::BracketFailure(format!(
                "no sign change in [{lo}, {hi}] after {MAX_EXPANSIONS} expansions \
                 (f(lo)={flo}, f(hi)={fhi})"
            )));
        }
        let width = (hi - lo).max(tol.max(f64::EPSILON));
        // Monotone f: if both values sit on one side of zero, the root lies
        // past the endpoint whose value is closer to zero.
        let increasing = fhi >= flo;
        if (increasing && flo > 0.0) || (!increasing && flo < 0.0) {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
        expansions += 1;
    }

    if flo.abs() <= tol {
        return Ok(BisectResult { root: lo, value: flo, iterations: 0 });
    }
    if fhi.abs() <= tol {
        return Ok(BisectResult { root: hi, value: fhi, iterations: 0 });
    }

    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        iterations += 1;
        if fmid.abs() <= tol || hi - lo <= tol || iterations >= MAX_ITERATIONS {
            return Ok(BisectResult { root: mid, value: fmid, iterations });
        }
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
}

/// Locates the boundary of a monotone predicate: `pred(lo)` must hold and
/// `pred(hi)` must not. Returns a point within `tol` of the switch.
pub fn bisect_boundary<P: Fn(f64) -> bool>(pred: P, lo: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!(lo <= hi);
    let (mut lo, mut hi) = (lo, hi);
    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_root() {
        let r = bisect(|x| x - 3.0, 0.0, 10.0, 1e-10).unwrap();
        assert_abs_diff_eq!(r.root, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn clamped_sum_matches_grid_scan() {
        // Residual of a two-location weighted allocation: each component is
        // clamped to its box before being summed against a target.
        let theta = [1.0, 1.0];
        let beta = [1.0, 1.0];
        let c = [1.0, 0.5];
        let lo = [0.0, 0.0];
        let hi = [0.9, 2.0];
        let target = 1.6;
        let f = |x: f64| -> f64 {
            (0..2)
                .map(|i| theta[i] * (c[i] - theta[i] * x / (2.0 * beta[i])).clamp(lo[i], hi[i]))
                .sum::<f64>()
                - target
        };

        let r = bisect(f, -10.0, 10.0, 1e-12).unwrap();

        // Exhaustive grid scan at 1e-6 resolution over the same range.
        let mut best = f64::INFINITY;
        let mut best_x = 0.0;
        let mut x = -10.0;
        while x <= 10.0 {
            let v = f(x).abs();
            if v < best {
                best = v;
                best_x = x;
            }
            x += 1e-6;
        }
        assert_abs_diff_eq!(r.root, best_x, epsilon = 2e-6);
    }

    #[test]
    fn decreasing_function_expands_downward() {
        // f strictly decreasing, f(lo) < 0: the root lies below the seed.
        let f = |x: f64| 3.0 - x;
        let r = bisect(f, 10.0, 20.0, 1e-10).unwrap();
        assert_abs_diff_eq!(r.root, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn hopeless_bracket_errors() {
        let err = bisect(|_| 1.0, 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::BracketFailure(_)));
    }

    #[test]
    fn boundary_of_predicate() {
        let b = bisect_boundary(|x| x < 2.5, 0.0, 10.0, 1e-10);
        assert_abs_diff_eq!(b, 2.5, epsilon = 1e-9);
    }
}
