//! One-dimensional bracketing solvers shared by the risk and state-evolution layers.

/// Golden-section ratio `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// The caller guarantees `f(lo)` and `f(hi)` have opposite signs (or one is zero).
/// Stops when `hi - lo <= rel_tol * max(|lo|, |hi|)` or after `max_iter` halvings.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64, max_iter: usize) -> Bracket
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let mut iterations = 0;
    while iterations < max_iter && hi - lo > rel_tol * lo.abs().max(hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        iterations += 1;
        if f_mid == 0.0 {
            return Bracket {
                lo: mid,
                hi: mid,
                iterations,
            };
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Bracket { lo, hi, iterations }
}

/// Golden-section minimization of `f` over `[lo, hi]`.
///
/// Returns `(x_min, f(x_min), iterations)`. Ties go to the smaller abscissa.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64, max_iter: usize) -> (f64, f64, usize)
where
    F: FnMut(f64) -> f64,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while iterations < max_iter && hi - lo > rel_tol * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
        iterations += 1;
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1, iterations)
    } else {
        (x2, f2, iterations)
    }
}
