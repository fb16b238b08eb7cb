//! Scalar bracketing searches used by the threshold and maximum finders.

/// Bisection root finder on `[lo, hi]`, assuming `f(lo)` and `f(hi)` have
/// opposite signs. Returns the midpoint of the final bracket once its width
/// falls below `xtol`.
pub(crate) fn bisect<F>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() < xtol {
            return mid;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Returns `(x_max, f_max)` once the bracket width falls below `xtol`;
/// assumes `f` is unimodal on the interval.
pub(crate) fn golden_section_max<F>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > xtol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 { (x1, f1) } else { (x2, f2) }
}

/// Uniformly spaced grid of `n >= 2` points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_a_simple_root() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12);
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-11);
    }

    #[test]
    fn golden_section_finds_a_simple_maximum() {
        let (x, v) = golden_section_max(|x| -(x - 0.7) * (x - 0.7) + 3.0, 0.0, 2.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-8);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linspace_hits_both_endpoints() {
        let g = linspace(0.05, 2.0, 60);
        assert_eq!(g.len(), 60);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[59], 2.0);
    }
}
