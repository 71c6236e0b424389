//! Binary entropy and its inverse on `[0, 1/2]`.

/// Absolute tolerance used by the bisection in [`binary_entropy_inverse`].
pub const BISECTION_TOL: f64 = 1e-12;

/// Binary entropy `H(q) = -q log2 q - (1-q) log2 (1-q)`, with `H(0) = H(1) = 0`.
pub fn binary_entropy(q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q), "entropy argument out of range: {q}");
    if q == 0.0 || q == 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Inverse of `H` restricted to `[0, 1/2]`, computed by bisection.
///
/// Returns `None` when `target` is outside `[0, 1]`. The result `q`
/// satisfies `|H(q) - target| <= BISECTION_TOL` (or brackets it to the
/// same interval width).
pub fn binary_entropy_inverse(target: f64) -> Option<f64> {
    if !(0.0..=1.0).contains(&target) {
        return None;
    }
    if target == 0.0 {
        return Some(0.0);
    }
    if target == 1.0 {
        return Some(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    // H is strictly increasing on [0, 1/2]; bisect until the bracket and the
    // entropy gap are both below tolerance.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let h = binary_entropy(mid);
        if (h - target).abs() <= BISECTION_TOL {
            return Some(mid);
        }
        if h < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_TOL {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}
