//! Small scalar helpers shared by the fiber inverse and the lifted chain.

/// Reduce a coordinate difference to `[-1/2, 1/2]`.
#[inline]
pub fn wrap_diff(d: f64) -> f64 {
    d - d.round()
}

/// Reduce a coordinate to `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Solve `f(x) = target` for a strictly increasing `f` bracketed by `[lo, hi]`.
///
/// Newton steps are taken while they stay inside the bracket, otherwise the
/// bracket is bisected. Returns `None` when the bracket does not contain the
/// target or no convergence happens within the iteration cap.
pub fn solve_increasing<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if f(lo) > target || f(hi) < target {
        return None;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = f(x) - target;
        if r == 0.0 {
            return Some(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Some(next);
        }
        x = next;
    }
    None
}

/// Position of `x` in the total order of floats, as an integer.
fn order_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ (((b >> 63) as u64) >> 1) as i64
}

fn from_order_key(k: i64) -> f64 {
    f64::from_bits((k ^ (((k >> 63) as u64) >> 1) as i64) as u64)
}

/// Adjacent floats `(a, b)` inside `[lo, hi]` with `pred(a)` false and
/// `pred(b)` true, by bisection over the float order. Needs `pred(lo)` false
/// and `pred(hi)` true. The result depends only on `pred` and the bracket,
/// also when a rounded function is not monotone at the last bit.
fn float_boundary<P: Fn(f64) -> bool>(pred: P, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if pred(lo) || !pred(hi) {
        return None;
    }
    let (mut a, mut b) = (order_key(lo), order_key(hi));
    while (b as i128) - (a as i128) > 1 {
        let mid = (a as i128 + b as i128).div_euclid(2) as i64;
        if pred(from_order_key(mid)) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some((from_order_key(a), from_order_key(b)))
}

/// Float `x` in `[lo, hi]` with `f(x) <= target < f(next_up(x))`, for
/// increasing `f`.
pub fn floor_in<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, hi: f64) -> Option<f64> {
    float_boundary(|x| f(x) > target, lo, hi).map(|p| p.0)
}

/// Float `x` in `[lo, hi]` with `f(next_down(x)) < target <= f(x)`, for
/// increasing `f`.
pub fn ceil_in<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, hi: f64) -> Option<f64> {
    float_boundary(|x| f(x) >= target, lo, hi).map(|p| p.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_diff_range() {
        assert_eq!(wrap_diff(0.75), -0.25);
        assert_eq!(wrap_diff(-0.3), -0.3);
        assert!(wrap_diff(2.1).abs() < 0.1 + 1e-15);
    }

    #[test]
    fn wrap_unit_never_one() {
        assert_eq!(wrap_unit(-1e-20), 0.0);
        assert_eq!(wrap_unit(1.0), 0.0);
        assert!((wrap_unit(-0.25) - 0.75).abs() < 1e-16);
    }

    #[test]
    fn solves_cubic() {
        let f = |x: f64| x * x * x + x;
        let x = solve_increasing(f, |x| 3.0 * x * x + 1.0, 10.0, 0.0, 3.0).unwrap();
        assert!((f(x) - 10.0).abs() < 1e-12);
        assert!(solve_increasing(f, |x| 3.0 * x * x + 1.0, 100.0, 0.0, 3.0).is_none());
    }

    #[test]
    fn floor_and_ceil_bracket_target() {
        let f = |x: f64| 3.0 * x + 0.1;
        let lo = floor_in(f, 1.0, -4.0, 4.0).unwrap();
        let hi = ceil_in(f, 1.0, -4.0, 4.0).unwrap();
        assert!(f(lo) <= 1.0 && f(lo.next_up()) > 1.0);
        assert!(f(hi) >= 1.0 && f(hi.next_down()) < 1.0);
        assert!(floor_in(f, 100.0, -4.0, 4.0).is_none());
    }

    #[test]
    fn flat_rounding_plateau() {
        // 0.3 + u == 0.3 for every tiny u
        let f = |u: f64| (0.3 + u) - 0.3;
        let lo = floor_in(f, 0.0, -1.0, 1.0).unwrap();
        assert!(f(lo) <= 0.0 && f(lo.next_up()) > 0.0);
        assert!(lo > 0.0);
        let hi = ceil_in(f, 0.0, -1.0, 1.0).unwrap();
        assert!(f(hi) >= 0.0 && f(hi.next_down()) < 0.0);
        assert!(hi < 0.0);
    }

    #[test]
    fn order_key_round_trip() {
        for &x in &[-1.5, -0.0, 0.0, 1e-310, 3.0] {
            assert_eq!(from_order_key(order_key(x)).to_bits(), f64::to_bits(x));
        }
        assert!(order_key(-1.0) < order_key(-0.0) && order_key(0.0) < order_key(1e-320));
    }
}
