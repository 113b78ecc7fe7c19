//! Explicit pseudo-orbits between two given points.
//!
//! The base part follows the forward orbit of `x` for a while, crosses over
//! to the backward orbit of `y` along a true orbit segment that starts with
//! a small unstable kick and ends with a small stable correction, and then
//! runs the backward orbit of `y` forward. Fiber jumps of at most `δ/4`
//! then carry the fiber coordinate along that path, see [`connecting_orbit`].

use crate::chain_engine::PseudoOrbit;
use crate::models::{SkewProductSystem, TorusPoint};
use crate::numerics::{wrap_diff, wrap_unit};

/// Longest crossing segment; keeps float iteration error far below `δ`.
const MAX_CROSSING: usize = 24;

fn iterate(system: &SkewProductSystem, v: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(v);
    for _ in 0..n {
        let next = system.base_map(*out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

fn iterate_back(system: &SkewProductSystem, v: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(v);
    for _ in 0..n {
        let next = system.base_map_inverse(*out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// True base segment `p, A z, ..., A^{L-1} z, q` with `|A z − A p| < tol`
/// and `|q − A^L z| < tol`, or `None` when no crossing of length at most
/// [`MAX_CROSSING`] is found.
pub fn base_crossing(system: &SkewProductSystem, p: [f64; 2], q: [f64; 2], tol: f64) -> Option<Vec<[f64; 2]>> {
    let eig = system.eigen();
    let (ds0, ds1) = {
        let a = eig.coords([1.0, 0.0]);
        let b = eig.coords([0.0, 1.0]);
        ((a.0, b.0), (a.1, b.1))
    };
    let reach = (4.0 / tol).ceil() as i64 + 8;
    for len in 1..=MAX_CROSSING {
        let forward = iterate(system, p, len);
        let pl = forward[len];
        let d = [wrap_diff(q[0] - pl[0]), wrap_diff(q[1] - pl[1])];
        let (d_s, d_u) = eig.coords(d);
        // integer m with tiny stable coordinate of d + m, smallest |m1| first
        let mut found = None;
        'search: for r in 0..=reach {
            for m1 in if r == 0 { vec![0] } else { vec![r, -r] } {
                let m2 = (-(d_s + m1 as f64 * ds0.0) / ds0.1).round();
                let stable = d_s + m1 as f64 * ds0.0 + m2 * ds0.1;
                if stable.abs() < tol {
                    let unstable = d_u + m1 as f64 * ds1.0 + m2 * ds1.1;
                    found = Some(unstable);
                    break 'search;
                }
            }
        }
        let unstable = found?;
        let growth = eig.mult_u.powi(len as i32);
        let alpha = unstable / growth;
        if (alpha * eig.mult_u).abs() >= tol {
            continue;
        }
        let kick = eig.vector(0.0, alpha);
        let z = [p[0] + kick[0], p[1] + kick[1]];
        let mut seg = iterate(system, [wrap_unit(z[0]), wrap_unit(z[1])], len);
        seg[0] = p;
        seg[len] = q;
        return Some(seg);
    }
    None
}

/// Base path from `x` to `y` of length at least `min_len`.
pub fn base_path(
    system: &SkewProductSystem,
    x: [f64; 2],
    y: [f64; 2],
    min_len: usize,
    tol: f64,
) -> Option<Vec<[f64; 2]>> {
    let dwell = min_len / 2 + 1;
    let head = iterate(system, x, dwell);
    let mut tail = iterate_back(system, y, dwell);
    tail.reverse();
    let crossing = base_crossing(system, head[dwell], tail[0], tol)?;
    let mut path = head;
    path.pop();
    path.extend_from_slice(&crossing[..crossing.len() - 1]);
    path.extend_from_slice(&tail);
    Some(path)
}

/// Path lengths tried, as multiples of `4/δ`.
const LENGTH_FACTORS: [usize; 5] = [1, 2, 4, 8, 16];

fn forward_fiber(system: &SkewProductSystem, base: &[[f64; 2]], theta0: f64, c: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(base.len());
    out.push(theta0);
    for v in &base[..base.len() - 1] {
        let t = *out.last().expect("non-empty");
        out.push(system.fiber_lift(*v, t) + c);
    }
    out
}

/// Fiber values `ψ_0..ψ_n` with `ψ_n = theta_n` and `ψ_{i+1} = g(v_i, ψ_i) + c`.
fn backward_fiber(system: &SkewProductSystem, base: &[[f64; 2]], theta_n: f64, c: f64) -> Option<Vec<f64>> {
    let n = base.len() - 1;
    let mut out = vec![0.0; n + 1];
    out[n] = theta_n;
    for i in (0..n).rev() {
        out[i] = fiber_preimage(system, base[i], out[i + 1] - c)?;
    }
    Some(out)
}

fn fiber_preimage(system: &SkewProductSystem, v: [f64; 2], y: f64) -> Option<f64> {
    system.fiber_core_inverse(y - system.translation(v)).ok()
}

/// δ-pseudo-orbit from `x` to `y` with base jumps and fiber jumps each
/// below `δ/4`, or `None` when no path of the tried lengths admits one.
///
/// Fiber values reachable from `x` at index `i` with pushes of at most `q`
/// form the interval between the orbits pushed by `-q` and `+q`; the same
/// holds for values from which `y` is reachable. At an index where the two
/// intervals meet (up to a whole turn), the fiber path is built outward by
/// clamping into those intervals, which keeps every push within `q` and
/// needs no root finding.
pub fn connecting_orbit(system: &SkewProductSystem, x: &TorusPoint, y: &TorusPoint, delta: f64) -> Option<PseudoOrbit> {
    let quarter = delta / 4.0;
    let q = 0.99 * quarter;
    let unit = (1.0 / quarter).ceil() as usize;
    for factor in LENGTH_FACTORS {
        let Some(base) = base_path(system, x.base, y.base, factor * unit, quarter) else {
            continue;
        };
        let n = base.len() - 1;
        let f_lo = forward_fiber(system, &base, x.fiber, -q);
        let f_hi = forward_fiber(system, &base, x.fiber, q);
        let (Some(mut b_lo), Some(mut b_hi)) = (
            backward_fiber(system, &base, y.fiber, q),
            backward_fiber(system, &base, y.fiber, -q),
        ) else {
            continue;
        };
        // widest overlap of the two intervals
        let meeting = (0..=n)
            .filter_map(|m| {
                let shift = (0.5 * (f_lo[m] + f_hi[m]) - 0.5 * (b_lo[m] + b_hi[m])).round();
                let lo = f_lo[m].max(b_lo[m] + shift);
                let hi = f_hi[m].min(b_hi[m] + shift);
                (hi >= lo).then_some((hi - lo, m, 0.5 * (lo + hi), shift))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let Some((_, m, z, shift)) = meeting else {
            continue;
        };
        for b in b_lo.iter_mut().chain(b_hi.iter_mut()) {
            *b += shift;
        }
        let mut theta = vec![0.0; n + 1];
        theta[m] = z;
        for i in (0..m).rev() {
            let pre = fiber_preimage(system, base[i], theta[i + 1])?;
            theta[i] = pre.clamp(f_lo[i], f_hi[i]);
        }
        for i in m..n {
            theta[i + 1] = system.fiber_lift(base[i], theta[i]).clamp(b_lo[i + 1], b_hi[i + 1]);
        }
        let mut points: Vec<TorusPoint> = base
            .iter()
            .zip(&theta)
            .map(|(v, t)| TorusPoint {
                base: *v,
                fiber: wrap_unit(*t),
            })
            .collect();
        points[0] = *x;
        points[n] = *y;
        if let Ok(orbit) = PseudoOrbit::new(system, points, delta) {
            return Some(orbit);
        }
    }
    None
}
