#![allow(dead_code)]

use chainlab_core::center_lift::{lift_chain, LiftedChain};
use chainlab_core::center_shadowing::CenterPseudoOrbit;
use chainlab_core::models::{PresetLibrary, SkewProductSystem, TorusPoint};
use rand::Rng;

pub fn preset(id: &str) -> SkewProductSystem {
    PresetLibrary::builtin().get(id).unwrap().system.clone()
}

pub fn product() -> SkewProductSystem {
    preset("product")
}

/// Random chain over a true base orbit with jump times of both signs.
pub fn mixed_chain<R: Rng>(rng: &mut R, system: &SkewProductSystem, n: usize, eps: f64) -> LiftedChain {
    let start = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.95 * eps..0.95 * eps)).collect();
    if n >= 2 && times.iter().all(|t| *t <= 0.0) {
        times[0] = times[0].abs();
    }
    if n >= 2 && times.iter().all(|t| *t >= 0.0) {
        times[n - 1] = -times[n - 1].abs();
    }
    let chain = CenterPseudoOrbit::from_jump_times(system, start, &times, eps).unwrap();
    lift_chain(system, &chain).unwrap()
}

fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn unordered(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

/// Largest float `u` with `f(u) <= y`, by bisection over all floats of a
/// wide bracket.
pub fn float_floor_inverse(f: impl Fn(f64) -> f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (ordered(y - 4.0), ordered(y + 4.0));
    assert!(f(unordered(lo)) <= y && f(unordered(hi)) > y);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(unordered(mid)) <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    unordered(lo)
}

/// Smallest float `u` with `f(u) >= y`.
pub fn float_ceil_inverse(f: impl Fn(f64) -> f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (ordered(y - 4.0), ordered(y + 4.0));
    assert!(f(unordered(lo)) < y && f(unordered(hi)) >= y);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(unordered(mid)) >= y {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    unordered(hi)
}

/// The anchor rewriting of the ordering claim, written case by case: the
/// anchors `x_i` live on the chart lines and `f` is the chart map.
///
/// Returns the new anchors and the number of rewriting steps.
pub fn reorder_oracle(chain: &LiftedChain) -> (Vec<f64>, usize) {
    let n = chain.steps();
    let f = |i: usize, u: f64| chain.chart_map(i, u);
    let mut x = chain.offsets.clone();
    let orbit = |x: &[f64]| {
        let mut o = vec![x[0]];
        for i in 0..n {
            o.push(f(i, o[i]));
        }
        o
    };
    let fx0 = orbit(&x);
    if fx0[n] == x[n] {
        x[1..n].copy_from_slice(&fx0[1..n]);
        return (x, 0);
    }
    let below = fx0[n] < x[n];
    // a <= b on the side being built
    let le = |a: f64, b: f64| if below { a <= b } else { a >= b };
    let lt = |a: f64, b: f64| if below { a < b } else { a > b };
    let mut steps = 0;
    loop {
        let o = orbit(&x);
        let good = |i: usize| le(o[i + 1], f(i, x[i])) && le(f(i, x[i]), x[i + 1]);
        let k = if good(n - 1) {
            (0..n).rev().take_while(|&i| good(i)).last().unwrap()
        } else {
            n
        };
        if k == 0 {
            return (x, steps);
        }
        steps += 1;
        assert!(steps <= n * n);
        let img = f(k - 1, x[k - 1]);
        if lt(img, o[k]) && le(o[k], x[k]) {
            // sub-case (a)
            x[1..k].copy_from_slice(&o[1..k]);
        } else {
            // sub-case (b)
            assert!(le(o[k], x[k]) && lt(x[k], img));
            let mut back = vec![0.0; k + 1];
            back[k] = x[k];
            for i in (0..k).rev() {
                let g = |u: f64| f(i, u);
                back[i] = if below {
                    float_floor_inverse(g, back[i + 1])
                } else {
                    float_ceil_inverse(g, back[i + 1])
                };
            }
            let j = (1..k).find(|&j| lt(back[j], x[j])).expect("splice index");
            x[j..k].copy_from_slice(&back[j..k]);
        }
    }
}

/// Chain over the fixed base point `0` with the given jump times.
pub fn fiber_chain(system: &SkewProductSystem, fiber: f64, times: &[f64], eps: f64) -> LiftedChain {
    let chain = CenterPseudoOrbit::from_jump_times(system, TorusPoint::new(0.0, 0.0, fiber), times, eps).unwrap();
    lift_chain(system, &chain).unwrap()
}

/// A random chain rewritten to non-positive jumps.
pub fn ordered_chain<R: Rng>(rng: &mut R, system: &SkewProductSystem, n: usize, eps: f64) -> LiftedChain {
    loop {
        let lifted = mixed_chain(rng, system, n, eps);
        let (out, report) = chainlab_core::center_lift::reorder_chain(&lifted).unwrap();
        if report.branch == chainlab_core::center_lift::ReorderBranch::NonPositive {
            return out;
        }
    }
}
