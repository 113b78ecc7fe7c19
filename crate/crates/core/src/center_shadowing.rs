//! Upgrading ε-pseudo-orbits to center pseudo-orbits.
//!
//! For a skew product over a linear Anosov base the local product structure
//! is global in eigen-fiber coordinates: stable and unstable holonomies act
//! on the base offsets only, and fibers are carried along unchanged. A
//! shadow is therefore a true base orbit `v_i` paired with the original
//! fiber coordinates, and every jump of the result lies inside a fiber.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_engine::{random_pseudo_orbit, PseudoOrbit};
use crate::models::{SkewProductSystem, TorusPoint};
use crate::numerics::{wrap_diff, wrap_unit};

/// Largest admissible jump of an input pseudo-orbit.
pub const EPSILON_0: f64 = 0.1;
/// Base coordinates of `f(x_{i-1})` and `x_i` must agree to this tolerance.
pub const LEAF_TOL: f64 = 1e-10;
/// Stopping tolerance of the periodic fixed-point iteration.
pub const PERIODIC_TOL: f64 = 1e-12;
pub const PERIODIC_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("jump {index} has size {jump:.3e}, at least the admissible {limit}")]
    JumpTooLarge { index: usize, jump: f64, limit: f64 },
    #[error("a chain needs at least two points")]
    TooShort,
    #[error("periodic shadowing needs identical first and last points")]
    NotPeriodic,
    #[error("{direction} fixed-point iteration did not converge in {iterations} steps")]
    NotConverged {
        direction: &'static str,
        iterations: usize,
    },
    #[error("step {index} leaves the center leaf: base gap {gap:.3e}")]
    OffLeaf { index: usize, gap: f64 },
    #[error("jump time t_{index} = {time:.3e} violates |t| < {epsilon:.3e}")]
    JumpTime { index: usize, time: f64, epsilon: f64 },
    #[error("shadow distance {distance:.3e} at {index} not below {bound:.3e}")]
    Bound {
        index: usize,
        distance: f64,
        bound: f64,
    },
}

/// A pseudo-orbit whose jumps run along fibers: `f(x_{i-1}) = θ_i(t_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterPseudoOrbit {
    points: Vec<TorusPoint>,
    epsilon: f64,
    jump_times: Vec<f64>,
}

/// `t_i` with `f(x_{i-1}) = (base(x_i), fiber(x_i) + t_i)`.
pub fn jump_time(system: &SkewProductSystem, prev: &TorusPoint, next: &TorusPoint) -> f64 {
    wrap_diff(system.apply(prev).fiber - next.fiber)
}

impl CenterPseudoOrbit {
    pub fn new(
        system: &SkewProductSystem,
        points: Vec<TorusPoint>,
        epsilon: f64,
    ) -> Result<Self, ShadowError> {
        if points.len() < 2 {
            return Err(ShadowError::TooShort);
        }
        let mut jump_times = Vec::with_capacity(points.len() - 1);
        for (i, w) in points.windows(2).enumerate() {
            let image = system.apply(&w[0]);
            let gap = image.base_distance(&w[1]);
            if gap > LEAF_TOL {
                return Err(ShadowError::OffLeaf { index: i + 1, gap });
            }
            let t = wrap_diff(image.fiber - w[1].fiber);
            if !(t.abs() < epsilon) {
                return Err(ShadowError::JumpTime {
                    index: i + 1,
                    time: t,
                    epsilon,
                });
            }
            jump_times.push(t);
        }
        Ok(Self {
            points,
            epsilon,
            jump_times,
        })
    }

    /// Chain over the true base orbit of `start` with prescribed jump times.
    pub fn from_jump_times(
        system: &SkewProductSystem,
        start: TorusPoint,
        jump_times: &[f64],
        epsilon: f64,
    ) -> Result<Self, ShadowError> {
        let mut points = Vec::with_capacity(jump_times.len() + 1);
        points.push(start);
        let mut cur = start;
        for &t in jump_times {
            let image = system.apply(&cur);
            cur = TorusPoint {
                base: image.base,
                fiber: wrap_unit(image.fiber - t),
            };
            points.push(cur);
        }
        Self::new(system, points, epsilon)
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `t_1, ..., t_n`.
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn steps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.points[0].same_bits(self.points.last().expect("non-empty"))
    }

    pub fn max_jump_time(&self) -> f64 {
        self.jump_times.iter().fold(0.0, |m, t| m.max(t.abs()))
    }
}

/// The holonomy `h_i^s` between local stable disks at consecutive anchors,
/// in eigencoordinates of the base offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolonomyStep {
    pub source: TorusPoint,
    pub target: TorusPoint,
    mult_s: f64,
    mult_u: f64,
    jump_s: f64,
    jump_u: f64,
    e_s: [f64; 2],
}

impl HolonomyStep {
    pub fn new(system: &SkewProductSystem, source: TorusPoint, target: TorusPoint) -> Self {
        let eig = system.eigen();
        let image = system.base_linear(source.base);
        let d = [
            wrap_diff(target.base[0] - image[0]),
            wrap_diff(target.base[1] - image[1]),
        ];
        let (jump_s, jump_u) = eig.coords(d);
        Self {
            source,
            target,
            mult_s: eig.mult_s,
            mult_u: eig.mult_u,
            jump_s,
            jump_u,
            e_s: eig.e_s,
        }
    }

    /// Base jump `target - A source` in eigencoordinates.
    pub fn jump(&self) -> (f64, f64) {
        (self.jump_s, self.jump_u)
    }

    /// Stable-disk coordinate of `h^s(source + s e_s)` at `target`.
    pub fn stable(&self, s: f64) -> f64 {
        self.mult_s * s - self.jump_s
    }

    /// Unstable-disk coordinate at `source` whose image lands on the
    /// center-stable leaf of `target + u e_u`.
    pub fn unstable_pullback(&self, u: f64) -> f64 {
        (u + self.jump_u) / self.mult_u
    }

    /// The point `h^s(source + s e_s)` itself.
    pub fn stable_point(&self, s: f64) -> TorusPoint {
        let t = self.stable(s);
        TorusPoint::new(
            self.target.base[0] + t * self.e_s[0],
            self.target.base[1] + t * self.e_s[1],
            self.target.fiber,
        )
    }

    pub fn contraction(&self) -> f64 {
        self.mult_s.abs()
    }
}

fn holonomies(system: &SkewProductSystem, w: &[TorusPoint]) -> Result<Vec<HolonomyStep>, ShadowError> {
    if w.len() < 2 {
        return Err(ShadowError::TooShort);
    }
    w.windows(2)
        .enumerate()
        .map(|(i, p)| {
            let jump = system.apply(&p[0]).distance(&p[1]);
            if !(jump < EPSILON_0) {
                return Err(ShadowError::JumpTooLarge {
                    index: i + 1,
                    jump,
                    limit: EPSILON_0,
                });
            }
            Ok(HolonomyStep::new(system, p[0], p[1]))
        })
        .collect()
}

fn assemble(system: &SkewProductSystem, w: &[TorusPoint], cs: &[f64], cu: &[f64]) -> Vec<[f64; 2]> {
    let eig = system.eigen();
    w.iter()
        .zip(cs.iter().zip(cu))
        .map(|(p, (&s, &u))| {
            let c = eig.vector(s, u);
            [wrap_unit(p.base[0] + c[0]), wrap_unit(p.base[1] + c[1])]
        })
        .collect()
}

/// True base orbit shadowing the base of a pseudo-orbit.
///
/// The stable offset vanishes at the first point and the unstable offset at
/// the last, so the orbit continues the chain by true orbits on both sides.
pub fn base_shadow(system: &SkewProductSystem, orbit: &PseudoOrbit) -> Result<Vec<[f64; 2]>, ShadowError> {
    let w = orbit.points();
    let steps = holonomies(system, w)?;
    let n = steps.len();
    let mut cs = vec![0.0; n + 1];
    let mut cu = vec![0.0; n + 1];
    for i in 1..=n {
        cs[i] = steps[i - 1].stable(cs[i - 1]);
    }
    for i in (1..=n).rev() {
        cu[i - 1] = steps[i - 1].unstable_pullback(cu[i]);
    }
    Ok(assemble(system, w, &cs, &cu))
}

/// Result of a shadowing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterShadow {
    pub chain: CenterPseudoOrbit,
    /// Constant `L` with `d(x_i, w_i) < L ε` and `|t_i| < L ε`.
    pub lipschitz: f64,
    /// `max_i d(x_i, w_i) / ε`.
    pub measured_ratio: f64,
    /// Fixed-point iteration counts (stable, unstable) of the periodic variant.
    pub iterations: Option<(usize, usize)>,
}

/// `max(L_b, 1 + |∇φ| L_b)`: covers the base offset and the fiber jump.
pub fn shadow_constant(system: &SkewProductSystem) -> f64 {
    let lb = system.eigen().shadowing_constant();
    lb.max(1.0 + system.translation_gradient_bound() * lb)
}

fn finish(
    system: &SkewProductSystem,
    orbit: &PseudoOrbit,
    base: Vec<[f64; 2]>,
    iterations: Option<(usize, usize)>,
) -> Result<CenterShadow, ShadowError> {
    let w = orbit.points();
    let eps = orbit.epsilon();
    let lipschitz = shadow_constant(system);
    let mut points: Vec<TorusPoint> = base
        .iter()
        .zip(w)
        .map(|(v, p)| TorusPoint {
            base: *v,
            fiber: p.fiber,
        })
        .collect();
    if iterations.is_some() {
        points[w.len() - 1] = points[0];
    }
    let mut worst = 0.0f64;
    for (i, (x, p)) in points.iter().zip(w).enumerate() {
        let d = x.distance(p);
        if !(d < lipschitz * eps) {
            return Err(ShadowError::Bound {
                index: i,
                distance: d,
                bound: lipschitz * eps,
            });
        }
        worst = worst.max(d);
    }
    let chain = CenterPseudoOrbit::new(system, points, lipschitz * eps)?;
    Ok(CenterShadow {
        chain,
        lipschitz,
        measured_ratio: worst / eps,
        iterations,
    })
}

/// Center pseudo-orbit `x_i = (v_i, fiber(w_i))` over the base shadow.
pub fn center_shadow(system: &SkewProductSystem, orbit: &PseudoOrbit) -> Result<CenterShadow, ShadowError> {
    let base = base_shadow(system, orbit)?;
    finish(system, orbit, base, None)
}

/// Periodic variant: requires `w_0 = w_n` and returns `x_0 = x_n` bitwise.
///
/// The offsets at `w_0` are the fixed points of the composed stable
/// holonomy and of the composed unstable pullback, found by iteration from
/// zero until successive iterates differ by less than [`PERIODIC_TOL`].
pub fn center_shadow_periodic(
    system: &SkewProductSystem,
    orbit: &PseudoOrbit,
) -> Result<CenterShadow, ShadowError> {
    let w = orbit.points();
    if !w[0].same_bits(&w[w.len() - 1]) {
        return Err(ShadowError::NotPeriodic);
    }
    let steps = holonomies(system, w)?;
    let n = steps.len();

    let mut s0 = 0.0;
    let mut stable_iter = 0;
    loop {
        let next = steps.iter().fold(s0, |s, h| h.stable(s));
        stable_iter += 1;
        let change = (next - s0).abs();
        s0 = next;
        if change < PERIODIC_TOL {
            break;
        }
        if stable_iter >= PERIODIC_MAX_ITER {
            return Err(ShadowError::NotConverged {
                direction: "stable",
                iterations: stable_iter,
            });
        }
    }
    let mut u0 = 0.0;
    let mut unstable_iter = 0;
    loop {
        let next = steps.iter().rev().fold(u0, |u, h| h.unstable_pullback(u));
        unstable_iter += 1;
        let change = (next - u0).abs();
        u0 = next;
        if change < PERIODIC_TOL {
            break;
        }
        if unstable_iter >= PERIODIC_MAX_ITER {
            return Err(ShadowError::NotConverged {
                direction: "unstable",
                iterations: unstable_iter,
            });
        }
    }

    let mut cs = vec![s0; n + 1];
    let mut cu = vec![u0; n + 1];
    for i in 1..n {
        cs[i] = steps[i - 1].stable(cs[i - 1]);
    }
    for i in (1..n).rev() {
        cu[i] = steps[i].unstable_pullback(cu[i + 1]);
    }
    let base = assemble(system, w, &cs, &cu);
    finish(system, orbit, base, Some((stable_iter, unstable_iter)))
}

/// One row of the Lipschitz table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTrial {
    pub epsilon: f64,
    pub trial: usize,
    pub max_distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSummary {
    pub epsilon: f64,
    pub trials: usize,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTable {
    pub trials: Vec<LipschitzTrial>,
    pub summary: Vec<LipschitzSummary>,
}

impl LipschitzTable {
    /// CSV columns `epsilon,trial,max_distance,ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trials {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Chain length used by [`measure_lipschitz_L`].
pub const LIPSCHITZ_CHAIN_STEPS: usize = 40;

/// Empirical `sup_i d(x_i, w_i) / ε` over seeded random pseudo-orbits.
///
/// Each step jumps with probability `jump_probability`; with 0 every chain
/// is a true orbit. Rows are ordered by decreasing ε, then trial.
#[allow(non_snake_case)]
pub fn measure_lipschitz_L(
    system: &SkewProductSystem,
    trial_count: usize,
    eps_list: &[f64],
    jump_probability: f64,
    seed: u64,
) -> Result<LipschitzTable, ShadowError> {
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut trials = Vec::with_capacity(eps.len() * trial_count);
    let mut summary = Vec::with_capacity(eps.len());
    for (ei, &epsilon) in eps.iter().enumerate() {
        let rows: Result<Vec<LipschitzTrial>, ShadowError> = (0..trial_count)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((ei as u64) << 32) | trial as u64);
                let start = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
                let orbit =
                    random_pseudo_orbit(system, &mut rng, start, LIPSCHITZ_CHAIN_STEPS, epsilon, jump_probability);
                let shadow = center_shadow(system, &orbit)?;
                Ok(LipschitzTrial {
                    epsilon,
                    trial,
                    max_distance: shadow.measured_ratio * epsilon,
                    ratio: shadow.measured_ratio,
                })
            })
            .collect();
        let rows = rows?;
        summary.push(LipschitzSummary {
            epsilon,
            trials: trial_count,
            max_ratio: rows.iter().fold(0.0, |m, r| m.max(r.ratio)),
        });
        trials.extend(rows);
    }
    Ok(LipschitzTable { trials, summary })
}
