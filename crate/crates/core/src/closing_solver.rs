//! The perturbation family `f_τ = X_τ ∘ f` and the search for the closing
//! parameter.
//!
//! `X` is a constant field `(tilt · e_u, 1)`, so `X_τ` is a translation and
//! `f_τ` is again a skew product whose base map is `v ↦ A v + τ tilt e_u`.
//! Along a lifted chain the perturbed system keeps an invariant section: the
//! base offset `w_τ` solving `w = A w + τ tilt e_u` (constant in `i`), while
//! the fiber coordinate runs freely through the charts `ℝ_i`. Projecting
//! along the base offset identifies perturbed and unperturbed charts, so the
//! leaf conjugacy is the identity in the center coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::center_lift::{chain_order_report, ChainSign, LiftedChain, OrderReport};
use crate::models::{SkewProductSystem, TorusPoint};

/// Default bound on `|τ|` for section continuation.
pub const DEFAULT_TAU_MAX: f64 = 0.1;
/// Target residual `|D(τ_k)|` of the bisection.
pub const DISPLACEMENT_TOL: f64 = 1e-12;
/// Tolerance of the contraction solving the section offset.
pub const SECTION_TOL: f64 = 1e-12;
pub const SECTION_MAX_ITER: usize = 10_000;
/// Samples used for `Δ_{1/k}` inside [`find_closing_tau`].
pub const PUSH_SAMPLES: usize = 4096;
/// Genuine-orbit replay tolerance.
pub const REPLAY_TOL: f64 = 1e-12;
/// Closure tolerance for periodic chains.
pub const PERIODIC_TOL: f64 = 1e-10;
/// Per-step slack of the shooting fallback.
pub const SHOOTING_SLACK: f64 = 0.25 * REPLAY_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosingError {
    #[error("|tau| = {tau} exceeds {limit}")]
    TauOutOfRange { tau: f64, limit: f64 },
    #[error("section offset did not converge in {0} iterations")]
    SectionNotConverged(usize),
    #[error("center push {delta:.3e} at tau = {tau} is not positive")]
    NonPositivePush { tau: f64, delta: f64 },
    #[error("chain jumps have mixed signs")]
    Unordered,
    #[error("epsilon {epsilon:.3e} must be below min(1/k, Δ_1/k) = {bound:.3e}")]
    EpsilonTooLarge { epsilon: f64, bound: f64 },
    #[error("no bracket: D(0) = {d0:.3e}, D(±1/k) = {d1:.3e}; use epsilon below {required:.3e}")]
    NoBracket { d0: f64, d1: f64, required: f64 },
    #[error("bisection stagnated at tau = {tau} with residual {residual:.3e}")]
    Stagnation { tau: f64, residual: f64 },
    #[error("k must be positive")]
    InvalidK,
    #[error("orbit replay failed at step {index}: residual {residual:.3e}")]
    Replay { index: usize, residual: f64 },
    #[error("{which}: {lhs:.6e} is not below {rhs:.6e}")]
    Bound {
        which: &'static str,
        lhs: f64,
        rhs: f64,
    },
}

/// `X = tilt · (e_u, 0) + (0, 0, 1)` in base-then-fiber coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterVectorField {
    pub tilt: f64,
}

impl CenterVectorField {
    pub fn vertical() -> Self {
        Self { tilt: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub system: SkewProductSystem,
    pub field: CenterVectorField,
}

/// Base offset of the invariant section in eigencoordinates and in `ℝ^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionOffset {
    pub stable: f64,
    pub unstable: f64,
    pub vector: [f64; 2],
    pub iterations: usize,
}

impl SectionOffset {
    pub fn norm(&self) -> f64 {
        self.vector[0].hypot(self.vector[1])
    }
}

impl PerturbationFamily {
    pub fn new(system: SkewProductSystem, field: CenterVectorField) -> Self {
        Self { system, field }
    }

    /// Base translation `τ tilt e_u` of `X_τ`.
    pub fn base_shift(&self, tau: f64) -> [f64; 2] {
        let e = self.system.eigen().e_u;
        let c = tau * self.field.tilt;
        [c * e[0], c * e[1]]
    }

    /// Bounded solution of `w = A w + τ tilt e_u`, by forward iteration of
    /// the stable coordinate and backward iteration of the unstable one.
    pub fn section_offset(&self, tau: f64) -> Result<SectionOffset, ClosingError> {
        let eig = self.system.eigen();
        let (bs, bu) = eig.coords(self.base_shift(tau));
        if bs == 0.0 && bu == 0.0 {
            return Ok(SectionOffset {
                stable: 0.0,
                unstable: 0.0,
                vector: [0.0, 0.0],
                iterations: 0,
            });
        }
        let mut s = 0.0f64;
        let mut u = 0.0f64;
        let mut iterations = 0;
        loop {
            let ns = eig.mult_s * s + bs;
            let nu = (u - bu) / eig.mult_u;
            iterations += 1;
            let change = (ns - s).abs().max((nu - u).abs());
            s = ns;
            u = nu;
            if change < SECTION_TOL {
                break;
            }
            if iterations >= SECTION_MAX_ITER {
                return Err(ClosingError::SectionNotConverged(iterations));
            }
        }
        Ok(SectionOffset {
            stable: s,
            unstable: u,
            vector: eig.vector(s, u),
            iterations,
        })
    }

    /// `max(1, |w_τ| / |τ|)`; exact since the offset is linear in `τ`.
    pub fn section_lipschitz(&self) -> Result<f64, ClosingError> {
        Ok((self.section_offset(1e-3)?.norm() / 1e-3).max(1.0))
    }
}

/// `f_τ(p) = X_τ(f(p))`.
pub fn perturbed_map(family: &PerturbationFamily, tau: f64, p: &TorusPoint) -> TorusPoint {
    let sys = &family.system;
    let b = sys.base_linear(p.base);
    let shift = family.base_shift(tau);
    TorusPoint::new(b[0] + shift[0], b[1] + shift[1], sys.fiber_lift(p.base, p.fiber) + tau)
}

/// The `f_τ`-orbit through the charts of a lifted chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuedSection {
    pub tau: f64,
    pub offset: SectionOffset,
    /// `p_0, ..., p_n`.
    pub points: Vec<TorusPoint>,
    /// Center coordinate of `p_i` in `ℝ_i` after projecting out the offset.
    pub chart_coordinates: Vec<f64>,
    /// `sup_i` su-norm of `p_i` relative to the chain leaves.
    pub su_norm: f64,
}

#[inline]
fn perturbed_step(lifted: &LiftedChain, i: usize, u: f64, w: [f64; 2], tau: f64) -> f64 {
    let v = lifted.base[i];
    lifted.system.fiber_lift([v[0] + w[0], v[1] + w[1]], lifted.origins[i] + u) + tau
        - lifted.origins[i + 1]
        - lifted.wraps[i]
}

fn chart_orbit(lifted: &LiftedChain, w: [f64; 2], tau: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(lifted.base.len());
    u.push(lifted.offsets[0]);
    for i in 0..lifted.steps() {
        let next = perturbed_step(lifted, i, u[i], w, tau);
        u.push(next);
    }
    u
}

fn check_tau(tau: f64, limit: f64) -> Result<(), ClosingError> {
    if !(tau.abs() <= limit) {
        return Err(ClosingError::TauOutOfRange { tau, limit });
    }
    Ok(())
}

/// Orbit of `f_τ` starting on the leaf of `x_0` shifted by the section
/// offset, continued through every chart of the chain.
pub fn continue_section(
    family: &PerturbationFamily,
    lifted: &LiftedChain,
    tau: f64,
) -> Result<ContinuedSection, ClosingError> {
    continue_section_within(family, lifted, tau, DEFAULT_TAU_MAX)
}

pub fn continue_section_within(
    family: &PerturbationFamily,
    lifted: &LiftedChain,
    tau: f64,
    tau_max: f64,
) -> Result<ContinuedSection, ClosingError> {
    check_tau(tau, tau_max)?;
    let offset = family.section_offset(tau)?;
    let u = chart_orbit(lifted, offset.vector, tau);
    Ok(section_from(lifted, tau, offset, u))
}

fn section_from(lifted: &LiftedChain, tau: f64, offset: SectionOffset, u: Vec<f64>) -> ContinuedSection {
    let w = offset.vector;
    let points = u
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let v = lifted.base[i];
            TorusPoint::new(v[0] + w[0], v[1] + w[1], lifted.origins[i] + c)
        })
        .collect();
    ContinuedSection {
        tau,
        offset,
        points,
        chart_coordinates: u,
        su_norm: offset.norm(),
    }
}

/// Chart coordinates from `s_0` to exactly `s_n` whose steps miss
/// `perturbed_step` by at most `slack`, or `None` when `s_n` is out of reach.
///
/// Coordinates reachable from `s_0` with such misses fill the interval
/// between the orbits pushed by `-slack` and `+slack`; the path is built
/// backward from `s_n` by clamping preimages into those intervals.
fn shooting_orbit(lifted: &LiftedChain, w: [f64; 2], tau: f64, slack: f64) -> Option<Vec<f64>> {
    let n = lifted.steps();
    let pushed = |c: f64| {
        let mut u = vec![lifted.offsets[0]];
        for i in 0..n {
            u.push(perturbed_step(lifted, i, u[i], w, tau) + c);
        }
        u
    };
    let (lo, hi) = (pushed(-slack), pushed(slack));
    let target = lifted.offsets[n];
    if !(lo[n] <= target && target <= hi[n]) {
        return None;
    }
    let sys = &lifted.system;
    let mut u = vec![0.0; n + 1];
    u[n] = target;
    for i in (0..n).rev() {
        let v = lifted.base[i];
        let y = u[i + 1] + lifted.origins[i + 1] + lifted.wraps[i] - tau;
        let theta = sys
            .fiber_core_inverse(y - sys.translation([v[0] + w[0], v[1] + w[1]]))
            .ok()?;
        u[i] = (theta - lifted.origins[i]).clamp(lo[i], hi[i]);
    }
    u[0] = lifted.offsets[0];
    Some(u)
}

/// `D(τ)`: lifted gap between the perturbed `n`-step image of the section
/// start and the last anchor. `D(0) = f̂^n(s_0) − s_n`.
pub fn displacement(family: &PerturbationFamily, lifted: &LiftedChain, tau: f64) -> Result<f64, ClosingError> {
    displacement_within(family, lifted, tau, DEFAULT_TAU_MAX)
}

pub fn displacement_within(
    family: &PerturbationFamily,
    lifted: &LiftedChain,
    tau: f64,
    tau_max: f64,
) -> Result<f64, ClosingError> {
    check_tau(tau, tau_max)?;
    let w = family.section_offset(tau)?.vector;
    let u = chart_orbit(lifted, w, tau);
    Ok(u[lifted.steps()] - lifted.offsets[lifted.steps()])
}

/// `D` on an evenly spaced grid of `[0, tau_max]` (`points >= 2`).
pub fn displacement_profile(
    family: &PerturbationFamily,
    lifted: &LiftedChain,
    tau_max: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>, ClosingError> {
    let last = points.max(2) - 1;
    (0..=last)
        .map(|i| {
            let tau = tau_max * i as f64 / last as f64;
            Ok((tau, displacement_within(family, lifted, tau, tau_max)?))
        })
        .collect()
}

/// Estimate of `Δ_τ` with the sample that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterPush {
    pub tau: f64,
    pub delta: f64,
    pub argmin: TorusPoint,
    pub samples: usize,
}

/// `min_z sgn(τ) [f̃_τ(h_τ z) − h_τ(f̂ z)]` over seeded uniform samples.
///
/// With the leaf conjugacy being the identity in the center coordinate the
/// gain at `z = (v, θ)` is `τ + g(v + w_τ, θ) − g(v, θ)`.
pub fn min_center_push(family: &PerturbationFamily, tau: f64, sample_count: usize) -> Result<CenterPush, ClosingError> {
    check_tau(tau, 0.5)?;
    let w = family.section_offset(tau)?.vector;
    let sys = &family.system;
    let sigma = if tau < 0.0 { -1.0 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut best = f64::INFINITY;
    let mut argmin = TorusPoint::new(0.0, 0.0, 0.0);
    for _ in 0..sample_count.max(1) {
        let z = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
        let gain = tau + (sys.translation([z.base[0] + w[0], z.base[1] + w[1]]) - sys.translation(z.base));
        let g = sigma * gain;
        if g < best {
            best = g;
            argmin = z;
        }
    }
    if !(best > 0.0) {
        return Err(ClosingError::NonPositivePush { tau, delta: best });
    }
    Ok(CenterPush {
        tau,
        delta: best,
        argmin,
        samples: sample_count.max(1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosingResult {
    pub k: u32,
    pub tau: f64,
    /// `+1` for chains with `t_i <= 0`, `-1` for the reflected branch.
    pub sign: i8,
    /// `p_k`, the section start.
    pub start: TorusPoint,
    /// `f_τ^n(p_k)`.
    pub end: TorusPoint,
    pub steps: usize,
    /// `d(x_0, p_k)` and `d(x_n, f_τ^n(p_k))` for the chain anchors.
    pub anchor_distances: (f64, f64),
    pub displacement_residual: f64,
    /// `d(f_τ^n(p_k), p_k)` when the chain is periodic.
    pub periodic_residual: Option<f64>,
    /// Largest stepwise `d(f_τ(p_i), p_{i+1})`.
    pub replay_residual: f64,
    pub su_norm: f64,
    pub degenerate: bool,
    pub bisection_steps: usize,
    pub center_push: Option<f64>,
    /// The orbit was assembled by the shooting fallback, see [`find_closing_tau`].
    pub shot: bool,
    pub orbit: Vec<TorusPoint>,
}

fn replay(family: &PerturbationFamily, tau: f64, points: &[TorusPoint]) -> Result<f64, ClosingError> {
    let mut worst = 0.0f64;
    for (i, w) in points.windows(2).enumerate() {
        let r = perturbed_map(family, tau, &w[0]).distance(&w[1]);
        if !(r < REPLAY_TOL) {
            return Err(ClosingError::Replay { index: i + 1, residual: r });
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

fn build_result(
    family: &PerturbationFamily,
    lifted: &LiftedChain,
    k: u32,
    tau: f64,
    sign: i8,
    degenerate: bool,
    bisection_steps: usize,
    center_push: Option<f64>,
    shooting: Option<Vec<f64>>,
) -> Result<ClosingResult, ClosingError> {
    let shot = shooting.is_some();
    let section = match shooting {
        Some(u) => {
            check_tau(tau, 1.0 / k as f64)?;
            section_from(lifted, tau, family.section_offset(tau)?, u)
        }
        None => continue_section_within(family, lifted, tau, 1.0 / k as f64)?,
    };
    let n = lifted.steps();
    let anchors = lifted.anchors();
    let residual = (section.chart_coordinates[n] - lifted.offsets[n]).abs();
    let replay_residual = replay(family, tau, &section.points)?;
    let start = section.points[0];
    let end = section.points[n];
    let periodic_residual = if lifted.is_periodic() {
        let r = end.distance(&start);
        if !(r < PERIODIC_TOL) {
            return Err(ClosingError::Bound {
                which: "periodic closure",
                lhs: r,
                rhs: PERIODIC_TOL,
            });
        }
        Some(r)
    } else {
        None
    };
    Ok(ClosingResult {
        k,
        tau,
        sign,
        start,
        end,
        steps: n,
        anchor_distances: (anchors[0].distance(&start), anchors[n].distance(&end)),
        displacement_residual: residual,
        periodic_residual,
        replay_residual,
        su_norm: section.su_norm,
        degenerate,
        bisection_steps,
        center_push,
        shot,
        orbit: section.points,
    })
}

/// Find `τ_k` with `|τ_k| <= 1/k` and `D(τ_k) = 0`.
///
/// Chains with `t_i <= 0` search `τ ∈ [0, 1/k]`; chains with `t_i >= 0` the
/// reflected interval. A chain whose start already lands on its end is
/// returned as the degenerate case `τ_k = 0`.
///
/// On long chains `D` can be steeper than the float grid in `τ`: bisection
/// then ends on adjacent floats with `D` still far from zero. In that case
/// the orbit at the lower end is assembled by multiple shooting, every step
/// matching `f_τ` to within [`SHOOTING_SLACK`] and the last point landing
/// exactly on `s_n`; [`ClosingResult::shot`] records this.
pub fn find_closing_tau(family: &PerturbationFamily, lifted: &LiftedChain, k: u32) -> Result<ClosingResult, ClosingError> {
    if k == 0 {
        return Err(ClosingError::InvalidK);
    }
    let report: OrderReport = chain_order_report(lifted);
    let d0 = displacement_within(family, lifted, 0.0, 1.0)?;
    if d0 == 0.0 {
        return build_result(family, lifted, k, 0.0, 0, true, 0, None, None);
    }
    let sigma: f64 = match report.sign {
        ChainSign::NonPositive => 1.0,
        ChainSign::NonNegative => -1.0,
        ChainSign::Zero => 1.0,
        ChainSign::Mixed => return Err(ClosingError::Unordered),
    };
    let bound = 1.0 / k as f64;
    let push = min_center_push(family, sigma * bound, PUSH_SAMPLES)?;
    let admissible = bound.min(push.delta);
    if !(lifted.epsilon < admissible) {
        return Err(ClosingError::EpsilonTooLarge {
            epsilon: lifted.epsilon,
            bound: admissible,
        });
    }
    let h = |t: f64| -> Result<f64, ClosingError> { Ok(sigma * displacement_within(family, lifted, sigma * t, bound)?) };
    let h0 = sigma * d0;
    let h1 = h(bound)?;
    if !(h0 <= 0.0 && h1 > 0.0) {
        return Err(ClosingError::NoBracket {
            d0,
            d1: sigma * h1,
            required: admissible,
        });
    }
    let (mut lo, mut hi) = (0.0f64, bound);
    let (mut hlo, mut hhi) = (h0, h1);
    let mut iterations = 0;
    let mut shooting = None;
    let tau = loop {
        if hlo.abs() < DISPLACEMENT_TOL && hlo.abs() <= hhi.abs() {
            break lo;
        }
        if hhi.abs() < DISPLACEMENT_TOL {
            break hi;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            let w = family.section_offset(sigma * lo)?.vector;
            if let Some(u) = shooting_orbit(lifted, w, sigma * lo, SHOOTING_SLACK) {
                shooting = Some(u);
                break lo;
            }
            let (t, r) = if hlo.abs() <= hhi.abs() { (lo, hlo) } else { (hi, hhi) };
            return Err(ClosingError::Stagnation {
                tau: sigma * t,
                residual: r.abs(),
            });
        }
        let hm = h(mid)?;
        iterations += 1;
        if hm <= 0.0 {
            lo = mid;
            hlo = hm;
        } else {
            hi = mid;
            hhi = hm;
        }
    };
    let sign = if sigma > 0.0 { 1 } else { -1 };
    build_result(family, lifted, k, sigma * tau, sign, false, iterations, Some(push.delta), shooting)
}

/// One side of the connection estimate `d(x, p) <= d(x, x_0) + d(x_0, p) < (L+1)/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointBound {
    /// `d(x, p_k)` or `d(y, f^n(p_k))`.
    pub distance: f64,
    /// Distance from the target point to the chain anchor.
    pub to_anchor: f64,
    /// Distance from the chain anchor to the orbit point.
    pub anchor_to_orbit: f64,
    /// `L τ_k`, the section bound on the second term.
    pub section_bound: f64,
    /// `(L+1)/k`.
    pub bound: f64,
}

impl EndpointBound {
    pub fn margin(&self) -> f64 {
        self.bound - self.distance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionReport {
    pub k: u32,
    pub lipschitz: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub start: EndpointBound,
    pub end: EndpointBound,
    pub replay_residual: f64,
}

/// Check the connection bounds; any violation is an error.
pub fn verify_connection(
    family: &PerturbationFamily,
    result: &ClosingResult,
    lifted: &LiftedChain,
    x: &TorusPoint,
    y: &TorusPoint,
    l_meas: f64,
) -> Result<ConnectionReport, ClosingError> {
    let k = result.k as f64;
    let bound = (l_meas + 1.0) / k;
    let anchors = lifted.anchors();
    let n = lifted.steps();
    let replay_residual = replay(family, result.tau, &result.orbit)?;
    let side = |target: &TorusPoint, anchor: &TorusPoint, p: &TorusPoint| EndpointBound {
        distance: target.distance(p),
        to_anchor: target.distance(anchor),
        anchor_to_orbit: anchor.distance(p),
        section_bound: l_meas * result.tau.abs(),
        bound,
    };
    let start = side(x, &anchors[0], &result.start);
    let end = side(y, &anchors[n], &result.end);
    for (which, b) in [("d(x, p_k)", &start), ("d(y, f^n(p_k))", &end)] {
        if !(b.distance < b.bound) {
            return Err(ClosingError::Bound {
                which,
                lhs: b.distance,
                rhs: b.bound,
            });
        }
    }
    if !(result.tau.abs() <= 1.0 / k) {
        return Err(ClosingError::Bound {
            which: "|tau_k|",
            lhs: result.tau.abs(),
            rhs: 1.0 / k,
        });
    }
    Ok(ConnectionReport {
        k: result.k,
        lipschitz: l_meas,
        epsilon: lifted.epsilon,
        tau: result.tau,
        start,
        end,
        replay_residual,
    })
}
