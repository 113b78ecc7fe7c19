//! Lifted fiber dynamics along a center pseudo-orbit and sign reordering of
//! its jumps.
//!
//! Each anchor `x_i = (v_i, Θ_i + s_i)` gets the chart `ℝ_i ∋ u ↦ (v_i, Θ_i + u)`.
//! Chart origins `Θ_i` and the integer wraps `m_i` are fixed when the chain
//! is lifted; rewriting only moves the offsets `s_i`. The lifted map is
//!
//! ```text
//! f̂_i(u) = g(v_i, Θ_i + u) − Θ_{i+1} − m_i,     t_{i+1} = f̂_i(s_i) − s_{i+1}
//! ```
//!
//! where `g` is the real lift of the fiber map.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::center_shadowing::CenterPseudoOrbit;
use crate::models::{SkewProductSystem, TorusPoint};
use crate::numerics::{ceil_in, floor_in, wrap_unit};

/// Half-width of the bracket searched by the chart inverses; `|f̂_i(u) − u|`
/// stays below 2 for every preset.
pub const INVERSE_REACH: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("jump {index} has lifted size {time:.3e}, not below {epsilon:.3e}")]
    JumpTooLarge { index: usize, time: f64, epsilon: f64 },
    #[error("epsilon {0} must lie in (0, 1/2)")]
    Epsilon(f64),
    #[error("inverse of the lifted map failed at chart {chart}")]
    Inverse { chart: usize },
    #[error("reordering exceeded {cap} steps")]
    IterationCap { cap: usize },
    #[error("reordering broke an invariant: {0}")]
    Invariant(String),
}

/// A center pseudo-orbit lifted to the disjoint union of real lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedChain {
    pub system: SkewProductSystem,
    pub base: Vec<[f64; 2]>,
    /// Chart origins `Θ_i ∈ [0, 1)`.
    pub origins: Vec<f64>,
    /// Integer wraps `m_i` (one per step).
    pub wraps: Vec<f64>,
    /// Anchor offsets `s_i`; `s_0` and `s_n` never change.
    pub offsets: Vec<f64>,
    pub epsilon: f64,
}

impl LiftedChain {
    pub fn steps(&self) -> usize {
        self.wraps.len()
    }

    /// `f̂_i(u)`.
    #[inline]
    pub fn chart_map(&self, i: usize, u: f64) -> f64 {
        self.system.fiber_lift(self.base[i], self.origins[i] + u) - self.origins[i + 1] - self.wraps[i]
    }

    /// Derivative of `f̂_i`.
    pub fn chart_derivative(&self, i: usize, u: f64) -> f64 {
        self.system.fiber_derivative(self.origins[i] + u)
    }

    /// Largest float `u` in `[y − INVERSE_REACH, y + INVERSE_REACH]` with
    /// `f̂_i(u) <= y`, found by bisection over the float order.
    pub fn floor_inverse(&self, i: usize, y: f64) -> Result<f64, LiftError> {
        floor_in(|u| self.chart_map(i, u), y, y - INVERSE_REACH, y + INVERSE_REACH)
            .ok_or(LiftError::Inverse { chart: i })
    }

    /// Smallest float `u` in the same bracket with `f̂_i(u) >= y`.
    pub fn ceil_inverse(&self, i: usize, y: f64) -> Result<f64, LiftError> {
        ceil_in(|u| self.chart_map(i, u), y, y - INVERSE_REACH, y + INVERSE_REACH)
            .ok_or(LiftError::Inverse { chart: i })
    }

    /// `f̂^j(u)` from chart `i` to chart `i + j`.
    pub fn lifted_map(&self, i: usize, j: usize, u: f64) -> f64 {
        (i..i + j).fold(u, |u, k| self.chart_map(k, u))
    }

    /// `θ_i(u)`.
    pub fn chart_point(&self, i: usize, u: f64) -> TorusPoint {
        TorusPoint {
            base: self.base[i],
            fiber: wrap_unit(self.origins[i] + u),
        }
    }

    pub fn anchors(&self) -> Vec<TorusPoint> {
        (0..self.base.len()).map(|i| self.chart_point(i, self.offsets[i])).collect()
    }

    /// `t_1, ..., t_n`.
    pub fn jump_times(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|i| self.chart_map(i, self.offsets[i]) - self.offsets[i + 1])
            .collect()
    }

    /// Forward orbit `f̂^i(s_0)`, `i = 0..=n`.
    pub fn forward_orbit(&self) -> Vec<f64> {
        let mut fwd = Vec::with_capacity(self.base.len());
        fwd.push(self.offsets[0]);
        for i in 0..self.steps() {
            let next = self.chart_map(i, fwd[i]);
            fwd.push(next);
        }
        fwd
    }

    pub fn is_periodic(&self) -> bool {
        let a = self.chart_point(0, self.offsets[0]);
        let b = self.chart_point(self.steps(), self.offsets[self.steps()]);
        a.same_bits(&b)
    }

    /// Same chain with a different jump bound, checked against the jumps.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self, LiftError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(LiftError::Epsilon(epsilon));
        }
        self.epsilon = epsilon;
        self.check_jumps()?;
        Ok(self)
    }

    fn check_jumps(&self) -> Result<(), LiftError> {
        for (i, t) in self.jump_times().into_iter().enumerate() {
            if !(t.abs() < self.epsilon) {
                return Err(LiftError::JumpTooLarge {
                    index: i + 1,
                    time: t,
                    epsilon: self.epsilon,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Lift a center pseudo-orbit with zero offsets at every anchor.
pub fn lift_chain(system: &SkewProductSystem, chain: &CenterPseudoOrbit) -> Result<LiftedChain, LiftError> {
    let eps = chain.epsilon();
    if !(eps > 0.0 && eps < 0.5) {
        return Err(LiftError::Epsilon(eps));
    }
    let pts = chain.points();
    let base: Vec<[f64; 2]> = pts.iter().map(|p| p.base).collect();
    let origins: Vec<f64> = pts.iter().map(|p| p.fiber).collect();
    let wraps = (0..pts.len() - 1)
        .map(|i| (system.fiber_lift(base[i], origins[i]) - origins[i + 1]).round())
        .collect();
    let lifted = LiftedChain {
        system: system.clone(),
        base,
        origins,
        wraps,
        offsets: vec![0.0; pts.len()],
        epsilon: eps,
    };
    lifted.check_jumps()?;
    Ok(lifted)
}

/// Sign pattern of the jump times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainSign {
    /// All `t_i <= 0`, some negative.
    NonPositive,
    /// All `t_i = 0`.
    Zero,
    /// All `t_i >= 0`, some positive.
    NonNegative,
    Mixed,
}

impl ChainSign {
    pub fn of(times: &[f64]) -> Self {
        let neg = times.iter().any(|&t| t < 0.0);
        let pos = times.iter().any(|&t| t > 0.0);
        match (neg, pos) {
            (false, false) => ChainSign::Zero,
            (true, false) => ChainSign::NonPositive,
            (false, true) => ChainSign::NonNegative,
            (true, true) => ChainSign::Mixed,
        }
    }

    /// `-1`, `0`, `+1`; `None` for mixed chains.
    pub fn signum(self) -> Option<i8> {
        match self {
            ChainSign::NonPositive => Some(-1),
            ChainSign::Zero => Some(0),
            ChainSign::NonNegative => Some(1),
            ChainSign::Mixed => None,
        }
    }
}

/// Position of `f̂^i(s_0)` relative to `s_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Below,
    Equal,
    Above,
}

impl From<Ordering> for Relation {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::Less => Relation::Below,
            Ordering::Equal => Relation::Equal,
            Ordering::Greater => Relation::Above,
        }
    }
}

/// Comparison of `f̂^i(0_0)` with the anchor offset `s_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderComparison {
    pub index: usize,
    pub forward: f64,
    pub anchor: f64,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub sign: ChainSign,
    pub comparisons: Vec<OrderComparison>,
}

impl OrderReport {
    /// Ordered chains have every comparison on the side of their sign.
    pub fn consistent(&self) -> bool {
        let ok = |r: Relation| match self.sign {
            ChainSign::NonPositive => r != Relation::Above,
            ChainSign::NonNegative => r != Relation::Below,
            ChainSign::Zero => r == Relation::Equal,
            ChainSign::Mixed => true,
        };
        self.comparisons.iter().all(|c| ok(c.relation))
    }
}

pub fn chain_order_report(lifted: &LiftedChain) -> OrderReport {
    let fwd = lifted.forward_orbit();
    let comparisons = (1..fwd.len())
        .map(|i| OrderComparison {
            index: i,
            forward: fwd[i],
            anchor: lifted.offsets[i],
            relation: fwd[i].total_cmp(&lifted.offsets[i]).into(),
        })
        .collect();
    OrderReport {
        sign: ChainSign::of(&lifted.jump_times()),
        comparisons,
    }
}

/// Which side the rewritten chain ended on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReorderBranch {
    /// `f̂^n(s_0) < s_n`: all jumps end in `(−ε, 0]`.
    NonPositive,
    /// `f̂^n(s_0) > s_n`: all jumps end in `[0, ε)`.
    NonNegative,
    /// `f̂^n(s_0) = s_n`: intermediate anchors replaced by the true orbit.
    TrueOrbit,
}

/// One rewriting step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReorderStep {
    /// Truncation to the true orbit of `x_0` up to index `k`.
    TruncateToOrbit { k: usize },
    /// Splice of the backward orbit of `x_k` over indices `j..k`.
    SpliceBackward { k: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReorderReport {
    pub branch: ReorderBranch,
    pub steps: Vec<ReorderStep>,
}

/// Oriented view: either the chain itself or its reflection `u ↦ −u`.
struct Oriented<'a> {
    chain: &'a LiftedChain,
    flip: bool,
}

impl Oriented<'_> {
    fn map(&self, i: usize, u: f64) -> f64 {
        if self.flip {
            -self.chain.chart_map(i, -u)
        } else {
            self.chain.chart_map(i, u)
        }
    }

    fn floor_inverse(&self, i: usize, y: f64) -> Result<f64, LiftError> {
        if self.flip {
            Ok(-self.chain.ceil_inverse(i, -y)?)
        } else {
            self.chain.floor_inverse(i, y)
        }
    }
}

/// `k(Γ)`: smallest `k` such that `f̂^{i+1}(s_0) <= f̂_i(s_i) <= s_{i+1}` for
/// every `i` in `[k, n-1]`, or `n` when the last step already fails.
fn order_index(o: &Oriented, s: &[f64]) -> (usize, Vec<f64>) {
    let n = s.len() - 1;
    let mut fwd = Vec::with_capacity(n + 1);
    fwd.push(s[0]);
    for i in 0..n {
        let next = o.map(i, fwd[i]);
        fwd.push(next);
    }
    let mut k = n;
    for i in (0..n).rev() {
        let img = o.map(i, s[i]);
        if fwd[i + 1] <= img && img <= s[i + 1] {
            k = i;
        } else {
            break;
        }
    }
    (k, fwd)
}

/// Rewrite the intermediate anchors until every jump has the same sign.
///
/// Endpoints and chart data are untouched; only `s_1..s_{n-1}` move. The
/// side is chosen by comparing `f̂^n(s_0)` with `s_n`.
pub fn reorder_chain(lifted: &LiftedChain) -> Result<(LiftedChain, ReorderReport), LiftError> {
    let n = lifted.steps();
    let fwd = lifted.forward_orbit();
    let mut out = lifted.clone();
    let branch = match fwd[n].total_cmp(&lifted.offsets[n]) {
        Ordering::Equal => {
            out.offsets[1..n].copy_from_slice(&fwd[1..n]);
            verify_reordered(lifted, &out, ReorderBranch::TrueOrbit)?;
            return Ok((
                out,
                ReorderReport {
                    branch: ReorderBranch::TrueOrbit,
                    steps: Vec::new(),
                },
            ));
        }
        Ordering::Less => ReorderBranch::NonPositive,
        Ordering::Greater => ReorderBranch::NonNegative,
    };
    let flip = branch == ReorderBranch::NonNegative;
    let o = Oriented { chain: lifted, flip };
    let sign = if flip { -1.0 } else { 1.0 };
    let mut s: Vec<f64> = lifted.offsets.iter().map(|&x| sign * x).collect();

    let cap = (n * n).max(1);
    let mut steps = Vec::new();
    let mut last_k = usize::MAX;
    loop {
        let (k, fwd) = order_index(&o, &s);
        if k == 0 {
            break;
        }
        if k >= last_k {
            return Err(LiftError::Invariant(format!("k did not decrease: {last_k} -> {k}")));
        }
        if steps.len() >= cap {
            return Err(LiftError::IterationCap { cap });
        }
        last_k = k;
        let img = o.map(k - 1, s[k - 1]);
        if img < fwd[k] && fwd[k] <= s[k] {
            s[1..k].copy_from_slice(&fwd[1..k]);
            steps.push(ReorderStep::TruncateToOrbit { k });
        } else if fwd[k] <= s[k] && s[k] < img {
            let mut back = vec![0.0; k + 1];
            back[k] = s[k];
            for i in (0..k).rev() {
                back[i] = o.floor_inverse(i, back[i + 1])?;
            }
            let j = (1..k)
                .find(|&j| back[j] < s[j])
                .ok_or_else(|| LiftError::Invariant(format!("no splice index below k = {k}")))?;
            s[j..k].copy_from_slice(&back[j..k]);
            steps.push(ReorderStep::SpliceBackward { k, j });
        } else {
            return Err(LiftError::Invariant(format!("f^k(x_0) > x_k at k = {k}")));
        }
    }
    for (dst, &x) in out.offsets.iter_mut().zip(&s) {
        *dst = sign * x;
    }
    verify_reordered(lifted, &out, branch)?;
    Ok((out, ReorderReport { branch, steps }))
}

fn verify_reordered(input: &LiftedChain, out: &LiftedChain, branch: ReorderBranch) -> Result<(), LiftError> {
    let n = input.steps();
    if out.offsets[0].to_bits() != input.offsets[0].to_bits() || out.offsets[n].to_bits() != input.offsets[n].to_bits()
    {
        return Err(LiftError::Invariant("endpoints moved".into()));
    }
    out.check_jumps()?;
    let times = out.jump_times();
    let ok = match branch {
        ReorderBranch::NonPositive => times.iter().all(|&t| t <= 0.0),
        ReorderBranch::NonNegative => times.iter().all(|&t| t >= 0.0),
        ReorderBranch::TrueOrbit => times.iter().all(|&t| t == 0.0),
    };
    if !ok {
        return Err(LiftError::Invariant(format!("jump signs not uniform for {branch:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product() -> SkewProductSystem {
        SkewProductSystem::new([[2, 1], [1, 1]], vec![], 0.0).unwrap()
    }

    fn fiber_chain(times: &[f64], eps: f64) -> LiftedChain {
        let s = product();
        let c = CenterPseudoOrbit::from_jump_times(&s, TorusPoint::new(0.0, 0.0, 0.3), times, eps).unwrap();
        lift_chain(&s, &c).unwrap()
    }

    #[test]
    fn pure_fiber_jumps() {
        let l = fiber_chain(&[-0.05; 6], 0.06);
        for t in l.jump_times() {
            assert!((t + 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn true_orbit_lifts_to_zero() {
        let l = fiber_chain(&[0.0; 5], 0.06);
        assert!(l.jump_times().iter().all(|&t| t == 0.0));
        let r = chain_order_report(&l);
        assert_eq!(r.sign, ChainSign::Zero);
        assert!(r.consistent());
    }

    #[test]
    fn uniform_chain_unchanged() {
        let l = fiber_chain(&[-0.03, -0.01, -0.04], 0.06);
        let (out, rep) = reorder_chain(&l).unwrap();
        assert_eq!(out, l);
        assert!(rep.steps.is_empty());
        assert_eq!(rep.branch, ReorderBranch::NonPositive);
        let up = fiber_chain(&[0.03, 0.0, 0.04], 0.06);
        let (out, rep) = reorder_chain(&up).unwrap();
        assert_eq!(out, up);
        assert_eq!(rep.branch, ReorderBranch::NonNegative);
    }

    #[test]
    fn mixed_chain_becomes_nonpositive() {
        let l = fiber_chain(&[-0.04, 0.05, -0.02, 0.01, -0.03, 0.0], 0.06);
        let (out, _) = reorder_chain(&l).unwrap();
        let times = out.jump_times();
        assert!(times.iter().all(|&t| t <= 0.0 && t > -0.05 - 1e-12), "{times:?}");
        assert_eq!(out.offsets[0], l.offsets[0]);
        assert_eq!(out.offsets[6], l.offsets[6]);
        assert_eq!(chain_order_report(&out).sign, ChainSign::NonPositive);
        assert!(chain_order_report(&out).consistent());
    }

    #[test]
    fn floor_and_ceil_inverse_bracket() {
        let s = SkewProductSystem::new(
            [[2, 1], [1, 1]],
            vec![crate::models::FiberTerm { freq: [1, 0], amplitude: 0.1 }],
            0.2,
        )
        .unwrap();
        let c = CenterPseudoOrbit::from_jump_times(&s, TorusPoint::new(0.2, 0.7, 0.1), &[0.01, -0.02], 0.05).unwrap();
        let l = lift_chain(&s, &c).unwrap();
        for &y in &[-0.3, 0.0, 0.123, 0.9] {
            let f = l.floor_inverse(0, y).unwrap();
            assert!(l.chart_map(0, f) <= y && l.chart_map(0, f.next_up()) > y);
            let c = l.ceil_inverse(0, y).unwrap();
            assert!(l.chart_map(0, c) >= y && l.chart_map(0, c.next_down()) < y);
        }
    }

    #[test]
    fn json_round_trip() {
        let l = fiber_chain(&[-0.01, 0.02], 0.06);
        let back = LiftedChain::from_json(&l.to_json().unwrap()).unwrap();
        assert_eq!(back, l);
    }
}
