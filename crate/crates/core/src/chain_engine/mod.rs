//! Set-oriented chain recurrence on a uniform box grid of `T^3`.
//!
//! The transition graph is never materialized: successors of a box are
//! enumerated on demand from its stored image point, which keeps memory at
//! three floats per box even when every box has hundreds of successors.

mod export;
mod scc;

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{SkewProductSystem, TorusPoint};

pub use export::{read_class_csv, write_class_csv, ClassRow};
pub use scc::{tarjan, Components};

/// Largest supported subdivision per coordinate (2^24 boxes).
pub const MAX_RESOLUTION: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("resolution {0} must be a power of two between 1 and {MAX_RESOLUTION}")]
    Resolution(u32),
    #[error("epsilon {epsilon} must exceed the box diameter {diameter}")]
    EpsilonBelowDiameter { epsilon: f64, diameter: f64 },
    #[error("pseudo-orbit needs at least two points")]
    TooShort,
    #[error("jump {index} has size {jump:.3e}, not below {epsilon:.3e}")]
    JumpTooLarge { index: usize, jump: f64, epsilon: f64 },
}

/// Uniform subdivision of `T^3` into `resolution^3` half-open cubes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGrid {
    resolution: u32,
}

impl BoxGrid {
    pub fn new(resolution: u32) -> Result<Self, ChainError> {
        if resolution == 0 || !resolution.is_power_of_two() || resolution > MAX_RESOLUTION {
            return Err(ChainError::Resolution(resolution));
        }
        Ok(Self { resolution })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn box_count(&self) -> usize {
        (self.resolution as usize).pow(3)
    }

    pub fn side(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn diameter(&self) -> f64 {
        3f64.sqrt() * self.side()
    }

    pub fn index_of(&self, cell: [u32; 3]) -> u32 {
        let r = self.resolution;
        (cell[0] * r + cell[1]) * r + cell[2]
    }

    pub fn cell_of(&self, index: u32) -> [u32; 3] {
        let r = self.resolution;
        [index / (r * r), (index / r) % r, index % r]
    }

    pub fn locate(&self, p: &TorusPoint) -> u32 {
        let r = self.resolution;
        let c = |x: f64| ((x * r as f64) as u32).min(r - 1);
        self.index_of([c(p.base[0]), c(p.base[1]), c(p.fiber)])
    }

    pub fn corner(&self, index: u32) -> [f64; 3] {
        let c = self.cell_of(index);
        let h = self.side();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    pub fn center(&self, index: u32) -> TorusPoint {
        let c = self.corner(index);
        let h = 0.5 * self.side();
        TorusPoint::new(c[0] + h, c[1] + h, c[2] + h)
    }
}

/// A finite ε-pseudo-orbit `x_a, ..., x_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    points: Vec<TorusPoint>,
    epsilon: f64,
}

impl PseudoOrbit {
    /// Validates `d(x_{i+1}, f(x_i)) < epsilon` for every step.
    pub fn new(
        system: &SkewProductSystem,
        points: Vec<TorusPoint>,
        epsilon: f64,
    ) -> Result<Self, ChainError> {
        if points.len() < 2 {
            return Err(ChainError::TooShort);
        }
        for (i, w) in points.windows(2).enumerate() {
            let jump = system.apply(&w[0]).distance(&w[1]);
            if !(jump < epsilon) {
                return Err(ChainError::JumpTooLarge {
                    index: i + 1,
                    jump,
                    epsilon,
                });
            }
        }
        Ok(Self { points, epsilon })
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of steps (points minus one).
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn start(&self) -> TorusPoint {
        self.points[0]
    }

    pub fn end(&self) -> TorusPoint {
        *self.points.last().expect("non-empty")
    }

    /// Largest jump `d(x_{i+1}, f(x_i))`.
    pub fn max_jump(&self, system: &SkewProductSystem) -> f64 {
        self.points
            .windows(2)
            .map(|w| system.apply(&w[0]).distance(&w[1]))
            .fold(0.0, f64::max)
    }
}

/// Random ε-pseudo-orbit: each step lands on `f(x)` and, with probability
/// `jump_probability`, is then displaced by a uniform random vector of
/// length below `delta`.
pub fn random_pseudo_orbit<R: Rng + ?Sized>(
    system: &SkewProductSystem,
    rng: &mut R,
    start: TorusPoint,
    steps: usize,
    delta: f64,
    jump_probability: f64,
) -> PseudoOrbit {
    let mut points = Vec::with_capacity(steps + 1);
    points.push(start);
    let mut cur = start;
    for _ in 0..steps {
        let image = system.apply(&cur);
        cur = if rng.gen_bool(jump_probability.clamp(0.0, 1.0)) {
            let dir = loop {
                let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break [v[0] / n, v[1] / n, v[2] / n];
                }
            };
            let r = 0.999 * delta * rng.gen::<f64>();
            image.shifted([r * dir[0], r * dir[1], r * dir[2]])
        } else {
            image
        };
        points.push(cur);
    }
    PseudoOrbit::new(system, points, delta).expect("sampled jumps stay below delta")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeKind {
    /// Box-to-box over-approximation with inflated radius.
    Outer,
    /// Center-to-center ε-steps (genuine pseudo-orbit steps).
    Center,
}

/// Candidate cube of boxes around an image point.
struct Window {
    start: [i64; 3],
    count: [u32; 3],
}

fn axis_gap(kind: EdgeKind, res: f64, u: f64, c: i64) -> f64 {
    let mut d = u - (c as f64 + 0.5);
    if d > 0.5 * res {
        d -= res;
    } else if d < -0.5 * res {
        d += res;
    }
    match kind {
        EdgeKind::Outer => (d.abs() - 0.5).max(0.0),
        EdgeKind::Center => d.abs(),
    }
}

/// Successors of one box: cells of its window within the edge radius, in
/// window order. Planes and rows that are already too far are skipped.
struct Edges {
    kind: EdgeKind,
    window: Window,
    /// Image point in box units.
    u: [f64; 3],
    res: u32,
    /// Squared radius in box units.
    r2: f64,
    i: u32,
    j: u32,
    k: u32,
    gi: Option<f64>,
    gij: Option<f64>,
}

impl Edges {
    fn gap2(&self, a: usize, idx: u32) -> f64 {
        axis_gap(self.kind, self.res as f64, self.u[a], self.window.start[a] + idx as i64).powi(2)
    }

    fn cell(&self, a: usize, idx: u32) -> u32 {
        // windows start less than one period below zero
        let r = self.res as i64;
        let c = self.window.start[a] + idx as i64;
        (if c < 0 {
            c + r
        } else if c >= r {
            c - r
        } else {
            c
        }) as u32
    }
}

impl Iterator for Edges {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        let [n0, n1, n2] = self.window.count;
        while self.i < n0 {
            let gi = match self.gi {
                Some(g) => g,
                None => {
                    let g = self.gap2(0, self.i);
                    self.gi = Some(g);
                    g
                }
            };
            if gi < self.r2 {
                while self.j < n1 {
                    let gij = match self.gij {
                        Some(g) => g,
                        None => {
                            let g = gi + self.gap2(1, self.j);
                            self.gij = Some(g);
                            g
                        }
                    };
                    if gij < self.r2 {
                        while self.k < n2 {
                            let k = self.k;
                            self.k += 1;
                            if gij + self.gap2(2, k) < self.r2 {
                                let r = self.res;
                                let c = [self.cell(0, self.i), self.cell(1, self.j), self.cell(2, k)];
                                return Some((c[0] * r + c[1]) * r + c[2]);
                            }
                        }
                    }
                    self.k = 0;
                    self.j += 1;
                    self.gij = None;
                }
            }
            self.j = 0;
            self.k = 0;
            self.i += 1;
            self.gi = None;
            self.gij = None;
        }
        None
    }
}

/// Box transition graph with ε-inflated edges.
///
/// `B -> B'` iff `dist(f(center B), B') < ε + ‖Df‖ diam(B) / 2`, which
/// contains every pair `(B, B')` joined by an ε-step from a point of `B`.
#[derive(Debug, Clone)]
pub struct ChainGraph {
    system: SkewProductSystem,
    grid: BoxGrid,
    epsilon: f64,
    inflation: f64,
    images: Vec<[f64; 3]>,
}

/// Box cover of one chain class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainClass {
    pub id: usize,
    pub boxes: Vec<u32>,
}

impl ChainGraph {
    pub fn build(system: &SkewProductSystem, resolution: u32, epsilon: f64) -> Result<Self, ChainError> {
        let grid = BoxGrid::new(resolution)?;
        let diameter = grid.diameter();
        if !(epsilon > diameter) {
            return Err(ChainError::EpsilonBelowDiameter { epsilon, diameter });
        }
        let inflation = epsilon + system.differential_norm_bound() * diameter / 2.0;
        let images = (0..grid.box_count() as u32)
            .into_par_iter()
            .map(|b| system.apply(&grid.center(b)).to_array())
            .collect();
        Ok(Self {
            system: system.clone(),
            grid,
            epsilon,
            inflation,
            images,
        })
    }

    /// Same system and ε on the doubled grid.
    pub fn refine(&self) -> Result<Self, ChainError> {
        Self::build(&self.system, self.grid.resolution * 2, self.epsilon)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn system(&self) -> &SkewProductSystem {
        &self.system
    }

    /// Jump bound satisfied by pseudo-orbits extracted from box paths.
    pub fn witness_bound(&self) -> f64 {
        self.epsilon + (self.system.differential_norm_bound() + 1.0) * self.grid.diameter()
    }

    fn window(&self, image: &[f64; 3], radius: f64) -> Window {
        let r = self.grid.resolution as i64;
        let rf = r as f64;
        let mut start = [0i64; 3];
        let mut count = [0u32; 3];
        for a in 0..3 {
            let lo = ((image[a] - radius) * rf).floor() as i64;
            let hi = ((image[a] + radius) * rf).floor() as i64;
            if hi - lo + 1 >= r {
                start[a] = 0;
                count[a] = r as u32;
            } else {
                start[a] = lo;
                count[a] = (hi - lo + 1) as u32;
            }
        }
        Window { start, count }
    }

    /// Per-axis gap, in box units, between the scaled coordinate `u` and
    /// cell `c` (unwrapped, within one period of `u`).
    fn axis_gap(&self, kind: EdgeKind, u: f64, c: i64) -> f64 {
        axis_gap(kind, self.grid.resolution as f64, u, c)
    }

    fn scaled(&self, image: &[f64; 3]) -> [f64; 3] {
        let r = self.grid.resolution as f64;
        image.map(|x| x * r)
    }

    fn edges(&self, kind: EdgeKind, node: u32) -> Edges {
        let image = &self.images[node as usize];
        let radius = match kind {
            EdgeKind::Outer => self.inflation,
            EdgeKind::Center => self.epsilon,
        };
        let res = self.grid.resolution;
        Edges {
            kind,
            window: self.window(image, radius),
            u: self.scaled(image),
            res,
            r2: (radius * res as f64).powi(2),
            i: 0,
            j: 0,
            k: 0,
            gi: None,
            gij: None,
        }
    }

    /// Successor boxes of `node`.
    pub fn successors(&self, node: u32) -> Vec<u32> {
        self.edges(EdgeKind::Outer, node).collect()
    }

    pub fn has_edge(&self, from: u32, to: u32) -> bool {
        let u = self.scaled(&self.images[from as usize]);
        let cell = self.grid.cell_of(to);
        let res = self.grid.resolution as f64;
        let d2: f64 = (0..3)
            .map(|a| self.axis_gap(EdgeKind::Outer, u[a], cell[a] as i64).powi(2))
            .sum();
        d2 < (self.inflation * res).powi(2)
    }

    /// Strongly connected components of the box graph.
    pub fn components(&self) -> Components {
        tarjan(self.grid.box_count(), |v| self.edges(EdgeKind::Outer, v))
    }

    /// Components of the center-to-center ε-step graph. Its cycles are
    /// genuine periodic ε-pseudo-orbits through box centers.
    pub fn center_components(&self) -> Components {
        tarjan(self.grid.box_count(), |v| self.edges(EdgeKind::Center, v))
    }

    /// Every recurrent component of the box graph, without certification.
    pub fn recurrent_components(&self) -> Vec<ChainClass> {
        let comps = self.components();
        comps
            .members()
            .into_iter()
            .enumerate()
            .filter(|(c, _)| comps.recurrent[*c])
            .enumerate()
            .map(|(id, (_, boxes))| ChainClass { id, boxes })
            .collect()
    }

    /// Chain-class covers: recurrent components of the box graph that contain
    /// a cycle of genuine center-to-center ε-steps.
    ///
    /// Components sit in reverse topological order, so class 0 is a sink.
    pub fn chain_recurrent_classes(&self) -> Vec<ChainClass> {
        let outer = self.components();
        let center = self.center_components();
        let mut certified = vec![false; outer.count];
        for (node, &c) in center.component.iter().enumerate() {
            if center.recurrent[c as usize] {
                certified[outer.component[node] as usize] = true;
            }
        }
        outer
            .members()
            .into_iter()
            .enumerate()
            .filter(|(c, _)| outer.recurrent[*c] && certified[*c])
            .enumerate()
            .map(|(id, (_, boxes))| ChainClass { id, boxes })
            .collect()
    }

    /// Shortest box path of at least one edge from `from` to `to`.
    pub fn box_path(&self, from: u32, to: u32) -> Option<Vec<u32>> {
        let n = self.grid.box_count();
        let mut parent = vec![u32::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for w in self.successors(from) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                parent[w as usize] = from;
                queue.push_back(w);
            }
        }
        while let Some(v) = queue.pop_front() {
            if v == to {
                let mut path = vec![to];
                let mut cur = to;
                loop {
                    let p = parent[cur as usize];
                    path.push(p);
                    if p == from && path.len() >= 2 {
                        break;
                    }
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for w in self.edges(EdgeKind::Outer, v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    parent[w as usize] = v;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// A pseudo-orbit from `x` to `y` through box centers, when the graph
    /// has a path from the box of `x` to the box of `y`.
    ///
    /// The jump bound is [`ChainGraph::witness_bound`].
    pub fn chain_attainable(&self, x: &TorusPoint, y: &TorusPoint) -> Option<PseudoOrbit> {
        let path = self.box_path(self.grid.locate(x), self.grid.locate(y))?;
        let mut points = Vec::with_capacity(path.len());
        points.push(*x);
        for &b in &path[1..path.len() - 1] {
            points.push(self.grid.center(b));
        }
        points.push(*y);
        let orbit = PseudoOrbit::new(&self.system, points, self.witness_bound())
            .expect("box path witnesses respect the inflated jump bound");
        Some(orbit)
    }
}
