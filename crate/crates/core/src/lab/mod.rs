//! Scenario runner tying the stages together.
//!
//! For each `k` a scenario picks `ε(k)`, builds a raw pseudo-orbit from `x`
//! to `y`, shadows it by a center pseudo-orbit, lifts and reorders it,
//! searches the closing parameter and checks the connection bounds. Every
//! random choice is drawn from a ChaCha stream keyed by the scenario seed
//! and `k`, so records are reproducible bit for bit.

mod output;
mod scenario;
pub mod witness;

pub use output::{
    convergence_study, emit_plot_data, read_points, study_rows, write_study_csv, PlotFiles, StudyRow,
};
pub use scenario::{Scenario, ScenarioFile, Target};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::center_lift::{lift_chain, reorder_chain, LiftError};
use crate::center_shadowing::{center_shadow, center_shadow_periodic, ShadowError, EPSILON_0};
use crate::chain_engine::{random_pseudo_orbit, ChainError, ChainGraph, PseudoOrbit};
use crate::closing_solver::{
    find_closing_tau, min_center_push, verify_connection, CenterVectorField, ClosingError, PerturbationFamily,
    PUSH_SAMPLES,
};
use crate::models::{ModelError, Preset, PresetLibrary, TorusPoint};

/// Halvings of the raw jump bound before a `k` is given up.
pub const MAX_DELTA_HALVINGS: usize = 8;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Preset(#[from] ModelError),
    #[error("invalid scenario `{id}`: {reason}")]
    Scenario { id: String, reason: String },
    #[error("chain graph: {0}")]
    Graph(#[from] ChainError),
    #[error("convergence study needs at least 3 values of k, got {0}")]
    TooFewK(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A failed check or stage: the stage, a message and, when the failure is a
/// violated inequality, both sides of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub k: Option<u32>,
    pub stage: String,
    pub message: String,
    pub inequality: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            pass: lhs < rhs,
        }
    }

    fn at_most(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            pass: lhs <= rhs,
        }
    }
}

/// Outcome of one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRecord {
    pub k: u32,
    pub epsilon: f64,
    /// Raw pseudo-orbit jump bound actually used.
    pub delta: f64,
    pub steps: usize,
    pub tau: f64,
    pub degenerate: bool,
    pub start_distance: f64,
    pub end_distance: f64,
    pub bound: f64,
    pub displacement_residual: f64,
    pub periodic_residual: Option<f64>,
    pub su_norm: f64,
    pub shadow_ratio: f64,
    pub max_jump_time: f64,
    pub reorder_steps: usize,
    pub checks: Vec<Check>,
}

impl KRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.start_distance.max(self.end_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub resolution: u32,
    pub epsilon: f64,
    /// Boxes on the shortest path from the box of `x` to the box of `y`.
    pub path_boxes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub x: TorusPoint,
    pub attainable: bool,
    pub graph: Option<GraphSummary>,
    /// Shadowing constant `L` of the center shadow.
    pub shadow_lipschitz: f64,
    /// Section constant `L_meas` used in the connection bounds.
    pub section_lipschitz: f64,
    pub results: Vec<KRecord>,
    pub failures: Vec<Failure>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.attainable && self.failures.is_empty() && self.results.iter().all(KRecord::passed)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn failure(k: Option<u32>, stage: &str, message: String, inequality: &str, sides: Option<(f64, f64)>) -> Failure {
    Failure {
        k,
        stage: stage.to_string(),
        message,
        inequality: inequality.to_string(),
        lhs: sides.map(|s| s.0),
        rhs: sides.map(|s| s.1),
    }
}

fn shadow_failure(k: u32, e: ShadowError) -> Failure {
    let (ineq, sides) = match &e {
        ShadowError::JumpTooLarge { jump, limit, .. } => ("jump < eps_0", Some((*jump, *limit))),
        ShadowError::Bound { distance, bound, .. } => ("d(x_i, w_i) < L eps", Some((*distance, *bound))),
        ShadowError::JumpTime { time, epsilon, .. } => ("|t_i| < L eps", Some((time.abs(), *epsilon))),
        ShadowError::OffLeaf { gap, .. } => ("base gap <= 1e-10", Some((*gap, 1e-10))),
        _ => ("stage completes", None),
    };
    failure(Some(k), "shadow", e.to_string(), ineq, sides)
}

fn lift_failure(stage: &str, k: u32, e: LiftError) -> Failure {
    let (ineq, sides) = match &e {
        LiftError::JumpTooLarge { time, epsilon, .. } => ("|t_i| < eps", Some((time.abs(), *epsilon))),
        LiftError::IterationCap { cap } => ("rewriting steps <= n^2", Some((*cap as f64 + 1.0, *cap as f64))),
        _ => ("stage completes", None),
    };
    failure(Some(k), stage, e.to_string(), ineq, sides)
}

fn closing_failure(stage: &str, k: u32, e: ClosingError) -> Failure {
    let (ineq, sides) = match &e {
        ClosingError::EpsilonTooLarge { epsilon, bound } => ("eps < min(1/k, Delta_1/k)", Some((*epsilon, *bound))),
        ClosingError::NoBracket { d1, .. } => ("D(1/k) > 0", Some((0.0, *d1))),
        ClosingError::Stagnation { residual, .. } => ("|D(tau)| < 1e-12", Some((*residual, 1e-12))),
        ClosingError::Replay { residual, .. } => ("replay residual < 1e-12", Some((*residual, 1e-12))),
        ClosingError::Bound { which, lhs, rhs } => (*which, Some((*lhs, *rhs))),
        ClosingError::NonPositivePush { delta, .. } => ("Delta_tau > 0", Some((0.0, *delta))),
        ClosingError::TauOutOfRange { tau, limit } => ("|tau| <= tau_max", Some((tau.abs(), *limit))),
        _ => ("stage completes", None),
    };
    failure(Some(k), stage, e.to_string(), ineq, sides)
}

/// `ε` for one `k`: the scenario rule, shrunk below `Δ_{1/k}` when needed.
pub fn epsilon_for(family: &PerturbationFamily, scenario: &Scenario, k: u32) -> Result<f64, ClosingError> {
    let base = scenario.epsilon.unwrap_or(1.0 / (2.0 * k as f64));
    let push = min_center_push(family, 1.0 / k as f64, PUSH_SAMPLES)?;
    Ok(if base >= push.delta { push.delta / 2.0 } else { base })
}

fn raw_orbit(
    preset: &Preset,
    scenario: &Scenario,
    x: &TorusPoint,
    rng: &mut ChaCha8Rng,
    delta: f64,
) -> Option<PseudoOrbit> {
    let system = &preset.system;
    match &scenario.target {
        Target::Point { y } => witness::connecting_orbit(system, x, &TorusPoint::from_array(*y), delta),
        Target::Periodic => witness::connecting_orbit(system, x, x, delta),
        Target::Walk { min_len, max_len } => {
            let len = rng.gen_range(*min_len..=(*max_len).max(*min_len));
            Some(random_pseudo_orbit(system, rng, *x, len.max(1), delta, 1.0))
        }
    }
}

fn run_k(
    preset: &Preset,
    family: &PerturbationFamily,
    scenario: &Scenario,
    x: &TorusPoint,
    k: u32,
    l_meas: f64,
) -> Result<KRecord, Failure> {
    let system = &preset.system;
    let epsilon = epsilon_for(family, scenario, k).map_err(|e| closing_failure("epsilon", k, e))?;
    if !(epsilon < EPSILON_0) {
        return Err(failure(
            Some(k),
            "epsilon",
            "epsilon rule out of range".into(),
            "eps < eps_0",
            Some((epsilon, EPSILON_0)),
        ));
    }
    let periodic = matches!(scenario.target, Target::Periodic);

    let mut delta = epsilon / 4.0;
    let mut attempt = 0;
    let (orbit, shadow) = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(((k as u64) << 8) | attempt as u64);
        let orbit = raw_orbit(preset, scenario, x, &mut rng, delta).ok_or_else(|| {
            failure(
                Some(k),
                "witness",
                format!("no pseudo-orbit with jumps below {delta:.3e} was found"),
                "steered fiber reaches target",
                None,
            )
        })?;
        let shadow = if periodic {
            center_shadow_periodic(system, &orbit)
        } else {
            center_shadow(system, &orbit)
        }
        .map_err(|e| shadow_failure(k, e))?;
        let within = shadow.chain.max_jump_time() < epsilon && shadow.measured_ratio * delta < epsilon;
        if within {
            break (orbit, shadow);
        }
        attempt += 1;
        if attempt > MAX_DELTA_HALVINGS {
            return Err(failure(
                Some(k),
                "shadow",
                "center chain does not fit the epsilon rule".into(),
                "max |t_i| < eps",
                Some((shadow.chain.max_jump_time(), epsilon)),
            ));
        }
        delta /= 2.0;
    };

    let lifted = lift_chain(system, &shadow.chain)
        .and_then(|l| l.with_epsilon(epsilon))
        .map_err(|e| lift_failure("lift", k, e))?;
    let (ordered, report) = reorder_chain(&lifted).map_err(|e| lift_failure("reorder", k, e))?;
    let result = find_closing_tau(family, &ordered, k).map_err(|e| closing_failure("close", k, e))?;
    let y = orbit.end();
    let conn = verify_connection(family, &result, &ordered, &orbit.start(), &y, l_meas)
        .map_err(|e| closing_failure("verify", k, e))?;

    let mut checks = vec![
        Check::below("d(x, p_k) < (L+1)/k", conn.start.distance, conn.start.bound),
        Check::below("d(y, f^n(p_k)) < (L+1)/k", conn.end.distance, conn.end.bound),
        Check::at_most("|tau_k| <= 1/k", result.tau.abs(), 1.0 / k as f64),
        Check::below("|D(tau_k)| < 1e-12", result.displacement_residual, 1e-12),
    ];
    if let Some(r) = result.periodic_residual {
        checks.push(Check::below("d(f^n(p_k), p_k) < 1e-10", r, 1e-10));
    }
    Ok(KRecord {
        k,
        epsilon,
        delta,
        steps: result.steps,
        tau: result.tau,
        degenerate: result.degenerate,
        start_distance: conn.start.distance,
        end_distance: conn.end.distance,
        bound: conn.start.bound,
        displacement_residual: result.displacement_residual,
        periodic_residual: result.periodic_residual,
        su_norm: result.su_norm,
        shadow_ratio: shadow.measured_ratio,
        max_jump_time: shadow.chain.max_jump_time(),
        reorder_steps: report.steps.len(),
        checks,
    })
}

/// Run the whole pipeline for every `k` of the scenario.
pub fn run_scenario(library: &PresetLibrary, scenario: &Scenario) -> Result<RunRecord, LabError> {
    scenario.validate()?;
    let preset = library.get(&scenario.preset)?;
    let family = PerturbationFamily::new(
        preset.system.clone(),
        CenterVectorField {
            tilt: preset.field_tilt,
        },
    );
    let x = TorusPoint::from_array(scenario.x);
    let section_lipschitz = family.section_lipschitz().map_err(|e| LabError::Scenario {
        id: scenario.id.clone(),
        reason: e.to_string(),
    })?;
    let shadow_lipschitz = crate::center_shadowing::shadow_constant(&preset.system);

    let mut record = RunRecord {
        scenario: scenario.clone(),
        x,
        attainable: true,
        graph: None,
        shadow_lipschitz,
        section_lipschitz,
        results: Vec::new(),
        failures: Vec::new(),
    };

    let y = match &scenario.target {
        Target::Point { y } => Some(TorusPoint::from_array(*y)),
        Target::Periodic => Some(x),
        Target::Walk { .. } => None,
    };
    if let Some(y) = y {
        let resolution = scenario.resolution;
        let grid = crate::chain_engine::BoxGrid::new(resolution)?;
        let eps = scenario.graph_epsilon.unwrap_or(1.1 * grid.diameter());
        let graph = ChainGraph::build(&preset.system, resolution, eps)?;
        let path = graph.box_path(graph.grid().locate(&x), graph.grid().locate(&y));
        record.graph = Some(GraphSummary {
            resolution,
            epsilon: eps,
            path_boxes: path.as_ref().map(Vec::len),
        });
        if path.is_none() {
            record.attainable = false;
            record.failures.push(failure(
                None,
                "chain-graph",
                "not chain attainable: no box path from x to y".into(),
                "box path exists",
                None,
            ));
            return Ok(record);
        }
    }

    let mut ks = scenario.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        match run_k(preset, &family, scenario, &x, k, section_lipschitz) {
            Ok(r) => {
                for c in r.checks.iter().filter(|c| !c.pass) {
                    record.failures.push(failure(
                        Some(k),
                        "verify",
                        format!("check `{}` failed", c.name),
                        &c.name,
                        Some((c.lhs, c.rhs)),
                    ));
                }
                record.results.push(r);
            }
            Err(f) => record.failures.push(f),
        }
    }
    Ok(record)
}

/// Scenarios run independently on the rayon pool; output order matches input.
pub fn run_batch(library: &PresetLibrary, scenarios: &[Scenario]) -> Vec<Result<RunRecord, LabError>> {
    scenarios.par_iter().map(|s| run_scenario(library, s)).collect()
}
