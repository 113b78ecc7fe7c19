use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::center_shadowing::EPSILON_0;

fn default_resolution() -> u32 {
    64
}

/// Where the pseudo-orbit from `x` should end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// An explicit point `y`.
    Point { y: [f64; 3] },
    /// Back to `x` itself.
    Periodic,
    /// A seeded random pseudo-orbit from `x`; `y` is wherever it ends.
    Walk { min_len: usize, max_len: usize },
}

/// One reproducible experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub preset: String,
    pub x: [f64; 3],
    pub target: Target,
    pub ks: Vec<u32>,
    /// Fixed `ε` for every `k`; `1/(2k)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Box grid used for the attainability check.
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    /// `ε` of the box graph; `1.1` box diameters when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    fn base(id: &str, preset: &str, x: [f64; 3], target: Target, ks: Vec<u32>, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            preset: preset.to_string(),
            x,
            target,
            ks,
            epsilon: None,
            resolution: default_resolution(),
            graph_epsilon: None,
            seed,
        }
    }

    pub fn walk(id: &str, preset: &str, x: [f64; 3], ks: Vec<u32>, seed: u64) -> Self {
        Self::base(id, preset, x, Target::Walk { min_len: 20, max_len: 60 }, ks, seed)
    }

    pub fn periodic(id: &str, preset: &str, x: [f64; 3], ks: Vec<u32>, seed: u64) -> Self {
        Self::base(id, preset, x, Target::Periodic, ks, seed)
    }

    pub fn point(id: &str, preset: &str, x: [f64; 3], y: [f64; 3], ks: Vec<u32>, seed: u64) -> Self {
        Self::base(id, preset, x, Target::Point { y }, ks, seed)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |reason: String| LabError::Scenario {
            id: self.id.clone(),
            reason,
        };
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(bad("k list must be non-empty and positive".into()));
        }
        if !self.x.iter().all(|c| c.is_finite()) {
            return Err(bad("x must be finite".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < EPSILON_0) {
                return Err(bad(format!("epsilon {e} must lie in (0, {EPSILON_0})")));
            }
        }
        match &self.target {
            Target::Point { y } if !y.iter().all(|c| c.is_finite()) => Err(bad("y must be finite".into())),
            Target::Walk { min_len, max_len } if *min_len == 0 || max_len < min_len => {
                Err(bad("walk lengths need 1 <= min_len <= max_len".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A TOML file holding `[[scenario]]` tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: Vec<Scenario>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Scenario {
            id: "<file>".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
