use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, SkewProductSystem, SystemConfig};

const BUILTIN: &str = include_str!("../../presets.toml");

/// One `[preset.<id>]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetEntry {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(default)]
    pub field_tilt: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PresetFile {
    #[serde(default)]
    pub preset: BTreeMap<String, PresetEntry>,
}

/// A validated preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub id: String,
    pub system: SkewProductSystem,
    pub field_tilt: f64,
}

/// Named presets, validated on load.
#[derive(Debug, Clone, Default)]
pub struct PresetLibrary {
    presets: BTreeMap<String, Preset>,
}

impl PresetLibrary {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin presets are valid")
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let file: PresetFile = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut presets = BTreeMap::new();
        for (id, entry) in file.preset {
            let system = SkewProductSystem::from_config(&entry.system).map_err(|e| {
                ModelError::Config(format!("preset `{id}`: {e}"))
            })?;
            if !entry.field_tilt.is_finite() {
                return Err(ModelError::Config(format!("preset `{id}`: field_tilt must be finite")));
            }
            presets.insert(
                id.clone(),
                Preset {
                    id,
                    system,
                    field_tilt: entry.field_tilt,
                },
            );
        }
        Ok(Self { presets })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Adds every preset of `other`, replacing same-named ones.
    pub fn merge(&mut self, other: PresetLibrary) {
        self.presets.extend(other.presets);
    }

    pub fn get(&self, id: &str) -> Result<&Preset, ModelError> {
        self.presets
            .get(id)
            .ok_or_else(|| ModelError::UnknownPreset(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.presets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Preset> {
        self.presets.values()
    }
}
