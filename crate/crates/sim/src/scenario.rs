//! Scenario files: the map (inline or by path), scripted agents, ego
//! settings and optional sensing overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use urbandrive_core::map::WorldMap;
use urbandrive_core::prediction::ObstacleKind;

use crate::config::SensingConfig;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSource {
    Inline(Box<WorldMap>),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    pub id: u32,
    pub kind: ObstacleKind,
    /// `[width, length]` in meters.
    pub dims: [f64; 2],
    pub path: Vec<[f64; 2]>,
    /// `[t, v]` pairs, `t` counted from spawn; linear in between, held
    /// after the last entry.
    #[serde(default)]
    pub speed_profile: Vec<[f64; 2]>,
    #[serde(default)]
    pub spawn_time: f64,
    /// Heading of single-point paths.
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoSpec {
    pub width: f64,
    pub length: f64,
    pub initial_speed: f64,
}

impl Default for EgoSpec {
    fn default() -> Self {
        Self {
            width: 2.0,
            length: 4.5,
            initial_speed: 0.0,
        }
    }
}

/// Stretch of the route, given by its end points, where the ego merges
/// between two vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeZone {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

fn default_time_limit() -> f64 {
    120.0
}

fn default_target_speed() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub map: MapSource,
    #[serde(default)]
    pub obstacles: Vec<AgentScript>,
    #[serde(default)]
    pub ego: EgoSpec,
    #[serde(default = "default_target_speed")]
    pub target_speed: f64,
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default)]
    pub sensing: Option<SensingConfig>,
    #[serde(default)]
    pub merge_zones: Vec<MergeZone>,
}

impl Scenario {
    /// Parses a scenario; a map given by path is resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path, origin: &str) -> Result<(Self, WorldMap), SimError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| SimError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let map = match &scenario.map {
            MapSource::Inline(m) => (**m).clone(),
            MapSource::Path(p) => {
                let full = base_dir.join(p);
                let text = read(&full)?;
                serde_json::from_str(&text).map_err(|e| SimError::Parse {
                    path: full.display().to_string(),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })?
            }
        };
        map.validate().map_err(|e| SimError::Scenario(format!("{origin}: map: {e}")))?;
        scenario.validate(origin)?;
        Ok((scenario, map))
    }

    pub fn load(path: &Path) -> Result<(Self, WorldMap), SimError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base, &path.display().to_string())
    }

    fn validate(&self, origin: &str) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Scenario(format!("{origin}: {m}")));
        if !(self.time_limit > 0.0) {
            return err("time_limit must be positive".into());
        }
        if !(self.target_speed >= 0.0) {
            return err("target_speed must be non-negative".into());
        }
        if !(self.ego.width > 0.0 && self.ego.length > 0.0 && self.ego.initial_speed >= 0.0) {
            return err("ego dims must be positive and initial_speed non-negative".into());
        }
        let mut ids = std::collections::HashSet::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            if !ids.insert(o.id) {
                return err(format!("obstacles[{i}]: duplicate id {}", o.id));
            }
            if !(o.dims[0] > 0.0 && o.dims[1] > 0.0) {
                return err(format!("obstacles[{i}].dims must be positive"));
            }
            if o.path.is_empty() {
                return err(format!("obstacles[{i}].path is empty"));
            }
            if o.speed_profile.iter().any(|p| !(p[1] >= 0.0 && p[0] >= 0.0)) {
                return err(format!("obstacles[{i}].speed_profile has a negative time or speed"));
            }
            if o.speed_profile.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return err(format!("obstacles[{i}].speed_profile times must increase"));
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
