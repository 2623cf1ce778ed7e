//! Run configuration. Every key has a default, so an empty file is valid.

use serde::{Deserialize, Serialize};
use std::path::Path;
use urbandrive_core::localization::FilterParams;
use urbandrive_core::planner::PlannerConfig;
use urbandrive_core::prediction::PredictionParams;

use crate::SimError;

/// Perception and sensor noise. Zero noise gives exact ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    /// Obstacles farther than this from the ego are not reported.
    pub radius: f64,
    /// Traffic controls farther ahead than this are not reported.
    pub detection_range: f64,
    pub position_sigma: f64,
    pub velocity_sigma: f64,
    /// Probability that an obstacle is missed on a tick.
    pub dropout: f64,
    pub gnss_sigma: f64,
    pub compass_sigma: f64,
    pub imu_sigma: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            radius: 50.0,
            detection_range: 40.0,
            position_sigma: 0.0,
            velocity_sigma: 0.0,
            dropout: 0.0,
            gnss_sigma: 0.0,
            compass_sigma: 0.0,
            imu_sigma: 0.0,
        }
    }
}

/// Per-event multipliers of the infraction penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfractionCoefficients {
    pub collision_pedestrian: f64,
    pub collision_vehicle: f64,
    pub collision_layout: f64,
    pub red_light: f64,
    pub route_deviation: f64,
    pub agent_blocked: f64,
}

impl Default for InfractionCoefficients {
    fn default() -> Self {
        Self {
            collision_pedestrian: 0.5,
            collision_vehicle: 0.6,
            collision_layout: 0.65,
            red_light: 0.7,
            route_deviation: 1.0,
            agent_blocked: 1.0,
        }
    }
}

/// Thresholds of the infraction detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfractionRules {
    pub deviation_distance: f64,
    pub blocked_speed: f64,
    pub blocked_time: f64,
    pub dedup_window: f64,
}

impl Default for InfractionRules {
    fn default() -> Self {
        Self {
            deviation_distance: 30.0,
            blocked_speed: 0.1,
            blocked_time: 180.0,
            dedup_window: 2.0,
        }
    }
}

/// Tunables of the mode selection ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Gap kept between the front bumper and a stop line.
    pub stop_line_margin: f64,
    /// Gap kept between the front bumper and a crossing pedestrian's path.
    pub pedestrian_margin: f64,
    /// Extra lateral clearance when deciding whether a pedestrian blocks the lane.
    pub pedestrian_corridor: f64,
    /// Deceleration used to decide whether a yellow light can still be obeyed.
    pub comfortable_decel: f64,
    /// Lead vehicles slower than this are treated as stopped.
    pub stopped_speed: f64,
    /// A stop sign is cleared after a standstill this close to its line.
    pub stop_sign_distance: f64,
    /// Planning restarts from the localization estimate when the previous
    /// plan drifts further than this from it.
    pub replan_tolerance: f64,
    /// Straight extension of the ego reference past the route end.
    pub reference_extension: f64,
    pub reference_spacing: f64,
    /// Distance to the goal at which the route counts as completed.
    pub goal_tolerance: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            stop_line_margin: 0.5,
            pedestrian_margin: 2.0,
            pedestrian_corridor: 0.5,
            comfortable_decel: 3.0,
            stopped_speed: 0.3,
            stop_sign_distance: 2.0,
            replan_tolerance: 0.5,
            reference_extension: 100.0,
            reference_spacing: 0.5,
            goal_tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulation step.
    pub dt: f64,
    /// Time between planning ticks; a multiple of `dt`.
    pub replan_interval: f64,
    pub planner: PlannerConfig,
    pub prediction: PredictionParams,
    pub filter: FilterParams,
    pub sensing: SensingConfig,
    pub coefficients: InfractionCoefficients,
    pub infractions: InfractionRules,
    pub behavior: BehaviorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            replan_interval: 0.1,
            planner: PlannerConfig::default(),
            prediction: PredictionParams::default(),
            filter: FilterParams::default(),
            sensing: SensingConfig::default(),
            coefficients: InfractionCoefficients::default(),
            infractions: InfractionRules::default(),
            behavior: BehaviorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Planning ticks happen every this many simulation steps.
    pub fn replan_every(&self) -> usize {
        ((self.replan_interval / self.dt).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        let ratio = self.replan_interval / self.dt;
        if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
            return Err(SimError::Config("replan_interval must be a positive multiple of dt".into()));
        }
        self.planner.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let s = &self.sensing;
        if !(0.0..=1.0).contains(&s.dropout) {
            return Err(SimError::Config("sensing.dropout must lie in [0, 1]".into()));
        }
        if [s.position_sigma, s.velocity_sigma, s.gnss_sigma, s.compass_sigma, s.imu_sigma]
            .iter()
            .any(|x| !(*x >= 0.0))
        {
            return Err(SimError::Config("noise sigmas must be non-negative".into()));
        }
        let c = &self.coefficients;
        if [
            c.collision_pedestrian,
            c.collision_vehicle,
            c.collision_layout,
            c.red_light,
            c.route_deviation,
            c.agent_blocked,
        ]
        .iter()
        .any(|x| !(0.0..=1.0).contains(x))
        {
            return Err(SimError::Config("infraction coefficients must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_override() {
        let cfg = RunConfig::from_toml("[planner.weights]\nk_jerk = 0.5\n[sensing]\nradius = 30.0\n").unwrap();
        assert_eq!(cfg.planner.weights.k_jerk, 0.5);
        assert_eq!(cfg.planner.weights.k_time, 0.1);
        assert_eq!(cfg.sensing.radius, 30.0);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("replan_interval = 0.15").is_err());
        assert!(RunConfig::from_toml("[planner.grid]\nt_min = 0.1").is_err());
        assert!(RunConfig::from_toml("[coefficients]\nred_light = 1.5").is_err());
    }
}
