//! Road map: directed centerline roads, traffic controls and a route.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

pub type RoadId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("map has no roads")]
    Empty,
    #[error("duplicate road id {0}")]
    DuplicateRoad(RoadId),
    #[error("road {road} has fewer than two waypoints")]
    ShortRoad { road: RoadId },
    #[error("road {road} lists unknown successor {successor}")]
    UnknownSuccessor { road: RoadId, successor: RoadId },
    #[error("traffic control {control} references unknown road {road}")]
    UnknownControlRoad { control: u32, road: RoadId },
    #[error("traffic control {control}: stop line s = {s} outside road of length {length}")]
    StopLine { control: u32, s: f64, length: f64 },
    #[error("traffic light {0} has a non-positive phase duration")]
    Phases(u32),
    #[error("route references unknown road {0}")]
    UnknownRouteRoad(RoadId),
    #[error("route road {from} is not followed by one of its successors ({to})")]
    DisconnectedRoute { from: RoadId, to: RoadId },
    #[error("route is empty")]
    EmptyRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    pub id: RoadId,
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default)]
    pub successors: Vec<RoadId>,
}

fn default_lane_width() -> f64 {
    3.5
}

impl Road {
    /// Polyline length of the waypoints.
    pub fn polyline_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Light,
    StopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalState {
    Green,
    Yellow,
    Red,
    StopSign,
}

/// Light cycle durations in seconds; `offset` shifts the clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phases {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Phases {
    pub fn cycle(&self) -> f64 {
        self.green + self.yellow + self.red
    }

    /// Signal at sim time `t`: green, then yellow, then red.
    pub fn state_at(&self, t: f64) -> SignalState {
        let tau = (t + self.offset).rem_euclid(self.cycle());
        if tau < self.green {
            SignalState::Green
        } else if tau < self.green + self.yellow {
            SignalState::Yellow
        } else {
            SignalState::Red
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficControl {
    pub id: u32,
    pub kind: ControlKind,
    pub road_id: RoadId,
    /// Stop line arc length along the road.
    pub s: f64,
    #[serde(default)]
    pub phases: Option<Phases>,
}

impl TrafficControl {
    pub fn state_at(&self, t: f64) -> SignalState {
        match (self.kind, self.phases) {
            (ControlKind::StopSign, _) => SignalState::StopSign,
            (ControlKind::Light, Some(p)) => p.state_at(t),
            (ControlKind::Light, None) => SignalState::Green,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub roads: Vec<RoadId>,
    pub start: StartPose,
    pub goal: GoalPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldMap {
    pub roads: Vec<Road>,
    #[serde(default)]
    pub traffic_controls: Vec<TrafficControl>,
    pub route: Route,
}

impl WorldMap {
    pub fn road(&self, id: RoadId) -> Option<&Road> {
        self.roads.iter().find(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.roads.is_empty() {
            return Err(MapError::Empty);
        }
        let mut ids = HashSet::new();
        for r in &self.roads {
            if !ids.insert(r.id) {
                return Err(MapError::DuplicateRoad(r.id));
            }
            if r.waypoints.len() < 2 {
                return Err(MapError::ShortRoad { road: r.id });
            }
        }
        for r in &self.roads {
            if let Some(&successor) = r.successors.iter().find(|s| !ids.contains(s)) {
                return Err(MapError::UnknownSuccessor { road: r.id, successor });
            }
        }
        for c in &self.traffic_controls {
            let road = self.road(c.road_id).ok_or(MapError::UnknownControlRoad {
                control: c.id,
                road: c.road_id,
            })?;
            let length = road.polyline_length();
            if !(c.s >= 0.0 && c.s <= length) {
                return Err(MapError::StopLine {
                    control: c.id,
                    s: c.s,
                    length,
                });
            }
            if let (ControlKind::Light, Some(p)) = (c.kind, c.phases) {
                if !(p.green > 0.0 && p.yellow > 0.0 && p.red > 0.0) {
                    return Err(MapError::Phases(c.id));
                }
            }
        }
        if self.route.roads.is_empty() {
            return Err(MapError::EmptyRoute);
        }
        for id in &self.route.roads {
            if !ids.contains(id) {
                return Err(MapError::UnknownRouteRoad(*id));
            }
        }
        for w in self.route.roads.windows(2) {
            let from = self.road(w[0]).expect("validated");
            if !from.successors.contains(&w[1]) {
                return Err(MapError::DisconnectedRoute { from: w[0], to: w[1] });
            }
        }
        Ok(())
    }

    /// Route centerline: waypoints of each route road in order, with
    /// repeated junction points dropped.
    pub fn route_waypoints(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for id in &self.route.roads {
            let Some(road) = self.road(*id) else { continue };
            for p in &road.waypoints {
                let q = (p[0], p[1]);
                if out
                    .last()
                    .is_some_and(|l| (l.0 - q.0).hypot(l.1 - q.1) < 1e-6)
                {
                    continue;
                }
                out.push(q);
            }
        }
        out
    }
}
