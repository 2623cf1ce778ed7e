//! Infraction events: exact footprint collisions, red-light crossings,
//! route deviation and blocking.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::{InfractionCoefficients, InfractionRules};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionLayout,
    RedLight,
    RouteDeviation,
    AgentBlocked,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 6] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionLayout,
        InfractionKind::RedLight,
        InfractionKind::RouteDeviation,
        InfractionKind::AgentBlocked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InfractionKind::CollisionPedestrian => "collision_pedestrian",
            InfractionKind::CollisionVehicle => "collision_vehicle",
            InfractionKind::CollisionLayout => "collision_layout",
            InfractionKind::RedLight => "red_light",
            InfractionKind::RouteDeviation => "route_deviation",
            InfractionKind::AgentBlocked => "agent_blocked",
        }
    }

    pub fn coefficient(self, c: &InfractionCoefficients) -> f64 {
        match self {
            InfractionKind::CollisionPedestrian => c.collision_pedestrian,
            InfractionKind::CollisionVehicle => c.collision_vehicle,
            InfractionKind::CollisionLayout => c.collision_layout,
            InfractionKind::RedLight => c.red_light,
            InfractionKind::RouteDeviation => c.route_deviation,
            InfractionKind::AgentBlocked => c.agent_blocked,
        }
    }

    pub fn is_collision(self) -> bool {
        matches!(
            self,
            InfractionKind::CollisionPedestrian | InfractionKind::CollisionVehicle | InfractionKind::CollisionLayout
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    #[serde(rename = "type")]
    pub kind: InfractionKind,
    pub time: f64,
    pub position: [f64; 2],
    /// Obstacle or traffic-control id involved, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterpart: Option<u32>,
}

/// Oriented rectangle footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub width: f64,
    pub length: f64,
}

impl Footprint {
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (c, s) = (self.yaw.cos(), self.yaw.sin());
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(bx, by)| (self.x + bx * c - by * s, self.y + bx * s + by * c))
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (c, s) = (self.yaw.cos(), self.yaw.sin());
        [(c, s), (-s, c)]
    }
}

/// Separating-axis overlap test; touching edges do not count.
pub fn footprints_overlap(a: &Footprint, b: &Footprint) -> bool {
    let (ca, cb) = (a.corners(), b.corners());
    for axis in a.axes().into_iter().chain(b.axes()) {
        let project = |pts: &[(f64, f64); 4]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p.0 * axis.0 + p.1 * axis.1;
                (lo.min(d), hi.max(d))
            })
        };
        let (a_lo, a_hi) = project(&ca);
        let (b_lo, b_hi) = project(&cb);
        if a_hi <= b_lo || b_hi <= a_lo {
            return false;
        }
    }
    true
}

/// Collects events and suppresses repeats of the same
/// `(kind, counterpart)` inside the dedup window.
#[derive(Debug, Clone)]
pub struct InfractionLog {
    rules: InfractionRules,
    events: Vec<InfractionEvent>,
    last_seen: BTreeMap<(InfractionKind, Option<u32>), f64>,
    slow_since: Option<f64>,
}

impl InfractionLog {
    pub fn new(rules: InfractionRules) -> Self {
        Self {
            rules,
            events: Vec::new(),
            last_seen: BTreeMap::new(),
            slow_since: None,
        }
    }

    pub fn events(&self) -> &[InfractionEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<InfractionEvent> {
        self.events
    }

    /// Records the event unless a matching one was recorded within the
    /// window. Returns whether it was recorded.
    pub fn record(&mut self, event: InfractionEvent) -> bool {
        let key = (event.kind, event.counterpart);
        if let Some(&last) = self.last_seen.get(&key) {
            if event.time - last < self.rules.dedup_window {
                self.last_seen.insert(key, event.time);
                return false;
            }
        }
        self.last_seen.insert(key, event.time);
        self.events.push(event);
        true
    }

    /// Tracks how long the ego has been below the blocked speed; returns
    /// true once that time reaches the limit.
    pub fn update_blocked(&mut self, t: f64, speed: f64) -> bool {
        if speed >= self.rules.blocked_speed {
            self.slow_since = None;
            return false;
        }
        let since = *self.slow_since.get_or_insert(t);
        t - since >= self.rules.blocked_time - 1e-9
    }

    pub fn deviated(&self, lateral_offset: f64) -> bool {
        lateral_offset.abs() > self.rules.deviation_distance
    }
}

/// True when the front bumper moved from before `line_s` to at or past it.
pub fn crossed_line(prev_front: f64, front: f64, line_s: f64) -> bool {
    prev_front < line_s && front >= line_s
}
