//! Scripted non-ego agents moving along polylines with piecewise-linear
//! speed profiles.

use urbandrive_core::prediction::{ObstacleKind, ObstacleState};

use crate::scenario::AgentScript;

#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    pub id: u32,
    pub kind: ObstacleKind,
    pub width: f64,
    pub length: f64,
    spawn_time: f64,
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    yaw: f64,
    /// `(t, v)` knots relative to spawn.
    profile: Vec<(f64, f64)>,
}

impl ScriptedAgent {
    pub fn new(script: &AgentScript) -> Self {
        let points: Vec<(f64, f64)> = script.path.iter().map(|p| (p[0], p[1])).collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let l = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cumulative.push(cumulative.last().unwrap() + l);
        }
        let mut profile: Vec<(f64, f64)> = script.speed_profile.iter().map(|p| (p[0], p[1])).collect();
        if profile.is_empty() {
            profile.push((0.0, 0.0));
        }
        Self {
            id: script.id,
            kind: script.kind,
            width: script.dims[0],
            length: script.dims[1],
            spawn_time: script.spawn_time,
            points,
            cumulative,
            yaw: script.yaw,
            profile,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.spawn_time
    }

    fn path_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Scheduled speed and its slope at local time `tau`.
    fn scheduled(&self, tau: f64) -> (f64, f64) {
        let p = &self.profile;
        if tau <= p[0].0 {
            return (p[0].1, 0.0);
        }
        for w in p.windows(2) {
            if tau <= w[1].0 {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                return (w[0].1 + slope * (tau - w[0].0), slope);
            }
        }
        (p[p.len() - 1].1, 0.0)
    }

    /// Distance along the path at local time `tau` (exact integral of the
    /// piecewise-linear speed).
    fn scheduled_distance(&self, tau: f64) -> f64 {
        let p = &self.profile;
        let mut dist = p[0].1 * tau.min(p[0].0);
        for w in p.windows(2) {
            if tau <= w[0].0 {
                break;
            }
            let end = tau.min(w[1].0);
            let (v_end, _) = self.scheduled(end);
            dist += 0.5 * (w[0].1 + v_end) * (end - w[0].0);
        }
        let last = p[p.len() - 1];
        if tau > last.0 {
            dist += last.1 * (tau - last.0);
        }
        dist
    }

    fn pose_at_distance(&self, s: f64) -> (f64, f64, f64) {
        if self.points.len() == 1 {
            return (self.points[0].0, self.points[0].1, self.yaw);
        }
        let s = s.clamp(0.0, self.path_length());
        let i = self
            .cumulative
            .partition_point(|c| *c <= s)
            .clamp(1, self.points.len() - 1)
            - 1;
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let w = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
        (a.0 + (b.0 - a.0) * w, a.1 + (b.1 - a.1) * w, (b.1 - a.1).atan2(b.0 - a.0))
    }

    /// True state at sim time `t`, or `None` before spawn. Agents stop at
    /// the end of their path.
    pub fn state_at(&self, t: f64) -> Option<ObstacleState> {
        if !self.is_active(t) {
            return None;
        }
        let tau = t - self.spawn_time;
        let s = self.scheduled_distance(tau);
        let (x, y, yaw) = self.pose_at_distance(s);
        let at_end = self.points.len() == 1 || s >= self.path_length();
        let (speed, accel) = if at_end { (0.0, 0.0) } else { self.scheduled(tau) };
        Some(ObstacleState {
            id: self.id,
            kind: self.kind,
            x,
            y,
            yaw,
            speed,
            accel,
            width: self.width,
            length: self.length,
        })
    }
}
