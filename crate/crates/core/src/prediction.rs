//! Map-based motion prediction: a dense road graph with a spatial index,
//! breadth-first path extraction and pure-pursuit rollouts along each path.

use crate::collision::{BodyShape, Pose, TimedObstacle};
use crate::frenet::{GeometryError, ReferenceLine};
use crate::map::{MapError, RoadId, WorldMap};
use crate::scalar::wrap_angle;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

pub type NodeId = usize;
pub type ObstacleId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("road {road}: {source}")]
    Road { road: RoadId, source: GeometryError },
    #[error("sampling distance must be positive")]
    Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub road: RoadId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: NodeId,
    pub length: f64,
}

type IndexedPoint = GeomWithData<[f64; 2], NodeId>;

/// Directed graph of densely resampled road centerlines.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Vec<Edge>>,
    spacing: f64,
    index: RTree<IndexedPoint>,
}

impl RoadGraph {
    /// Resamples every road at `ds` and links road ends to their successors.
    /// A successor whose first node coincides with the junction point is
    /// entered at its second node so no zero-length edge appears.
    pub fn build(map: &WorldMap, ds: f64) -> Result<Self, GraphError> {
        if !(ds > 0.0 && ds.is_finite()) {
            return Err(GraphError::Spacing);
        }
        if map.roads.is_empty() {
            return Err(MapError::Empty.into());
        }
        let mut nodes = Vec::new();
        let mut edges: Vec<Vec<Edge>> = Vec::new();
        let mut ranges: HashMap<RoadId, (NodeId, NodeId)> = HashMap::new();
        for road in &map.roads {
            let pts: Vec<(f64, f64)> = road.waypoints.iter().map(|p| (p[0], p[1])).collect();
            let line = ReferenceLine::build(&pts, ds).map_err(|source| GraphError::Road { road: road.id, source })?;
            let first = nodes.len();
            for (k, s) in line.samples().iter().enumerate() {
                nodes.push(GraphNode {
                    id: first + k,
                    x: s.x,
                    y: s.y,
                    heading: s.heading,
                    road: road.id,
                });
                edges.push(Vec::new());
            }
            let last = nodes.len() - 1;
            for id in first..last {
                edges[id].push(Edge {
                    to: id + 1,
                    length: line.spacing(),
                });
            }
            ranges.insert(road.id, (first, last));
        }
        for road in &map.roads {
            let (_, tail) = ranges[&road.id];
            for succ in &road.successors {
                let Some(&(head, head_last)) = ranges.get(succ) else {
                    return Err(MapError::UnknownSuccessor {
                        road: road.id,
                        successor: *succ,
                    }
                    .into());
                };
                let dist = |a: NodeId, b: NodeId| (nodes[a].x - nodes[b].x).hypot(nodes[a].y - nodes[b].y);
                let entry = if dist(tail, head) < 0.5 * ds && head < head_last {
                    head + 1
                } else {
                    head
                };
                edges[tail].push(Edge {
                    to: entry,
                    length: dist(tail, entry),
                });
            }
        }
        let index = RTree::bulk_load(
            nodes
                .iter()
                .map(|n| IndexedPoint::new([n.x, n.y], n.id))
                .collect(),
        );
        Ok(Self {
            nodes,
            edges,
            spacing: ds,
            index,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id]
    }

    pub fn out_edges(&self, id: NodeId) -> &[Edge] {
        &self.edges[id]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Exact nearest node; equidistant nodes resolve to the lowest id.
    pub fn nearest(&self, x: f64, y: f64) -> Option<NodeId> {
        let best = self.index.nearest_neighbor(&[x, y])?;
        let d2 = sq_dist(best.geom(), x, y);
        let radius = d2 * (1.0 + 1e-9) + 1e-12;
        self.index
            .locate_within_distance([x, y], radius)
            .map(|p| (sq_dist(p.geom(), x, y), p.data))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// Nearest node whose heading is within 90 degrees of `yaw`, searched
    /// out to `max_dist`.
    pub fn nearest_aligned(&self, x: f64, y: f64, yaw: f64, max_dist: f64) -> Option<NodeId> {
        let limit = max_dist * max_dist;
        let mut best: Option<(f64, NodeId)> = None;
        for p in self.index.nearest_neighbor_iter(&[x, y]) {
            let d2 = sq_dist(p.geom(), x, y);
            if d2 > limit || best.is_some_and(|(bd, _)| d2 > bd) {
                break;
            }
            let n = &self.nodes[p.data];
            if wrap_angle(n.heading - yaw).abs() >= std::f64::consts::FRAC_PI_2 {
                continue;
            }
            if best.is_none_or(|(bd, bid)| d2 < bd || (d2 == bd && p.data < bid)) {
                best = Some((d2, p.data));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Simple directed paths from `start` whose length is closest to
    /// `desired` within `tol`, in breadth-first order. A path keeps growing
    /// while another edge brings it closer to `desired`. Paths that hit a
    /// dead end are kept at their shorter length.
    pub fn extract_paths(&self, start: NodeId, desired: f64, tol: f64) -> Vec<GraphPath> {
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        queue.push_back(GraphPath {
            nodes: vec![start],
            length: 0.0,
            truncated: false,
        });
        while let Some(path) = queue.pop_front() {
            let tip = *path.nodes.last().expect("non-empty");
            let open: Vec<&Edge> = self.edges[tip]
                .iter()
                .filter(|e| !path.nodes.contains(&e.to))
                .collect();
            if open.is_empty() {
                out.push(GraphPath {
                    truncated: path.length < desired - tol,
                    ..path
                });
                continue;
            }
            let gap = (path.length - desired).abs();
            let mut stop_here = false;
            for e in open {
                let length = path.length + e.length;
                if (length - desired).abs() < gap {
                    let mut nodes = path.nodes.clone();
                    nodes.push(e.to);
                    queue.push_back(GraphPath {
                        nodes,
                        length,
                        truncated: false,
                    });
                } else {
                    stop_here = true;
                }
            }
            if stop_here && gap <= tol {
                out.push(path);
            }
        }
        out
    }

    fn polyline(&self, path: &GraphPath) -> Vec<(f64, f64)> {
        path.nodes.iter().map(|&i| (self.nodes[i].x, self.nodes[i].y)).collect()
    }
}

fn sq_dist(p: &[f64; 2], x: f64, y: f64) -> f64 {
    (p[0] - x) * (p[0] - x) + (p[1] - y) * (p[1] - y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    pub nodes: Vec<NodeId>,
    pub length: f64,
    /// Ended at a dead end short of the desired length.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Vehicle,
    Pedestrian,
    /// Static road furniture such as barriers.
    Layout,
}

/// Observed state of a moving obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleState {
    pub id: ObstacleId,
    pub kind: ObstacleKind,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub accel: f64,
    pub width: f64,
    pub length: f64,
}

impl ObstacleState {
    /// Vehicles and layout use their rectangle. Pedestrians get one disk
    /// circumscribing their footprint.
    pub fn shape(&self) -> BodyShape<f64> {
        match self.kind {
            ObstacleKind::Pedestrian => BodyShape::Disk {
                radius: 0.5 * self.width.hypot(self.length),
            },
            _ => BodyShape::Rectangle {
                width: self.width,
                length: self.length,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub obstacle: ObstacleId,
    /// Index of the followed path among the obstacle's paths; `None` for
    /// straight-line predictions.
    pub path: Option<usize>,
    pub shape: BodyShape<f64>,
    pub dt: f64,
    pub points: Vec<PredictedPoint>,
}

impl PredictedTrajectory {
    /// Interpolated point at `t`, clamped to the predicted range.
    pub fn at(&self, t: f64) -> PredictedPoint {
        let n = self.points.len();
        if n == 1 || t <= self.points[0].t {
            return self.points[0];
        }
        let last = self.points[n - 1];
        if t >= last.t {
            return last;
        }
        let k = (((t - self.points[0].t) / self.dt).floor() as usize).min(n - 2);
        let (p, q) = (self.points[k], self.points[k + 1]);
        let w = ((t - p.t) / (q.t - p.t)).clamp(0.0, 1.0);
        PredictedPoint {
            t,
            x: p.x + (q.x - p.x) * w,
            y: p.y + (q.y - p.y) * w,
            theta: wrap_angle(p.theta + wrap_angle(q.theta - p.theta) * w),
            v: p.v + (q.v - p.v) * w,
        }
    }
}

impl TimedObstacle<f64> for PredictedTrajectory {
    fn shape(&self) -> BodyShape<f64> {
        self.shape
    }

    fn pose_at(&self, t: f64) -> Pose<f64> {
        let p = self.at(t);
        Pose {
            x: p.x,
            y: p.y,
            theta: p.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionParams {
    /// Graph sampling distance.
    pub ds: f64,
    /// Path length tolerance; non-positive means `ds`.
    pub tol: f64,
    pub horizon: f64,
    pub dt: f64,
    pub speed_cap: f64,
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    /// Obstacles farther than this from the graph get a straight prediction.
    pub max_graph_distance: f64,
}

impl Default for PredictionParams {
    fn default() -> Self {
        Self {
            ds: 1.0,
            tol: 0.0,
            horizon: 5.0,
            dt: 0.1,
            speed_cap: 20.0,
            lookahead_gain: 0.5,
            lookahead_min: 3.0,
            lookahead_max: 15.0,
            max_graph_distance: 10.0,
        }
    }
}

impl PredictionParams {
    pub fn tolerance(&self) -> f64 {
        if self.tol > 0.0 {
            self.tol
        } else {
            self.ds
        }
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        (self.lookahead_gain * speed).clamp(self.lookahead_min, self.lookahead_max)
    }
}

/// Distance covered by `t` under `v(t) = clamp(v0 + a t, 0, cap)`.
pub fn clamped_distance(v0: f64, a: f64, cap: f64, t: f64) -> f64 {
    let v0 = v0.clamp(0.0, cap);
    if a == 0.0 {
        return v0 * t;
    }
    // Time at which the speed hits its bound.
    let bound = if a > 0.0 { cap } else { 0.0 };
    let t_hit = (bound - v0) / a;
    if t <= t_hit {
        v0 * t + 0.5 * a * t * t
    } else {
        v0 * t_hit + 0.5 * a * t_hit * t_hit + bound * (t - t_hit)
    }
}

fn clamped_speed(v0: f64, a: f64, cap: f64, t: f64) -> f64 {
    (v0 + a * t).clamp(0.0, cap)
}

/// Polyline with arc-length lookup and a straight virtual extension past
/// its last point.
struct PathLine {
    pts: Vec<(f64, f64)>,
    cum: Vec<f64>,
    end_dir: (f64, f64),
}

impl PathLine {
    fn new(pts: Vec<(f64, f64)>, end_heading: f64) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let l = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cum.push(cum.last().unwrap() + l);
        }
        Self {
            pts,
            cum,
            end_dir: (end_heading.cos(), end_heading.sin()),
        }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let len = self.length();
        if s >= len {
            let last = *self.pts.last().unwrap();
            return (last.0 + self.end_dir.0 * (s - len), last.1 + self.end_dir.1 * (s - len));
        }
        let s = s.max(0.0);
        let i = self.cum.partition_point(|c| *c <= s).clamp(1, self.pts.len() - 1) - 1;
        let seg = self.cum[i + 1] - self.cum[i];
        let w = if seg > 0.0 { (s - self.cum[i]) / seg } else { 0.0 };
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        (a.0 + (b.0 - a.0) * w, a.1 + (b.1 - a.1) * w)
    }

    /// Arc length of the closest point, searching segments from `from_seg`
    /// on. Returns the arc length and the segment it lies on.
    fn project(&self, x: f64, y: f64, from_seg: usize) -> (f64, usize) {
        if self.pts.len() < 2 {
            let p = self.pts[0];
            let along = (x - p.0) * self.end_dir.0 + (y - p.1) * self.end_dir.1;
            return (along.max(0.0), 0);
        }
        let mut best = (f64::INFINITY, 0.0, from_seg);
        for i in from_seg..self.pts.len() - 1 {
            let (a, b) = (self.pts[i], self.pts[i + 1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let l2 = dx * dx + dy * dy;
            let u = if l2 > 0.0 {
                (((x - a.0) * dx + (y - a.1) * dy) / l2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (a.0 + dx * u, a.1 + dy * u);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best.0 {
                best = (d2, self.cum[i] + u * l2.sqrt(), i);
            }
        }
        let len = self.length();
        if best.1 >= len - 1e-9 {
            let last = *self.pts.last().unwrap();
            let along = (x - last.0) * self.end_dir.0 + (y - last.1) * self.end_dir.1;
            return (len + along.max(0.0), best.2);
        }
        (best.1, best.2)
    }
}

/// Rolls a kinematic unicycle forward at fixed `dt`, steering toward a
/// lookahead point on the path with curvature `2 sin(alpha) / L_d`. Once the
/// path end is passed the obstacle keeps its heading.
pub fn pure_pursuit_rollout(
    obstacle: &ObstacleState,
    path: &[(f64, f64)],
    end_heading: f64,
    horizon: f64,
    dt: f64,
    params: &PredictionParams,
) -> Vec<PredictedPoint> {
    let line = PathLine::new(path.to_vec(), end_heading);
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let (v0, a0, cap) = (obstacle.speed, obstacle.accel, params.speed_cap);
    let (mut x, mut y, mut theta) = (obstacle.x, obstacle.y, wrap_angle(obstacle.yaw));
    let mut seg = 0;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(PredictedPoint {
        t: 0.0,
        x,
        y,
        theta,
        v: clamped_speed(v0, a0, cap, 0.0),
    });
    for k in 0..steps {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let ds = clamped_distance(v0, a0, cap, t1) - clamped_distance(v0, a0, cap, t0);
        let (s_here, at_seg) = line.project(x, y, seg);
        seg = at_seg;
        let kappa = if s_here >= line.length() - 1e-9 {
            0.0
        } else {
            let speed = clamped_speed(v0, a0, cap, t0);
            let (tx, ty) = line.point_at(s_here + params.lookahead(speed));
            let (dx, dy) = (tx - x, ty - y);
            let dist = dx.hypot(dy);
            if dist > 1e-9 {
                let alpha = wrap_angle(dy.atan2(dx) - theta);
                2.0 * alpha.sin() / dist
            } else {
                0.0
            }
        };
        // Exact arc for constant curvature over the step.
        let dtheta = kappa * ds;
        if dtheta.abs() < 1e-9 {
            x += ds * theta.cos();
            y += ds * theta.sin();
        } else {
            x += ((theta + dtheta).sin() - theta.sin()) / kappa;
            y -= ((theta + dtheta).cos() - theta.cos()) / kappa;
        }
        theta = wrap_angle(theta + dtheta);
        points.push(PredictedPoint {
            t: t1,
            x,
            y,
            theta,
            v: clamped_speed(v0, a0, cap, t1),
        });
    }
    points
}

/// Straight-line constant-heading prediction under the clamped speed law.
pub fn straight_prediction(obstacle: &ObstacleState, horizon: f64, dt: f64, cap: f64) -> Vec<PredictedPoint> {
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let (c, s) = (obstacle.yaw.cos(), obstacle.yaw.sin());
    (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let d = clamped_distance(obstacle.speed, obstacle.accel, cap, t);
            PredictedPoint {
                t,
                x: obstacle.x + d * c,
                y: obstacle.y + d * s,
                theta: wrap_angle(obstacle.yaw),
                v: clamped_speed(obstacle.speed, obstacle.accel, cap, t),
            }
        })
        .collect()
}

/// Predictions for every obstacle, ordered by obstacle id and then by path
/// order. Vehicles follow graph paths; pedestrians, static layout and
/// vehicles far from the graph move straight.
pub fn predict_all(
    obstacles: &[ObstacleState],
    graph: &RoadGraph,
    params: &PredictionParams,
) -> Vec<PredictedTrajectory> {
    let mut sorted: Vec<&ObstacleState> = obstacles.iter().collect();
    sorted.sort_by_key(|o| o.id);
    let (h, dt, cap) = (params.horizon, params.dt, params.speed_cap);
    let mut out = Vec::new();
    for o in sorted {
        let straight = |o: &ObstacleState| PredictedTrajectory {
            obstacle: o.id,
            path: None,
            shape: o.shape(),
            dt,
            points: straight_prediction(o, h, dt, cap),
        };
        if o.kind != ObstacleKind::Vehicle {
            out.push(straight(o));
            continue;
        }
        let desired = clamped_distance(o.speed, o.accel, cap, h);
        if desired <= 0.0 {
            out.push(straight(o));
            continue;
        }
        let Some(start) = graph.nearest_aligned(o.x, o.y, o.yaw, params.max_graph_distance) else {
            out.push(straight(o));
            continue;
        };
        let paths = graph.extract_paths(start, desired, params.tolerance());
        if paths.is_empty() {
            out.push(straight(o));
            continue;
        }
        for (i, p) in paths.iter().enumerate() {
            let end_heading = graph.node(*p.nodes.last().unwrap()).heading;
            out.push(PredictedTrajectory {
                obstacle: o.id,
                path: Some(i),
                shape: o.shape(),
                dt,
                points: pure_pursuit_rollout(o, &graph.polyline(p), end_heading, h, dt, params),
            });
        }
    }
    out
}
