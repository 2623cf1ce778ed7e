//! Closed-loop simulation: perceive, localize, predict, pick a mode, plan,
//! step the world and score the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use urbandrive_core::collision::BodyShape;
use urbandrive_core::frenet::{FrenetState, ReferenceLine, Trajectory};
use urbandrive_core::localization::{estimate_to_frenet, FilterParams, GeoOrigin, Localizer, NavSignals};
use urbandrive_core::map::{ControlKind, SignalState, TrafficControl, WorldMap};
use urbandrive_core::planner::{LonPrediction, Mode, ModeInputs, Plan, Planner, TickError};
use urbandrive_core::polynomial::BoundaryState;
use urbandrive_core::prediction::{predict_all, ObstacleKind, ObstacleState, PredictedTrajectory, RoadGraph};
use urbandrive_core::scalar::wrap_angle;

use crate::agents::ScriptedAgent;
use crate::config::RunConfig;
use crate::infractions::{crossed_line, footprints_overlap, Footprint, InfractionEvent, InfractionKind, InfractionLog};
use crate::metrics::{compute_metrics, MetricsReport, Termination};
use crate::scenario::Scenario;
use crate::SimError;

/// True ego state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
    pub kappa: f64,
    pub s: f64,
    pub d: f64,
}

/// A traffic control as reported by perception.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficControlObservation {
    pub id: u32,
    /// Stop line position in the ego body frame.
    pub body_position: (f64, f64),
    pub state: SignalState,
    /// Stop line arc length along the ego reference.
    pub stop_line_s: f64,
}

/// One row of the trajectory log, written once per planning tick.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
    pub s: f64,
    pub d: f64,
    pub selected_cost: Option<f64>,
    pub n_candidates: usize,
    pub n_collision_free: usize,
    pub mode: String,
}

pub const LOG_HEADER: [&str; 12] = [
    "t",
    "x",
    "y",
    "theta",
    "v",
    "a",
    "s",
    "d",
    "selected_cost",
    "n_candidates",
    "n_collision_free",
    "mode",
];

impl LogRow {
    pub fn fields(&self) -> [String; 12] {
        let f = |v: f64| format!("{v:.6}");
        [
            f(self.t),
            f(self.x),
            f(self.y),
            f(self.theta),
            f(self.v),
            f(self.a),
            f(self.s),
            f(self.d),
            self.selected_cost.map(f).unwrap_or_default(),
            self.n_candidates.to_string(),
            self.n_collision_free.to_string(),
            self.mode.clone(),
        ]
    }
}

/// Writes the log as CSV with the fixed header.
pub fn write_log<W: std::io::Write>(rows: &[LogRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SimError::Io {
        path: "trajectory log".into(),
        message: e.to_string(),
    };
    w.write_record(LOG_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Io {
        path: "trajectory log".into(),
        message: e.to_string(),
    })
}

/// What happened on one planning tick.
#[derive(Debug, Clone)]
pub struct PlanningTick {
    pub row: LogRow,
    pub plan: Option<Plan>,
    pub predictions: Vec<PredictedTrajectory>,
}

#[derive(Debug, Clone)]
enum Command {
    Follow { trajectory: Box<Trajectory<f64>>, started: f64 },
    /// Constant deceleration along the reference, holding the lateral offset.
    Brake { decel: f64 },
}

#[derive(Debug, Clone)]
struct RouteControl {
    control: TrafficControl,
    line_s: f64,
    position: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
enum ConstraintKind {
    RedLight,
    YellowLight,
    StopSign,
    StoppedLead,
    MovingLead,
    Pedestrian,
    Merge,
}

pub struct Simulation {
    config: RunConfig,
    scenario: Scenario,
    reference: ReferenceLine<f64>,
    graph: RoadGraph,
    planner: Planner,
    agents: Vec<ScriptedAgent>,
    controls: Vec<RouteControl>,
    merge_zones: Vec<(f64, f64)>,
    lane_half_width: f64,
    origin: GeoOrigin,
    localizer: Localizer,
    perception_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
    time: f64,
    step: usize,
    ego: EgoState,
    command: Option<Command>,
    s_start: f64,
    s_goal: f64,
    progress: f64,
    distance_driven: f64,
    infractions: InfractionLog,
    termination: Option<Termination>,
    engaged: BTreeSet<u32>,
    cleared_stop_signs: BTreeSet<u32>,
    rows: Vec<LogRow>,
}

impl Simulation {
    pub fn new(scenario: Scenario, map: WorldMap, mut config: RunConfig, seed: u64) -> Result<Self, SimError> {
        if let Some(s) = scenario.sensing {
            config.sensing = s;
        }
        config.validate()?;
        let b = config.behavior;
        let mut waypoints = map.route_waypoints();
        if waypoints.len() < 2 {
            return Err(SimError::Scenario("route has fewer than two distinct points".into()));
        }
        // Straight extension so planning horizons never run off the route end.
        let n = waypoints.len();
        let (p, q) = (waypoints[n - 2], waypoints[n - 1]);
        let len = (q.0 - p.0).hypot(q.1 - p.1);
        let dir = ((q.0 - p.0) / len, (q.1 - p.1) / len);
        waypoints.push((q.0 + dir.0 * b.reference_extension, q.1 + dir.1 * b.reference_extension));
        let reference = ReferenceLine::build(&waypoints, b.reference_spacing)
            .map_err(|e| SimError::Scenario(format!("route reference: {e}")))?;
        let graph = RoadGraph::build(&map, config.prediction.ds).map_err(|e| SimError::Scenario(e.to_string()))?;
        let planner = Planner::new(config.planner).map_err(|e| SimError::Config(e.to_string()))?;

        let mut controls = Vec::new();
        for c in &map.traffic_controls {
            if !map.route.roads.contains(&c.road_id) {
                continue;
            }
            let road = map.road(c.road_id).expect("validated map");
            let pts: Vec<(f64, f64)> = road.waypoints.iter().map(|w| (w[0], w[1])).collect();
            let line = ReferenceLine::build(&pts, b.reference_spacing)
                .map_err(|e| SimError::Scenario(format!("road {}: {e}", road.id)))?;
            let p = line.point_at(c.s);
            controls.push(RouteControl {
                control: c.clone(),
                line_s: reference.project(p.x, p.y),
                position: (p.x, p.y),
            });
        }
        controls.sort_by(|a, b| a.line_s.total_cmp(&b.line_s).then(a.control.id.cmp(&b.control.id)));
        let merge_zones = scenario
            .merge_zones
            .iter()
            .map(|z| {
                let a = reference.project(z.start[0], z.start[1]);
                let b = reference.project(z.end[0], z.end[1]);
                (a.min(b), a.max(b))
            })
            .collect();
        let lane_half_width = map
            .road(map.route.roads[0])
            .map(|r| r.lane_width / 2.0)
            .unwrap_or(1.75);

        let start = map.route.start;
        let ego_f = reference
            .cartesian_to_frenet(start.x, start.y, start.yaw, scenario.ego.initial_speed, 0.0)
            .map_err(|e| SimError::Scenario(format!("start pose: {e}")))?;
        let s_goal = reference.project(map.route.goal.x, map.route.goal.y);
        let ego = EgoState {
            x: start.x,
            y: start.y,
            theta: wrap_angle(start.yaw),
            v: scenario.ego.initial_speed,
            a: 0.0,
            kappa: reference.point_at(ego_f.s).curvature,
            s: ego_f.s,
            d: ego_f.d,
        };

        let s = &config.sensing;
        let filter = FilterParams {
            gnss_sigma: s.gnss_sigma.max(1e-3),
            compass_sigma: s.compass_sigma.max(1e-4),
            ..config.filter
        };
        let origin = GeoOrigin::default();
        let mut localizer = Localizer::new(filter, origin);
        let mut init = filter.initial_estimate(ego.x, ego.y, ego.theta);
        init.state[3] = ego.v;
        localizer.reset(init);

        let mut perception_rng = ChaCha8Rng::seed_from_u64(seed);
        perception_rng.set_stream(1);
        let mut sensor_rng = ChaCha8Rng::seed_from_u64(seed);
        sensor_rng.set_stream(2);

        Ok(Self {
            agents: scenario.obstacles.iter().map(ScriptedAgent::new).collect(),
            infractions: InfractionLog::new(config.infractions),
            config,
            scenario,
            reference,
            graph,
            planner,
            controls,
            merge_zones,
            lane_half_width,
            origin,
            localizer,
            perception_rng,
            sensor_rng,
            time: 0.0,
            step: 0,
            s_start: ego_f.s,
            s_goal,
            progress: 0.0,
            distance_driven: 0.0,
            ego,
            command: None,
            termination: None,
            engaged: BTreeSet::new(),
            cleared_stop_signs: BTreeSet::new(),
            rows: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn ego(&self) -> &EgoState {
        &self.ego
    }

    pub fn reference(&self) -> &ReferenceLine<f64> {
        &self.reference
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn events(&self) -> &[InfractionEvent] {
        self.infractions.events()
    }

    pub fn ego_dims(&self) -> (f64, f64) {
        (self.scenario.ego.width, self.scenario.ego.length)
    }

    /// Arc length of the goal along the ego reference.
    pub fn goal_s(&self) -> f64 {
        self.s_goal
    }

    /// Stop line positions of the traffic controls on the route, by id.
    pub fn stop_lines(&self) -> Vec<(u32, f64)> {
        self.controls.iter().map(|c| (c.control.id, c.line_s)).collect()
    }

    /// True states of all spawned agents at the current time.
    pub fn agent_states(&self) -> Vec<ObstacleState> {
        self.agents.iter().filter_map(|a| a.state_at(self.time)).collect()
    }

    fn ego_shape(&self) -> BodyShape<f64> {
        BodyShape::Rectangle {
            width: self.scenario.ego.width,
            length: self.scenario.ego.length,
        }
    }

    fn perceive(&mut self) -> (Vec<ObstacleState>, Vec<TrafficControlObservation>) {
        let s = self.config.sensing;
        let mut obstacles = Vec::new();
        for a in &self.agents {
            let Some(mut o) = a.state_at(self.time) else { continue };
            if (o.x - self.ego.x).hypot(o.y - self.ego.y) > s.radius {
                continue;
            }
            if s.dropout > 0.0 && self.perception_rng.random::<f64>() < s.dropout {
                continue;
            }
            if s.position_sigma > 0.0 {
                let n = Normal::new(0.0, s.position_sigma).expect("valid sigma");
                o.x += n.sample(&mut self.perception_rng);
                o.y += n.sample(&mut self.perception_rng);
            }
            if s.velocity_sigma > 0.0 {
                let n = Normal::new(0.0, s.velocity_sigma).expect("valid sigma");
                o.speed = (o.speed + n.sample(&mut self.perception_rng)).max(0.0);
            }
            obstacles.push(o);
        }
        let front = self.ego.s + self.scenario.ego.length / 2.0;
        let (c, sn) = (self.ego.theta.cos(), self.ego.theta.sin());
        let controls = self
            .controls
            .iter()
            .filter(|rc| rc.line_s >= front - 1e-6 && rc.line_s - front <= s.detection_range)
            .map(|rc| {
                let (dx, dy) = (rc.position.0 - self.ego.x, rc.position.1 - self.ego.y);
                TrafficControlObservation {
                    id: rc.control.id,
                    body_position: (dx * c + dy * sn, -dx * sn + dy * c),
                    state: rc.control.state_at(self.time),
                    stop_line_s: rc.line_s,
                }
            })
            .collect();
        (obstacles, controls)
    }

    fn sense(&mut self) -> NavSignals {
        let s = self.config.sensing;
        let gauss = |sigma: f64, rng: &mut ChaCha8Rng| {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
            } else {
                0.0
            }
        };
        let nx = gauss(s.gnss_sigma, &mut self.sensor_rng);
        let ny = gauss(s.gnss_sigma, &mut self.sensor_rng);
        let (lat, lon) = self.origin.to_geodetic(self.ego.x + nx, self.ego.y + ny);
        let compass = wrap_angle(self.ego.theta + gauss(s.compass_sigma, &mut self.sensor_rng));
        let yaw_rate = self.ego.v * self.ego.kappa + gauss(s.imu_sigma, &mut self.sensor_rng);
        let accel = self.ego.a + gauss(s.imu_sigma, &mut self.sensor_rng);
        NavSignals {
            lat,
            lon,
            alt: 0.0,
            angular_velocity: [0.0, 0.0, yaw_rate],
            linear_acceleration: [accel, 0.0, 0.0],
            compass,
        }
    }

    /// Planning start state: the previous plan at the current time when it
    /// agrees with the estimate, otherwise the estimate itself.
    fn start_state(&self) -> Result<FrenetState<f64>, SimError> {
        let est = *self.localizer.estimate().expect("initialized");
        if let Some(Command::Follow { trajectory, started }) = &self.command {
            let tau = self.time - started;
            let lat = trajectory.lateral.eval_held(tau);
            let lon = trajectory.longitudinal.eval_held(tau);
            let planned = FrenetState {
                s: lon.pos,
                s_dot: lon.vel,
                s_ddot: lon.acc,
                d: lat.pos,
                d_dot: lat.vel,
                d_ddot: lat.acc,
            };
            if let Ok(c) = self.reference.frenet_to_cartesian(&planned) {
                if (c.x - est.x()).hypot(c.y - est.y()) <= self.config.behavior.replan_tolerance {
                    return Ok(planned);
                }
            }
        }
        let mut f = estimate_to_frenet(&est, &self.reference).map_err(|e| SimError::Scenario(format!("localization: {e}")))?;
        f.s_dot = f.s_dot.max(0.0);
        Ok(f)
    }

    /// Longitudinal prediction of an obstacle along the ego reference,
    /// as the position its rear bumper allows the ego center to reach.
    fn lon_prediction(&self, obstacle: &ObstacleState, predictions: &[PredictedTrajectory]) -> LonPrediction {
        let offset = obstacle.length / 2.0 + self.scenario.ego.length / 2.0;
        let mut best: Option<(f64, &PredictedTrajectory)> = None;
        for p in predictions.iter().filter(|p| p.obstacle == obstacle.id) {
            let mean_d = p
                .points
                .iter()
                .map(|q| {
                    let s = self.reference.project(q.x, q.y);
                    let r = self.reference.point_at(s);
                    (q.x - r.x).hypot(q.y - r.y)
                })
                .sum::<f64>()
                / p.points.len() as f64;
            if best.is_none_or(|(b, _)| mean_d < b) {
                best = Some((mean_d, p));
            }
        }
        let accel = if obstacle.speed > 0.0 { obstacle.accel } else { 0.0 };
        match best {
            Some((_, p)) => LonPrediction::from_samples(
                p.points
                    .iter()
                    .map(|q| {
                        let f = self
                            .reference
                            .cartesian_to_frenet(q.x, q.y, q.theta, q.v, 0.0)
                            .unwrap_or_default();
                        let a = if q.v > 0.0 { accel } else { 0.0 };
                        (q.t, BoundaryState::new(f.s - offset, f.s_dot.max(0.0), a))
                    })
                    .collect(),
            ),
            None => {
                let s = self.reference.project(obstacle.x, obstacle.y);
                LonPrediction::constant_acceleration(BoundaryState::new(s - offset, obstacle.speed, accel))
            }
        }
    }

    /// Distance to a stop point within which stopping is engaged.
    fn engage_distance(&self, v: f64) -> f64 {
        0.5 * v * self.config.planner.grid.t_max + 2.0
    }

    /// Ordered mode attempts for this tick; an empty result after all
    /// attempts fail means an emergency stop.
    fn mode_ladder(
        &mut self,
        ego: &FrenetState<f64>,
        obstacles: &[ObstacleState],
        controls: &[TrafficControlObservation],
        predictions: &[PredictedTrajectory],
    ) -> (Vec<ModeInputs>, Option<ConstraintKind>) {
        let b = self.config.behavior;
        let half_len = self.scenario.ego.length / 2.0;
        let front = ego.s + half_len;
        let v = ego.s_dot.max(0.0);
        let d0 = self.config.planner.following.standstill_gap;
        let target_speed = self.scenario.target_speed.min(self.config.planner.limits.speed_max);
        let mut constraints: Vec<(f64, ConstraintKind, Vec<ModeInputs>)> = Vec::new();

        if let Some(c) = controls.first() {
            let stop_at = c.stop_line_s - half_len - b.stop_line_margin;
            let near = stop_at - ego.s <= self.engage_distance(v) || self.engaged.contains(&c.id);
            let stopping = ModeInputs::Stopping { stop_at };
            match c.state {
                SignalState::Green => {
                    self.engaged.remove(&c.id);
                }
                SignalState::Red if near => {
                    self.engaged.insert(c.id);
                    constraints.push((stop_at, ConstraintKind::RedLight, vec![stopping]));
                }
                SignalState::Yellow if near => {
                    let braking = v * v / (2.0 * b.comfortable_decel);
                    if self.engaged.contains(&c.id) || braking <= c.stop_line_s - front {
                        self.engaged.insert(c.id);
                        constraints.push((
                            stop_at,
                            ConstraintKind::YellowLight,
                            vec![stopping, ModeInputs::VelocityKeeping { target_speed }],
                        ));
                    }
                }
                SignalState::StopSign if !self.cleared_stop_signs.contains(&c.id) => {
                    if v < 0.1 && c.stop_line_s - front <= b.stop_sign_distance {
                        self.cleared_stop_signs.insert(c.id);
                    } else if near {
                        self.engaged.insert(c.id);
                        constraints.push((stop_at, ConstraintKind::StopSign, vec![stopping]));
                    }
                }
                _ => {}
            }
        }

        // Nearest vehicle or layout obstacle ahead in the ego lane.
        let mut lead: Option<(f64, &ObstacleState)> = None;
        let mut behind: Option<(f64, &ObstacleState)> = None;
        for o in obstacles.iter().filter(|o| o.kind != ObstacleKind::Pedestrian) {
            let Ok(f) = self.reference.cartesian_to_frenet(o.x, o.y, o.yaw, o.speed, 0.0) else {
                continue;
            };
            if f.d.abs() > self.lane_half_width {
                continue;
            }
            if f.s > ego.s {
                if lead.is_none_or(|(s, _)| f.s < s) {
                    lead = Some((f.s, o));
                }
            } else if behind.is_none_or(|(s, _)| f.s > s) {
                behind = Some((f.s, o));
            }
        }

        let in_merge = self.merge_zones.iter().any(|(a, z)| ego.s >= *a && ego.s <= *z);
        if let (true, Some((_, pv)), Some((_, fv))) = (in_merge, lead, behind) {
            let preceding = self.lon_prediction(pv, predictions);
            let following = self.lon_prediction(fv, predictions);
            let stop = preceding.at(0.0).pos - d0;
            constraints.push((
                stop,
                ConstraintKind::Merge,
                vec![
                    ModeInputs::Merging { preceding, following },
                    ModeInputs::VelocityKeeping { target_speed },
                ],
            ));
        } else if let Some((_, o)) = lead {
            let lead_pred = self.lon_prediction(o, predictions);
            let now = lead_pred.at(0.0);
            let stop_at = now.pos - d0;
            if o.speed < b.stopped_speed {
                if stop_at - ego.s <= self.engage_distance(v) + d0 {
                    constraints.push((
                        stop_at,
                        ConstraintKind::StoppedLead,
                        vec![ModeInputs::Stopping { stop_at }, ModeInputs::VelocityKeeping { target_speed }],
                    ));
                }
            } else {
                let gap = now.pos - ego.s;
                let params = self.config.planner.following;
                let close = gap <= params.standstill_gap + params.time_gap * v + v * self.config.planner.grid.t_max;
                if o.speed < target_speed || close {
                    constraints.push((
                        stop_at,
                        ConstraintKind::MovingLead,
                        vec![
                            ModeInputs::Following { lead: lead_pred },
                            ModeInputs::Stopping { stop_at },
                            ModeInputs::VelocityKeeping { target_speed },
                        ],
                    ));
                }
            }
        }

        // Pedestrians predicted to enter the ego corridor ahead.
        let corridor = self.scenario.ego.width / 2.0 + b.pedestrian_corridor;
        for o in obstacles.iter().filter(|o| o.kind == ObstacleKind::Pedestrian) {
            let radius = 0.5 * o.width.hypot(o.length);
            let mut entry: Option<f64> = None;
            for p in predictions.iter().filter(|p| p.obstacle == o.id) {
                for q in &p.points {
                    let s = self.reference.project(q.x, q.y);
                    let r = self.reference.point_at(s);
                    let d = -(q.x - r.x) * r.heading.sin() + (q.y - r.y) * r.heading.cos();
                    if d.abs() <= corridor + radius && s + radius > front {
                        entry = Some(entry.map_or(s, |e: f64| e.min(s)));
                    }
                }
            }
            if let Some(s) = entry {
                let stop_at = s - radius - half_len - b.pedestrian_margin;
                if stop_at - ego.s <= self.engage_distance(v) + b.pedestrian_margin {
                    constraints.push((
                        stop_at,
                        ConstraintKind::Pedestrian,
                        vec![ModeInputs::Stopping { stop_at }, ModeInputs::VelocityKeeping { target_speed }],
                    ));
                }
            }
        }

        constraints.sort_by(|a, b| a.0.total_cmp(&b.0));
        match constraints.into_iter().next() {
            Some((_, kind, chain)) => (chain, Some(kind)),
            None => (vec![ModeInputs::VelocityKeeping { target_speed }], None),
        }
    }

    /// Runs perception, localization, prediction, the mode ladder and the
    /// planner, and installs the resulting command.
    fn plan(&mut self) -> Result<PlanningTick, SimError> {
        let (obstacles, controls) = self.perceive();
        let start = self.start_state()?;
        let predictions = predict_all(&obstacles, &self.graph, &self.config.prediction);
        let (chain, _) = self.mode_ladder(&start, &obstacles, &controls, &predictions);
        let shape = self.ego_shape();
        let mut chosen: Option<Plan> = None;
        let mut last_stats = None;
        for inputs in &chain {
            match self.planner.plan_tick(&start, inputs, &self.reference, &predictions, shape) {
                Ok(plan) => {
                    chosen = Some(plan);
                    break;
                }
                Err(TickError::NoFeasible(_, stats)) => last_stats = Some(stats),
                Err(TickError::Plan(_)) => {}
            }
        }
        let (cost, n_candidates, n_free, mode) = match &chosen {
            Some(p) => (
                Some(p.selected.cost()),
                p.stats.candidates,
                p.stats.collision_free,
                p.mode.as_str().to_string(),
            ),
            None => (
                None,
                last_stats.map_or(0, |s| s.candidates),
                0,
                self.fallback_decel(&start, &chain).1.to_string(),
            ),
        };
        self.command = Some(match &chosen {
            Some(p) => Command::Follow {
                trajectory: Box::new(p.selected.trajectory.clone()),
                started: self.time,
            },
            None => Command::Brake {
                decel: self.fallback_decel(&start, &chain).0,
            },
        });
        let row = LogRow {
            t: self.time,
            x: self.ego.x,
            y: self.ego.y,
            theta: self.ego.theta,
            v: self.ego.v,
            a: self.ego.a,
            s: self.ego.s,
            d: self.ego.d,
            selected_cost: cost,
            n_candidates,
            n_collision_free: n_free,
            mode,
        };
        self.rows.push(row.clone());
        Ok(PlanningTick {
            row,
            plan: chosen,
            predictions,
        })
    }

    /// Deceleration used when no mode produced a trajectory: a stop that
    /// lands on the stop point if one is ahead, holding if already there,
    /// otherwise full braking.
    fn fallback_decel(&self, start: &FrenetState<f64>, chain: &[ModeInputs]) -> (f64, &'static str) {
        let a_max = self.config.planner.limits.accel_max;
        if let Some(ModeInputs::Stopping { stop_at }) = chain.first() {
            let gap = stop_at - start.s;
            let v = start.s_dot.max(0.0);
            if gap > 0.05 {
                let need = v * v / (2.0 * gap);
                if need <= a_max {
                    return (need, "brake");
                }
            } else if v < self.config.behavior.stopped_speed {
                return (a_max, "hold");
            }
        }
        (a_max, "emergency_stop")
    }

    fn advance_ego(&mut self, dt: f64) {
        let next_time = self.time + dt;
        match &self.command {
            Some(Command::Follow { trajectory, started }) => {
                if let Some(p) = trajectory.sample(next_time - started) {
                    self.ego = EgoState {
                        x: p.x,
                        y: p.y,
                        theta: p.theta,
                        v: p.v,
                        a: p.a,
                        kappa: p.kappa,
                        s: p.s,
                        d: p.d,
                    };
                }
            }
            Some(Command::Brake { decel }) => {
                let v0 = self.ego.v;
                let decel = *decel;
                let v1 = (v0 - decel * dt).max(0.0);
                let moved = if v0 > 0.0 {
                    let t_stop = (v0 / decel).min(dt);
                    v0 * t_stop - 0.5 * decel * t_stop * t_stop
                } else {
                    0.0
                };
                let s = (self.ego.s + moved).min(self.reference.total_length());
                let f = FrenetState {
                    s,
                    s_dot: v1,
                    d: self.ego.d,
                    ..Default::default()
                };
                if let Ok(c) = self.reference.frenet_to_cartesian(&f) {
                    self.ego = EgoState {
                        x: c.x,
                        y: c.y,
                        theta: c.theta,
                        v: v1,
                        a: if v0 > 0.0 { -decel } else { 0.0 },
                        kappa: c.kappa,
                        s,
                        d: self.ego.d,
                    };
                }
            }
            None => {}
        }
    }

    fn detect_infractions(&mut self, prev_front: f64) {
        let t = self.time;
        let (w, l) = self.ego_dims();
        let ego_fp = Footprint {
            x: self.ego.x,
            y: self.ego.y,
            yaw: self.ego.theta,
            width: w,
            length: l,
        };
        let position = [self.ego.x, self.ego.y];
        for a in &self.agents {
            let Some(o) = a.state_at(t) else { continue };
            let fp = Footprint {
                x: o.x,
                y: o.y,
                yaw: o.yaw,
                width: o.width,
                length: o.length,
            };
            if footprints_overlap(&ego_fp, &fp) {
                let kind = match o.kind {
                    ObstacleKind::Pedestrian => InfractionKind::CollisionPedestrian,
                    ObstacleKind::Vehicle => InfractionKind::CollisionVehicle,
                    ObstacleKind::Layout => InfractionKind::CollisionLayout,
                };
                self.infractions.record(InfractionEvent {
                    kind,
                    time: t,
                    position,
                    counterpart: Some(o.id),
                });
                self.termination.get_or_insert(Termination::CollisionStop);
            }
        }
        let front = self.ego.s + l / 2.0;
        for rc in &self.controls {
            if rc.control.kind == ControlKind::Light
                && rc.control.state_at(t) == SignalState::Red
                && crossed_line(prev_front, front, rc.line_s)
            {
                self.infractions.record(InfractionEvent {
                    kind: InfractionKind::RedLight,
                    time: t,
                    position,
                    counterpart: Some(rc.control.id),
                });
            }
        }
        if self.infractions.deviated(self.ego.d) {
            self.infractions.record(InfractionEvent {
                kind: InfractionKind::RouteDeviation,
                time: t,
                position,
                counterpart: None,
            });
            self.termination.get_or_insert(Termination::RouteDeviation);
        }
        if self.infractions.update_blocked(t, self.ego.v) {
            self.infractions.record(InfractionEvent {
                kind: InfractionKind::AgentBlocked,
                time: t,
                position,
                counterpart: None,
            });
            self.termination.get_or_insert(Termination::Blocked);
        }
    }

    /// Advances one simulation step. Returns the planning record when this
    /// step was a planning tick.
    pub fn tick(&mut self) -> Result<Option<PlanningTick>, SimError> {
        if self.termination.is_some() {
            return Ok(None);
        }
        let dt = self.config.dt;
        if self.step > 0 {
            let signals = self.sense();
            self.localizer.step(&signals, dt);
        }
        let planning = if self.step.is_multiple_of(self.config.replan_every()) {
            Some(self.plan()?)
        } else {
            None
        };
        let prev = self.ego;
        let prev_front = prev.s + self.scenario.ego.length / 2.0;
        self.advance_ego(dt);
        self.step += 1;
        self.time = self.step as f64 * dt;
        self.distance_driven += (self.ego.x - prev.x).hypot(self.ego.y - prev.y);
        self.progress = self.progress.max(self.ego.s - self.s_start);
        self.detect_infractions(prev_front);
        if self.termination.is_none() {
            if self.ego.s >= self.s_goal - self.config.behavior.goal_tolerance {
                self.termination = Some(Termination::Goal);
            } else if self.time >= self.scenario.time_limit - 1e-9 {
                self.termination = Some(Termination::Timeout);
            }
        }
        Ok(planning)
    }

    pub fn report(&self) -> MetricsReport {
        let route_length = (self.s_goal - self.s_start).max(0.0);
        let completed = if self.termination == Some(Termination::Goal) {
            route_length
        } else {
            self.progress.clamp(0.0, route_length)
        };
        compute_metrics(
            route_length,
            completed,
            self.infractions.events().to_vec(),
            &self.config.coefficients,
            self.termination.unwrap_or(Termination::Timeout),
            self.distance_driven,
            self.time,
        )
    }

    /// Runs to termination.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while self.termination.is_none() {
            self.tick()?;
        }
        Ok(RunOutput {
            report: self.report(),
            rows: self.rows,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub rows: Vec<LogRow>,
}

/// Loads nothing; runs an already parsed scenario to completion.
pub fn run_scenario(scenario: Scenario, map: WorldMap, config: RunConfig, seed: u64) -> Result<RunOutput, SimError> {
    Simulation::new(scenario, map, config, seed)?.run()
}

/// Mode label used in logs.
pub fn mode_label(mode: Mode) -> &'static str {
    mode.as_str()
}
